#include "hamlearn/multistage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hamlearn/binary_io.hpp"
#include "hamlearn/errors.hpp"

namespace hamlearn {

namespace {

constexpr char kPredictorMagic[8] = {'H', 'L', 'P', 'R', 'E', 'D', '\0', '\1'};
constexpr std::uint32_t kPredictorVersion = 1;

// acc += eps * out, elementwise in storage order. Both the incremental
// pipeline bookkeeping and compose() go through here so they agree bitwise.
void accumulate(nn::Matrix& acc, double eps, const nn::Matrix& out) {
  const Eigen::Index n = acc.size();
  double* a = acc.data();
  const double* o = out.data();
  for (Eigen::Index i = 0; i < n; ++i) a[i] += eps * o[i];
}

nn::Matrix scaled(const nn::Matrix& m, double eps) {
  nn::Matrix out = m;
  if (eps != 1.0) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] /= eps;
  }
  return out;
}

std::span<const double> col_span(const nn::Matrix& m, Eigen::Index c) {
  return {m.col(c).data(), static_cast<std::size_t>(m.rows())};
}

// Composed predictions of the current predictor on one split.
struct SplitCache {
  const Dataset* ds = nullptr;
  nn::Matrix truth;
  nn::Matrix composed;
};

SplitCache make_cache(const MultiStagePredictor& predictor, const Dataset& ds) {
  SplitCache c;
  c.ds = &ds;
  c.truth = theta_matrix(ds);
  c.composed = predict_all(predictor, ds);
  return c;
}

std::pair<StageModel, StageReport> train_stage_cached(const MultiStagePredictor& predictor,
                                                      SplitCache& train, SplitCache& val,
                                                      const PipelineConfig& config,
                                                      const StageEpochCallback& on_epoch) {
  const int n = static_cast<int>(predictor.size());
  const nn::Matrix train_err = train.truth - train.composed;
  const nn::Matrix val_err = val.truth - val.composed;

  double eps = 1.0;
  if (n > 0) {
    eps = normalization_factor(train_err);
    if (!(eps > config.convergence_floor)) {
      throw Converged("residual RMS " + Table::num(eps) + " is at the convergence floor");
    }
  }
  const nn::Matrix train_targets = scaled(train_err, eps);
  const nn::Matrix val_targets = scaled(val_err, eps);

  const nn::SequenceSet train_view =
      sequence_view(*train.ds, {train_targets.data(), static_cast<std::size_t>(train_targets.size())});
  const nn::SequenceSet val_view =
      sequence_view(*val.ds, {val_targets.data(), static_cast<std::size_t>(val_targets.size())});

  nn::TrainConfig tc = config.train;
  tc.seed = derive_seed(config.train.seed, static_cast<std::uint64_t>(n));
  nn::FitResult fitted;
  try {
    fitted = nn::fit(train_view, val_view, config.architecture(predictor.meta), tc,
                     [&](const nn::EpochRecord& r) {
                       if (on_epoch) on_epoch(n, r);
                     });
  } catch (const DivergenceError& e) {
    throw DivergenceError(e.what(), n, e.epoch());
  }

  StageModel stage{n, std::move(fitted.net), eps};

  StageReport rep;
  rep.stage = n;
  rep.epsilon = eps;
  rep.target_rms = normalization_factor(train_targets);
  rep.best_epoch = fitted.best_epoch;
  rep.history = std::move(fitted.history);

  accumulate(train.composed, eps, nn::predict_all(stage.net, train_view));
  accumulate(val.composed, eps, nn::predict_all(stage.net, val_view));

  rep.train_fidelity = mean_fidelity(train.composed, train.truth);
  rep.val_fidelity = mean_fidelity(val.composed, val.truth);
  rep.next_epsilon = normalization_factor(train.truth - train.composed);
  column_stats(train.composed - train.truth, rep.train_error_mean, rep.train_error_std);
  column_stats(val.composed - val.truth, rep.val_error_mean, rep.val_error_std);
  return {std::move(stage), std::move(rep)};
}

} // namespace

// ---------------------------------------------------------------------------

void MultiStagePredictor::validate() const {
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const auto& s = stages[k];
    if (s.index != static_cast<int>(k)) throw std::invalid_argument("stage indices must run 0, 1, 2, ...");
    if (k == 0 && s.epsilon != 1.0) throw std::invalid_argument("stage 0 must have epsilon exactly 1");
    if (!(s.epsilon > 0.0) || !std::isfinite(s.epsilon)) throw std::invalid_argument("stage epsilon must be positive");
    if (s.net.arch().output_dim != static_cast<int>(meta.family.size())) {
      throw std::invalid_argument("stage output size does not match family");
    }
  }
}

void PipelineConfig::validate() const {
  train.validate();
  if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
  if (max_stages < 1) throw std::invalid_argument("max_stages must be >= 1");
  if (!(improvement_margin >= 0.0)) throw std::invalid_argument("improvement_margin must be >= 0");
  if (!(convergence_floor >= 0.0)) throw std::invalid_argument("convergence_floor must be >= 0");
  if (!(relative_error_guard >= 0.0)) throw std::invalid_argument("relative_error_guard must be >= 0");
}

nn::Architecture PipelineConfig::architecture(const DatasetMeta& meta) const {
  nn::Architecture a;
  a.input_dim = static_cast<int>(meta.initial_states.size()) * 3 * meta.family.n_qubits;
  a.hidden_dim = hidden_dim;
  a.fc_hidden = fc_hidden;
  a.output_dim = static_cast<int>(meta.family.size());
  return a;
}

void check_compatible(const MultiStagePredictor& predictor, const DatasetMeta& meta) {
  if (!same_source(predictor.meta, meta)) {
    throw MetadataMismatch("dataset (family " + meta.family.name + ", tau " + Table::num(meta.tau) +
                           ", S " + Table::num(meta.n_steps) +
                           ") does not match the predictor's family, sampling grid or initial states");
  }
}

nn::SequenceSet sequence_view(const Dataset& ds, std::span<const double> targets) {
  nn::SequenceSet s;
  s.observations = ds.observations;
  s.targets = targets;
  s.n_states = static_cast<int>(ds.meta.initial_states.size());
  s.n_steps = ds.meta.n_steps;
  s.features_per_state = 3 * ds.meta.family.n_qubits;
  s.target_dim = static_cast<int>(ds.theta_dim());
  if (targets.size() != ds.size() * ds.theta_dim()) throw std::invalid_argument("target count mismatch");
  return s;
}

std::vector<nn::Matrix> stage_outputs(const MultiStagePredictor& predictor, const Dataset& ds) {
  check_compatible(predictor, ds.meta);
  const nn::SequenceSet view = sequence_view(ds, ds.thetas);
  std::vector<nn::Matrix> out;
  out.reserve(predictor.size());
  for (const auto& s : predictor.stages) out.push_back(nn::predict_all(s.net, view));
  return out;
}

nn::Matrix compose(const MultiStagePredictor& predictor, const std::vector<nn::Matrix>& outputs,
                   int n_stages) {
  const std::size_t k = n_stages < 0 ? predictor.size() : static_cast<std::size_t>(n_stages);
  if (k > predictor.size() || k > outputs.size()) throw std::out_of_range("stage cutoff exceeds stage count");
  const Eigen::Index m = static_cast<Eigen::Index>(predictor.meta.family.size());
  const Eigen::Index n = outputs.empty() ? 0 : outputs.front().cols();
  nn::Matrix acc = nn::Matrix::Zero(m, n);
  for (std::size_t j = 0; j < k; ++j) accumulate(acc, predictor.stages[j].epsilon, outputs[j]);
  return acc;
}

nn::Matrix predict_all(const MultiStagePredictor& predictor, const Dataset& ds, int n_stages) {
  check_compatible(predictor, ds.meta);
  const std::size_t k = n_stages < 0 ? predictor.size() : static_cast<std::size_t>(n_stages);
  if (k > predictor.size()) throw std::out_of_range("stage cutoff exceeds stage count");
  const nn::SequenceSet view = sequence_view(ds, ds.thetas);
  nn::Matrix acc = nn::Matrix::Zero(static_cast<Eigen::Index>(ds.theta_dim()), static_cast<Eigen::Index>(ds.size()));
  for (std::size_t j = 0; j < k; ++j) {
    accumulate(acc, predictor.stages[j].epsilon, nn::predict_all(predictor.stages[j].net, view));
  }
  return acc;
}

std::vector<double> predict(const MultiStagePredictor& predictor, const ObservationSeries& series,
                            int n_stages) {
  const std::size_t k = n_stages < 0 ? predictor.size() : static_cast<std::size_t>(n_stages);
  if (k > predictor.size()) throw std::out_of_range("stage cutoff exceeds stage count");
  if (series.n_qubits != predictor.meta.family.n_qubits || series.n_steps != predictor.meta.n_steps ||
      series.n_states != static_cast<int>(predictor.meta.initial_states.size()) ||
      series.tau != predictor.meta.tau) {
    throw MetadataMismatch("series shape or sampling interval does not match the predictor");
  }
  const nn::SequenceBatch batch = nn::to_batch(series);
  nn::Matrix acc = nn::Matrix::Zero(static_cast<Eigen::Index>(predictor.meta.family.size()), 1);
  for (std::size_t j = 0; j < k; ++j) {
    accumulate(acc, predictor.stages[j].epsilon, nn::forward_batch(predictor.stages[j].net, batch));
  }
  return {acc.data(), acc.data() + acc.size()};
}

nn::Matrix theta_matrix(const Dataset& ds) {
  return Eigen::Map<const nn::Matrix>(ds.thetas.data(), static_cast<Eigen::Index>(ds.theta_dim()),
                                      static_cast<Eigen::Index>(ds.size()));
}

nn::Matrix residuals(const MultiStagePredictor& predictor, const Dataset& ds, int n_stages) {
  return theta_matrix(ds) - predict_all(predictor, ds, n_stages);
}

double normalization_factor(const nn::Matrix& errors) {
  if (errors.size() == 0) throw std::invalid_argument("normalization_factor: no errors");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < errors.size(); ++i) acc += errors.data()[i] * errors.data()[i];
  return std::sqrt(acc / static_cast<double>(errors.size()));
}

double fidelity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("fidelity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("fidelity: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double mean_fidelity(const nn::Matrix& pred, const nn::Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols() || pred.cols() == 0) {
    throw std::invalid_argument("mean_fidelity: shape mismatch");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pred.cols(); ++i) acc += fidelity(col_span(pred, i), col_span(truth, i));
  return acc / static_cast<double>(pred.cols());
}

double concatenated_fidelity(const nn::Matrix& pred, const nn::Matrix& truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("concatenated_fidelity: shape mismatch");
  return fidelity({pred.data(), static_cast<std::size_t>(pred.size())},
                  {truth.data(), static_cast<std::size_t>(truth.size())});
}

double relative_error(std::span<const double> theta_hat, std::span<const double> theta_true,
                      std::span<const std::size_t> group, double guard) {
  if (theta_hat.size() != theta_true.size()) throw std::invalid_argument("relative_error: length mismatch");
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t i : group) {
    if (i >= theta_true.size()) throw std::out_of_range("relative_error: index out of range");
    const double t = std::abs(theta_true[i]);
    if (t < guard) continue;
    acc += std::abs(theta_hat[i] - theta_true[i]) / t;
    ++used;
  }
  if (used == 0) throw std::invalid_argument("relative_error: group is empty after guard filtering");
  return acc / static_cast<double>(used);
}

void column_stats(const nn::Matrix& errors, std::vector<double>& mean, std::vector<double>& stddev) {
  const Eigen::Index m = errors.rows(), n = errors.cols();
  mean.assign(static_cast<std::size_t>(m), 0.0);
  stddev.assign(static_cast<std::size_t>(m), 0.0);
  if (n == 0) return;
  for (Eigen::Index r = 0; r < m; ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) s += errors(r, c);
    const double mu = s / static_cast<double>(n);
    double v = 0.0;
    for (Eigen::Index c = 0; c < n; ++c) v += (errors(r, c) - mu) * (errors(r, c) - mu);
    mean[static_cast<std::size_t>(r)] = mu;
    stddev[static_cast<std::size_t>(r)] = std::sqrt(v / static_cast<double>(n));
  }
}

std::pair<StageModel, StageReport> train_stage(const MultiStagePredictor& predictor, const Dataset& train,
                                               const Dataset& val, const PipelineConfig& config,
                                               const StageEpochCallback& on_epoch) {
  config.validate();
  predictor.validate();
  check_compatible(predictor, train.meta);
  check_compatible(predictor, val.meta);
  SplitCache tc = make_cache(predictor, train);
  SplitCache vc = make_cache(predictor, val);
  return train_stage_cached(predictor, tc, vc, config, on_epoch);
}

PipelineResult run_pipeline(const Dataset& train, const Dataset& val, const PipelineConfig& config,
                            const StageEpochCallback& on_epoch) {
  config.validate();
  if (train.size() == 0 || val.size() == 0) throw std::invalid_argument("pipeline needs non-empty splits");
  PipelineResult result;
  result.predictor.meta = train.meta;
  check_compatible(result.predictor, val.meta);

  SplitCache tc = make_cache(result.predictor, train);
  SplitCache vc = make_cache(result.predictor, val);
  result.stop_reason = "max_stages";
  for (int n = 0; n < config.max_stages; ++n) {
    try {
      auto [stage, report] = train_stage_cached(result.predictor, tc, vc, config, on_epoch);
      result.predictor.stages.push_back(std::move(stage));
      result.reports.push_back(std::move(report));
    } catch (const Converged&) {
      result.stop_reason = "converged";
      break;
    }
    if (n >= 1) {
      const double before = 1.0 - result.reports[static_cast<std::size_t>(n) - 1].val_fidelity;
      const double after = 1.0 - result.reports.back().val_fidelity;
      if (before - after < config.improvement_margin * before) {
        result.stop_reason = "improvement_below_margin";
        break;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string encode_predictor(const MultiStagePredictor& predictor) {
  predictor.validate();
  io::ByteWriter w;
  w.bytes(std::string_view(kPredictorMagic, sizeof kPredictorMagic));
  w.u32(kPredictorVersion);
  w.blob(meta_to_json(predictor.meta));
  w.u32(static_cast<std::uint32_t>(predictor.size()));
  for (const auto& s : predictor.stages) {
    w.u32(static_cast<std::uint32_t>(s.index));
    w.f64(s.epsilon);
    w.blob(nn::encode_checkpoint(s.net, false));
  }
  return io::seal(w.take());
}

MultiStagePredictor decode_predictor(std::string_view bytes) {
  if (bytes.size() < sizeof kPredictorMagic ||
      bytes.substr(0, sizeof kPredictorMagic) != std::string_view(kPredictorMagic, sizeof kPredictorMagic)) {
    throw FormatError("not a predictor bundle (bad magic)");
  }
  io::ByteReader r(io::unseal(bytes));
  r.bytes(sizeof kPredictorMagic);
  if (const auto v = r.u32(); v != kPredictorVersion) {
    throw FormatError("unsupported predictor version " + std::to_string(v));
  }
  MultiStagePredictor p;
  p.meta = meta_from_json(r.blob());
  const std::uint32_t n = r.u32();
  for (std::uint32_t k = 0; k < n; ++k) {
    StageModel s;
    s.index = static_cast<int>(r.u32());
    s.epsilon = r.f64();
    s.net = nn::decode_checkpoint(r.blob());
    p.stages.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in predictor bundle");
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid predictor bundle: ") + e.what());
  }
  return p;
}

void save_predictor(const MultiStagePredictor& predictor, const std::filesystem::path& path) {
  io::write_file(path, encode_predictor(predictor));
}

MultiStagePredictor load_predictor(const std::filesystem::path& path) {
  return decode_predictor(io::read_file(path));
}

Table loss_table(const std::vector<StageReport>& reports) {
  Table t("loss_history", {"stage", "epoch", "train_loss", "val_loss"});
  for (const auto& r : reports) {
    for (const auto& e : r.history) {
      t.add_row({Table::num(r.stage), Table::num(e.epoch), Table::num(e.train_loss), Table::num(e.val_loss)});
    }
  }
  return t;
}

Table stage_table(const std::vector<StageReport>& reports) {
  Table t("stage_summary", {"stage", "epsilon", "target_rms", "best_epoch", "train_fidelity", "val_fidelity",
                            "train_infidelity", "val_infidelity", "next_epsilon"});
  for (const auto& r : reports) {
    t.add_row({Table::num(r.stage), Table::num(r.epsilon), Table::num(r.target_rms), Table::num(r.best_epoch),
               Table::num(r.train_fidelity), Table::num(r.val_fidelity), Table::num(1.0 - r.train_fidelity),
               Table::num(1.0 - r.val_fidelity), Table::num(r.next_epsilon)});
  }
  return t;
}

} // namespace hamlearn
