#include "hamlearn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hamlearn/errors.hpp"
#include "parallel.hpp"

namespace hamlearn::analysis {

namespace {

constexpr std::size_t kFeatureBlock = 32;

// Equal-width bin indices over [min, max]. Returns false for a constant series.
bool bin_indices(std::span<const double> v, int bins, std::vector<int>& out) {
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  out.resize(v.size());
  if (!(hi > lo)) return false;
  const double scale = static_cast<double>(bins) / (hi - lo);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const int b = static_cast<int>((v[i] - lo) * scale);
    out[i] = std::clamp(b, 0, bins - 1);
  }
  return true;
}

// Plug-in MI from paired bin indices. Terms are summed in sorted order so
// the result does not depend on which variable is called x.
double mi_from_bins(const std::vector<int>& bx, const std::vector<int>& by, int bins,
                    std::vector<std::uint32_t>& joint, std::vector<double>& terms) {
  const auto nb = static_cast<std::size_t>(bins);
  joint.assign(nb * nb, 0);
  std::vector<std::uint32_t> cx(nb, 0), cy(nb, 0);
  for (std::size_t i = 0; i < bx.size(); ++i) {
    ++joint[static_cast<std::size_t>(bx[i]) * nb + static_cast<std::size_t>(by[i])];
    ++cx[static_cast<std::size_t>(bx[i])];
    ++cy[static_cast<std::size_t>(by[i])];
  }
  const double n = static_cast<double>(bx.size());
  terms.clear();
  for (std::size_t a = 0; a < nb; ++a) {
    for (std::size_t b = 0; b < nb; ++b) {
      const double c = joint[a * nb + b];
      if (c == 0.0) continue;
      const double denom = static_cast<double>(cx[a]) * static_cast<double>(cy[b]);
      terms.push_back(c * std::log(c * n / denom));
    }
  }
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return std::max(0.0, s / n);
}

// Centered copy and its Euclidean norm; exactly 0 for a constant series,
// whose computed mean may be off by an ulp.
double center(std::span<const double> v, std::vector<double>& out) {
  out.resize(v.size());
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) {
    std::fill(out.begin(), out.end(), 0.0);
    return 0.0;
  }
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = v[i] - mean;
    ss += out[i] * out[i];
  }
  return std::sqrt(ss);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

} // namespace

std::optional<double> pcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pcc: series lengths differ");
  if (x.size() < 2) throw std::invalid_argument("pcc: need at least two points");
  std::vector<double> xc, yc;
  const double nx = center(x, xc), ny = center(y, yc);
  if (nx == 0.0 || ny == 0.0) return std::nullopt;
  return std::clamp(dot(xc, yc) / (nx * ny), -1.0, 1.0);
}

MutualInformation mutual_information(std::span<const double> x, std::span<const double> y, int bins) {
  if (bins < 1) throw std::invalid_argument("mutual information: bins must be positive");
  if (x.size() != y.size()) throw std::invalid_argument("mutual information: series lengths differ");
  if (x.size() < static_cast<std::size_t>(bins)) {
    throw std::invalid_argument("mutual information: fewer samples than bins");
  }
  std::vector<int> bx, by;
  const bool okx = bin_indices(x, bins, bx);
  const bool oky = bin_indices(y, bins, by);
  if (!okx || !oky) return {0.0, true};
  std::vector<std::uint32_t> joint;
  std::vector<double> terms;
  return {mi_from_bins(bx, by, bins, joint, terms), false};
}

ErrorStats error_stats(const MultiStagePredictor& predictor, const Dataset& ds, int stage_cutoff) {
  check_compatible(predictor, ds.meta);
  if (stage_cutoff < 0 || static_cast<std::size_t>(stage_cutoff) > predictor.size()) {
    throw std::out_of_range("stage cutoff exceeds stage count");
  }
  const nn::Matrix err = predict_all(predictor, ds, stage_cutoff) - theta_matrix(ds);
  ErrorStats s;
  s.stage_cutoff = stage_cutoff;
  s.labels = predictor.meta.family.labels;
  column_stats(err, s.mean, s.stddev);
  return s;
}

StageCorrelation scan_correlations(const Dataset& ds, const nn::Matrix& targets, int bins, unsigned workers) {
  const std::size_t n = ds.size();
  const std::size_t stride = ds.meta.observation_stride();
  if (targets.cols() != static_cast<Eigen::Index>(n)) throw std::invalid_argument("target count does not match dataset");
  if (n < 2 || n < static_cast<std::size_t>(bins)) throw std::invalid_argument("too few samples for correlation scan");
  const auto m = static_cast<std::size_t>(targets.rows());

  // Per-target centered values and bins, shared read-only by all workers.
  std::vector<std::vector<double>> yc(m);
  std::vector<double> ynorm(m);
  std::vector<std::vector<int>> ybins(m);
  std::vector<char> yvalid(m);
  std::vector<double> row(n);
  for (std::size_t t = 0; t < m; ++t) {
    for (std::size_t i = 0; i < n; ++i) row[i] = targets(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
    ynorm[t] = center(row, yc[t]);
    yvalid[t] = bin_indices(row, bins, ybins[t]);
  }

  // Per (feature, target) results; reduced serially afterwards.
  std::vector<double> pcc_abs(stride * m, -1.0), mi(stride * m, -1.0);
  const std::size_t n_blocks = (stride + kFeatureBlock - 1) / kFeatureBlock;
  detail::parallel_for(n_blocks, workers, [&](std::size_t block) {
    const std::size_t f0 = block * kFeatureBlock;
    const std::size_t f1 = std::min(stride, f0 + kFeatureBlock);
    std::vector<double> x(n * (f1 - f0));
    for (std::size_t i = 0; i < n; ++i) {
      const double* src = ds.observations.data() + i * stride;
      for (std::size_t f = f0; f < f1; ++f) x[(f - f0) * n + i] = src[f];
    }
    std::vector<double> xc;
    std::vector<int> xb;
    std::vector<std::uint32_t> joint;
    std::vector<double> terms;
    for (std::size_t f = f0; f < f1; ++f) {
      const std::span<const double> xf(x.data() + (f - f0) * n, n);
      const double xn = center(xf, xc);
      const bool xvalid = bin_indices(xf, bins, xb);
      for (std::size_t t = 0; t < m; ++t) {
        if (xn > 0.0 && ynorm[t] > 0.0) {
          pcc_abs[f * m + t] = std::min(1.0, std::abs(dot(xc, yc[t]) / (xn * ynorm[t])));
        }
        mi[f * m + t] = (xvalid && yvalid[t]) ? mi_from_bins(xb, ybins[t], bins, joint, terms) : 0.0;
      }
    }
  });

  StageCorrelation out;
  for (std::size_t f = 0; f < stride; ++f) {
    for (std::size_t t = 0; t < m; ++t) {
      const double p = pcc_abs[f * m + t];
      if (p < 0.0) {
        ++out.undefined_pcc;
      } else if (p > out.max_abs_pcc) {
        out.max_abs_pcc = p;
        out.pcc_feature = f;
        out.pcc_target = t;
      }
      if (mi[f * m + t] > out.max_mi) {
        out.max_mi = mi[f * m + t];
        out.mi_feature = f;
        out.mi_target = t;
      }
    }
  }
  return out;
}

std::vector<nn::Matrix> stage_targets(const MultiStagePredictor& predictor, const Dataset& ds) {
  check_compatible(predictor, ds.meta);
  const nn::Matrix truth = theta_matrix(ds);
  const auto outputs = stage_outputs(predictor, ds);
  std::vector<nn::Matrix> out;
  out.push_back(truth);
  for (std::size_t k = 1; k <= predictor.size(); ++k) {
    const nn::Matrix res = truth - compose(predictor, outputs, static_cast<int>(k));
    const double eps = k < predictor.size() ? predictor.stages[k].epsilon : normalization_factor(res);
    out.push_back(eps > 0.0 ? nn::Matrix(res / eps) : res);
  }
  return out;
}

CorrelationReport correlation_report(const MultiStagePredictor& predictor, const Dataset& ds, int bins,
                                     unsigned workers) {
  const auto targets = stage_targets(predictor, ds);
  CorrelationReport r;
  r.n_features = ds.meta.observation_stride();
  r.n_targets = ds.theta_dim();
  r.bins = bins;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    StageCorrelation s = scan_correlations(ds, targets[k], bins, workers);
    s.stage = static_cast<int>(k);
    r.stages.push_back(s);
  }
  return r;
}

void SweepConfig::validate() const {
  family.validate();
  if (grid.empty()) throw std::invalid_argument("sweep grid is empty");
  for (const auto& p : grid) {
    if (!(p.tau > 0.0) || p.n_steps < 1) throw std::invalid_argument("sweep point needs tau > 0 and S >= 1");
  }
  if (n_samples < 2) throw std::invalid_argument("sweep needs at least two samples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train fraction must be in (0, 1)");
  pipeline.validate();
}

std::vector<SweepResult> sampling_sweep(const SweepConfig& config, const SweepProgress& progress) {
  config.validate();
  std::vector<SweepResult> results;
  for (const auto& point : config.grid) {
    const DatasetMeta meta = make_meta(config.family, point.tau, point.n_steps, config.n_samples,
                                       config.master_seed, config.noise_sigma);
    const auto [train, val] = split(generate(meta, config.workers), config.train_fraction);
    StageEpochCallback cb;
    if (progress) cb = [&](int stage, const nn::EpochRecord& rec) { progress(point, stage, rec); };
    PipelineResult run = run_pipeline(train, val, config.pipeline, cb);
    results.push_back({point, std::move(run.reports)});
  }
  return results;
}

Table sweep_table(const std::vector<SweepResult>& results) {
  Table t("sampling_sweep",
          {"tau", "n_steps", "stage", "train_fidelity", "val_fidelity", "train_infidelity", "val_infidelity"});
  for (const auto& r : results) {
    for (const auto& s : r.reports) {
      t.add_row({Table::num(r.point.tau), Table::num(r.point.n_steps), Table::num(s.stage),
                 Table::num(s.train_fidelity), Table::num(s.val_fidelity), Table::num(1.0 - s.train_fidelity),
                 Table::num(1.0 - s.val_fidelity)});
    }
  }
  return t;
}

Table error_table(const std::vector<std::pair<std::string, ErrorStats>>& stats) {
  Table t("error_stats", {"split", "stage_cutoff", "parameter", "mean", "std"});
  for (const auto& [split_name, s] : stats) {
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      t.add_row({split_name, Table::num(s.stage_cutoff), i < s.labels.size() ? s.labels[i] : std::to_string(i),
                 Table::num(s.mean[i]), Table::num(s.stddev[i])});
    }
  }
  return t;
}

Table correlation_table(const CorrelationReport& report) {
  Table t("correlation", {"stage", "max_abs_pcc", "max_mi", "pcc_feature", "pcc_target", "mi_feature", "mi_target",
                          "undefined_pcc"});
  for (const auto& s : report.stages) {
    t.add_row({Table::num(s.stage), Table::num(s.max_abs_pcc), Table::num(s.max_mi), Table::num(s.pcc_feature),
               Table::num(s.pcc_target), Table::num(s.mi_feature), Table::num(s.mi_target),
               Table::num(s.undefined_pcc)});
  }
  return t;
}

} // namespace hamlearn::analysis
