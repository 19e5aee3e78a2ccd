#include "hamlearn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "hamlearn/binary_io.hpp"
#include "hamlearn/errors.hpp"

namespace hamlearn::nn {

namespace {

constexpr char kCheckpointMagic[8] = {'H', 'L', 'N', 'E', 'T', '\0', '\0', '\1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class Derived> void sigmoid_inplace(Eigen::DenseBase<Derived>& x) {
  x = (1.0 + (-x.derived().array()).exp()).inverse().matrix();
}

// Eigen's double tanh is scalar; this form vectorizes through exp and is
// accurate to a few ulp in absolute terms.
template <class ArrayExpr> auto fast_tanh(const ArrayExpr& x) {
  return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

template <class Derived> void tanh_inplace(Eigen::DenseBase<Derived>& x) {
  x = fast_tanh(x.derived().array()).matrix();
}

// Activations kept from the forward pass for BPTT.
//
// Weights are copied into Eigen-owned (aligned) storage first. Maps straight
// into the flat vector would have an alignment that depends on where the
// allocator put it, and Eigen's vectorized kernels split their sums
// differently per alignment, which breaks bit-for-bit reproducibility.
struct Tape {
  Matrix wx, wh, bias;
  std::vector<Matrix> fc_w, fc_b;

  Matrix gates;      // 4H x SB, activated i, f, g, o
  Matrix cells;      // H x SB
  Matrix tanh_cells; // H x SB
  Matrix hidden;     // H x SB
  std::vector<Matrix> fc_inputs; // input to each FC layer
  Matrix output;
};

void check_batch(const NetworkState& net, const SequenceBatch& batch) {
  if (batch.n_steps < 1 || batch.batch < 1) throw std::invalid_argument("empty batch");
  if (batch.inputs.rows() != net.arch().input_dim) {
    throw std::invalid_argument("input width " + std::to_string(batch.inputs.rows()) +
                                " does not match network input_dim " +
                                std::to_string(net.arch().input_dim));
  }
  if (batch.inputs.cols() != static_cast<Eigen::Index>(batch.n_steps) * batch.batch) {
    throw std::invalid_argument("batch column count inconsistent with steps x batch");
  }
}

void run_forward(const NetworkState& net, const SequenceBatch& batch, Tape& tape) {
  check_batch(net, batch);
  const Eigen::Index H = net.arch().hidden_dim;
  const Eigen::Index B = batch.batch;
  const Eigen::Index S = batch.n_steps;

  tape.wx = net.wx();
  tape.wh = net.wh();
  tape.bias = net.lstm_bias();
  const std::size_t L = net.fc_layers();
  tape.fc_w.resize(L);
  tape.fc_b.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    tape.fc_w[l] = net.fc_weight(l);
    tape.fc_b[l] = net.fc_bias(l);
  }
  const Matrix& wh = tape.wh;

  tape.gates.noalias() = tape.wx * batch.inputs;
  tape.gates.colwise() += tape.bias.col(0);
  tape.cells.resize(H, S * B);
  tape.tanh_cells.resize(H, S * B);
  tape.hidden.resize(H, S * B);

  for (Eigen::Index t = 0; t < S; ++t) {
    auto g = tape.gates.middleCols(t * B, B);
    if (t > 0) g.noalias() += wh * tape.hidden.middleCols((t - 1) * B, B);

    auto gi = g.middleRows(0, H);
    auto gf = g.middleRows(H, H);
    auto gg = g.middleRows(2 * H, H);
    auto go = g.middleRows(3 * H, H);
    sigmoid_inplace(gi);
    sigmoid_inplace(gf);
    tanh_inplace(gg);
    sigmoid_inplace(go);

    auto c = tape.cells.middleCols(t * B, B);
    if (t > 0) {
      c = (gf.array() * tape.cells.middleCols((t - 1) * B, B).array() + gi.array() * gg.array())
              .matrix();
    } else {
      c = (gi.array() * gg.array()).matrix();
    }
    auto tc = tape.tanh_cells.middleCols(t * B, B);
    tc = fast_tanh(c.array()).matrix();
    tape.hidden.middleCols(t * B, B) = (go.array() * tc.array()).matrix();
  }

  tape.fc_inputs.resize(L);
  tape.fc_inputs[0] = tape.hidden.middleCols((S - 1) * B, B);
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = tape.fc_w[l] * tape.fc_inputs[l];
    z.colwise() += tape.fc_b[l].col(0);
    if (l + 1 < L) {
      tape.fc_inputs[l + 1] = fast_tanh(z.array()).matrix();
    } else {
      tape.output = std::move(z);
    }
  }
}

MatrixMap block(std::vector<double>& v, std::size_t offset, Eigen::Index rows, Eigen::Index cols) {
  return MatrixMap(v.data() + offset, rows, cols);
}

} // namespace

// ---------------------------------------------------------------------------

void Architecture::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
    throw std::invalid_argument("network dimensions must be positive");
  }
  for (int w : fc_hidden) {
    if (w < 1) throw std::invalid_argument("FC hidden widths must be positive");
  }
}

std::size_t Architecture::parameter_count() const { return Layout(*this).total; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in (0, 1)");
  if (!(epsilon_hat > 0.0)) throw std::invalid_argument("epsilon_hat must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must be in (0, 1]");
}

Layout::Layout(const Architecture& arch) {
  const auto D = static_cast<std::size_t>(arch.input_dim);
  const auto H = static_cast<std::size_t>(arch.hidden_dim);
  std::size_t off = 0;
  wx = off;
  off += 4 * H * D;
  wh = off;
  off += 4 * H * H;
  b = off;
  off += 4 * H;
  int in = arch.hidden_dim;
  auto add_layer = [&](int out) {
    fc_in.push_back(in);
    fc_out.push_back(out);
    fc_w.push_back(off);
    off += static_cast<std::size_t>(in) * static_cast<std::size_t>(out);
    fc_b.push_back(off);
    off += static_cast<std::size_t>(out);
    in = out;
  };
  for (int w : arch.fc_hidden) add_layer(w);
  add_layer(arch.output_dim);
  total = off;
}

NetworkState::NetworkState(Architecture arch) : arch_(std::move(arch)), layout_(arch_) {
  arch_.validate();
  weights_.assign(layout_.total, 0.0);
  adam_m.assign(layout_.total, 0.0);
  adam_v.assign(layout_.total, 0.0);
}

ConstMatrixMap NetworkState::wx() const {
  return {weights_.data() + layout_.wx, 4 * arch_.hidden_dim, arch_.input_dim};
}
ConstMatrixMap NetworkState::wh() const {
  return {weights_.data() + layout_.wh, 4 * arch_.hidden_dim, arch_.hidden_dim};
}
ConstMatrixMap NetworkState::lstm_bias() const {
  return {weights_.data() + layout_.b, 4 * arch_.hidden_dim, 1};
}
ConstMatrixMap NetworkState::fc_weight(std::size_t l) const {
  return {weights_.data() + layout_.fc_w.at(l), layout_.fc_out[l], layout_.fc_in[l]};
}
ConstMatrixMap NetworkState::fc_bias(std::size_t l) const {
  return {weights_.data() + layout_.fc_b.at(l), layout_.fc_out[l], 1};
}

double xavier_bound(int fan_in, int fan_out) {
  if (fan_in + fan_out <= 0) throw std::invalid_argument("fan sizes must be positive");
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Matrix init_xavier(int rows, int cols, Rng& rng) {
  const double bound = xavier_bound(cols, rows);
  Matrix m(rows, cols);
  // Fill in column-major order so the draw sequence matches the storage order.
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
  }
  return m;
}

NetworkState initialize(const Architecture& arch, std::uint64_t seed) {
  NetworkState net(arch);
  Rng rng(seed);
  auto& w = net.weights();
  const Layout& lay = net.layout();
  const int H = arch.hidden_dim;
  block(w, lay.wx, 4 * H, arch.input_dim) = init_xavier(4 * H, arch.input_dim, rng);
  block(w, lay.wh, 4 * H, H) = init_xavier(4 * H, H, rng);
  block(w, lay.b + static_cast<std::size_t>(H), H, 1).setOnes(); // forget gate
  for (std::size_t l = 0; l < lay.fc_w.size(); ++l) {
    block(w, lay.fc_w[l], lay.fc_out[l], lay.fc_in[l]) = init_xavier(lay.fc_out[l], lay.fc_in[l], rng);
  }
  return net;
}

// ---------------------------------------------------------------------------

std::size_t SequenceSet::size() const {
  if (target_dim < 1) return 0;
  const std::size_t n = targets.size() / static_cast<std::size_t>(target_dim);
  if (observation_stride() == 0 || observations.size() != n * observation_stride()) {
    throw std::invalid_argument("observation and target counts disagree");
  }
  return n;
}

SequenceBatch SequenceSet::gather(std::span<const std::size_t> indices) const {
  const std::size_t n = size();
  SequenceBatch out;
  out.n_steps = n_steps;
  out.batch = static_cast<int>(indices.size());
  out.inputs.resize(input_dim(), static_cast<Eigen::Index>(n_steps) * out.batch);
  const auto F = static_cast<std::size_t>(features_per_state);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= n) throw std::out_of_range("sample index out of range");
    const double* obs = observations.data() + indices[b] * observation_stride();
    for (int t = 0; t < n_steps; ++t) {
      double* col = out.inputs.col(static_cast<Eigen::Index>(t) * out.batch +
                                   static_cast<Eigen::Index>(b)).data();
      for (int k = 0; k < n_states; ++k) {
        const double* src = obs + (static_cast<std::size_t>(k) * static_cast<std::size_t>(n_steps) +
                                   static_cast<std::size_t>(t)) * F;
        std::copy(src, src + F, col + static_cast<std::size_t>(k) * F);
      }
    }
  }
  return out;
}

SequenceBatch SequenceSet::gather_range(std::size_t first, std::size_t count) const {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), first);
  return gather(idx);
}

SequenceBatch to_batch(const ObservationSeries& series) {
  SequenceSet one;
  one.observations = series.values;
  static const double kNoTarget = 0.0;
  one.targets = std::span<const double>(&kNoTarget, 1);
  one.n_states = series.n_states;
  one.n_steps = series.n_steps;
  one.features_per_state = series.features_per_state();
  one.target_dim = 1;
  const std::size_t first = 0;
  return one.gather(std::span<const std::size_t>(&first, 1));
}

// Activation buffers run to hundreds of MB at training sizes; reusing them
// avoids re-faulting fresh pages on every batch.
Tape& scratch_tape() {
  thread_local Tape tape;
  return tape;
}

Matrix forward_batch(const NetworkState& net, const SequenceBatch& batch) {
  Tape& tape = scratch_tape();
  run_forward(net, batch, tape);
  return tape.output;
}

std::vector<double> forward(const NetworkState& net, const ObservationSeries& series) {
  const Matrix out = forward_batch(net, to_batch(series));
  return {out.data(), out.data() + out.size()};
}

double loss_mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw std::invalid_argument("loss_mse: length mismatch");
  if (pred.empty()) throw std::invalid_argument("loss_mse: empty vectors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double backward_batch(const NetworkState& net, const SequenceBatch& batch, const Matrix& targets,
                      Gradient& grad) {
  Tape& tape = scratch_tape();
  run_forward(net, batch, tape);
  const Architecture& arch = net.arch();
  const Eigen::Index H = arch.hidden_dim;
  const Eigen::Index B = batch.batch;
  const Eigen::Index S = batch.n_steps;
  const Eigen::Index M = arch.output_dim;
  if (targets.rows() != M || targets.cols() != B) {
    throw std::invalid_argument("target shape does not match network output");
  }

  const Layout& lay = net.layout();
  grad.values.assign(lay.total, 0.0);
  auto& g = grad.values;

  double loss = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    loss += (tape.output.col(b) - targets.col(b)).squaredNorm() / static_cast<double>(M);
  }
  loss /= static_cast<double>(B);

  // FC head, last layer first.
  Matrix dz = (2.0 / static_cast<double>(M * B)) * (tape.output - targets);
  const std::size_t L = net.fc_layers();
  Matrix dh;
  Matrix tmp;
  for (std::size_t l = L; l-- > 0;) {
    tmp.noalias() = dz * tape.fc_inputs[l].transpose();
    block(g, lay.fc_w[l], lay.fc_out[l], lay.fc_in[l]) = tmp;
    tmp = dz.rowwise().sum();
    block(g, lay.fc_b[l], lay.fc_out[l], 1) = tmp;
    Matrix da = tape.fc_w[l].transpose() * dz;
    if (l > 0) {
      dz = (da.array() * (1.0 - tape.fc_inputs[l].array().square())).matrix();
    } else {
      dh = std::move(da);
    }
  }

  // Backpropagation through time. dG_t overwrites the gate activations of
  // step t once they are no longer needed.
  const Matrix& wh = tape.wh;
  Matrix dc = Matrix::Zero(H, B);
  for (Eigen::Index t = S - 1; t >= 0; --t) {
    auto gt = tape.gates.middleCols(t * B, B);
    const auto tc = tape.tanh_cells.middleCols(t * B, B).array();
    const Eigen::ArrayXXd gi = gt.middleRows(0, H).array();
    const Eigen::ArrayXXd gf = gt.middleRows(H, H).array();
    const Eigen::ArrayXXd gg = gt.middleRows(2 * H, H).array();
    const Eigen::ArrayXXd go = gt.middleRows(3 * H, H).array();

    dc.array() += dh.array() * go * (1.0 - tc.square());
    gt.middleRows(3 * H, H) = (dh.array() * tc * go * (1.0 - go)).matrix();
    gt.middleRows(0, H) = (dc.array() * gg * gi * (1.0 - gi)).matrix();
    gt.middleRows(2 * H, H) = (dc.array() * gi * (1.0 - gg.square())).matrix();
    if (t > 0) {
      gt.middleRows(H, H) =
          (dc.array() * tape.cells.middleCols((t - 1) * B, B).array() * gf * (1.0 - gf)).matrix();
      dh.noalias() = wh.transpose() * gt;
    } else {
      gt.middleRows(H, H).setZero();
    }
    dc.array() *= gf;
  }

  const Matrix& dgates = tape.gates;
  tmp.noalias() = dgates * batch.inputs.transpose();
  block(g, lay.wx, 4 * H, arch.input_dim) = tmp;
  if (S > 1) {
    tmp.noalias() = dgates.rightCols((S - 1) * B) * tape.hidden.leftCols((S - 1) * B).transpose();
    block(g, lay.wh, 4 * H, H) = tmp;
  }
  tmp = dgates.rowwise().sum();
  block(g, lay.b, 4 * H, 1) = tmp;
  return loss;
}

Gradient backward(const NetworkState& net, const ObservationSeries& series,
                  std::span<const double> target) {
  if (target.size() != static_cast<std::size_t>(net.arch().output_dim)) {
    throw std::invalid_argument("target length does not match network output");
  }
  Matrix t = Eigen::Map<const Eigen::VectorXd>(target.data(), static_cast<Eigen::Index>(target.size()));
  Gradient grad;
  backward_batch(net, to_batch(series), t, grad);
  return grad;
}

void adam_step(NetworkState& net, const Gradient& grad, const TrainConfig& config,
               double learning_rate) {
  auto& w = net.weights();
  if (grad.values.size() != w.size()) throw std::invalid_argument("gradient size mismatch");
  for (std::size_t k = 0; k < grad.values.size(); ++k) {
    if (!std::isfinite(grad.values[k])) {
      throw DivergenceError("non-finite gradient at parameter " + std::to_string(k), -1, -1);
    }
  }
  if (net.adam_m.size() != w.size()) net.adam_m.assign(w.size(), 0.0);
  if (net.adam_v.size() != w.size()) net.adam_v.assign(w.size(), 0.0);

  ++net.step;
  const double t = static_cast<double>(net.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double gk = grad.values[k];
    net.adam_m[k] = config.beta1 * net.adam_m[k] + (1.0 - config.beta1) * gk;
    net.adam_v[k] = config.beta2 * net.adam_v[k] + (1.0 - config.beta2) * gk * gk;
    const double m_hat = net.adam_m[k] / c1;
    const double v_hat = net.adam_v[k] / c2;
    w[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon_hat);
  }
}

Matrix predict_all(const NetworkState& net, const SequenceSet& set) {
  const std::size_t n = set.size();
  Matrix out(net.arch().output_dim, static_cast<Eigen::Index>(n));
  for (std::size_t first = 0; first < n; first += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, n - first);
    out.middleCols(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)) =
        forward_batch(net, set.gather_range(first, count));
  }
  return out;
}

double evaluate_loss(const NetworkState& net, const SequenceSet& set) {
  const Matrix pred = predict_all(net, set);
  const std::size_t n = set.size();
  if (n == 0) throw std::invalid_argument("evaluate_loss: empty set");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += loss_mse(std::span<const double>(pred.col(static_cast<Eigen::Index>(i)).data(),
                                            static_cast<std::size_t>(pred.rows())),
                    set.target(i));
  }
  return acc / static_cast<double>(n);
}

FitResult fit(const SequenceSet& train, const SequenceSet& val, const Architecture& arch,
              const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  arch.validate();
  const std::size_t n = train.size();
  if (n == 0 || val.size() == 0) throw std::invalid_argument("fit needs non-empty train and validation sets");
  if (train.input_dim() != arch.input_dim || train.target_dim != arch.output_dim ||
      val.input_dim() != arch.input_dim || val.target_dim != arch.output_dim) {
    throw std::invalid_argument("data shape does not match architecture");
  }

  FitResult result;
  NetworkState net = initialize(arch, derive_seed(config.seed, 0x1417));
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  double lr = config.learning_rate;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Gradient grad;
  Matrix targets;
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t first = 0; first < n; first += bs) {
      const std::size_t count = std::min(bs, n - first);
      const std::span<const std::size_t> idx(order.data() + first, count);
      const SequenceBatch batch = train.gather(idx);
      targets.resize(arch.output_dim, static_cast<Eigen::Index>(count));
      for (std::size_t b = 0; b < count; ++b) {
        const auto t = train.target(idx[b]);
        std::copy(t.begin(), t.end(), targets.col(static_cast<Eigen::Index>(b)).data());
      }
      const double loss = backward_batch(net, batch, targets, grad);
      if (!std::isfinite(loss)) throw DivergenceError("non-finite training loss", -1, epoch);
      try {
        adam_step(net, grad, config, lr);
      } catch (const DivergenceError& e) {
        throw DivergenceError(e.what(), -1, epoch);
      }
      loss_sum += loss * static_cast<double>(count);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_loss = evaluate_loss(net, val);
    if (!std::isfinite(rec.val_loss)) throw DivergenceError("non-finite validation loss", -1, epoch);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.net = net;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
    lr *= config.lr_decay;
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string encode_checkpoint(const NetworkState& net, bool with_adam) {
  io::ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
  w.u32(kCheckpointVersion);
  const Architecture& a = net.arch();
  w.u32(static_cast<std::uint32_t>(a.input_dim));
  w.u32(static_cast<std::uint32_t>(a.hidden_dim));
  w.u32(static_cast<std::uint32_t>(a.fc_hidden.size()));
  for (int h : a.fc_hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(a.output_dim));
  w.u64(net.weights().size());
  w.f64s(net.weights());
  w.u8(with_adam ? 1 : 0);
  if (with_adam) {
    w.i64(net.step);
    w.f64s(net.adam_m);
    w.f64s(net.adam_v);
  }
  return io::seal(w.take());
}

NetworkState decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(io::unseal(bytes));
  if (r.bytes(sizeof kCheckpointMagic) != std::string_view(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw FormatError("not a network checkpoint (bad magic)");
  }
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  }
  Architecture a;
  a.input_dim = static_cast<int>(r.u32());
  a.hidden_dim = static_cast<int>(r.u32());
  const std::uint32_t n_fc = r.u32();
  if (n_fc > 64) throw FormatError("implausible FC layer count");
  a.fc_hidden.resize(n_fc);
  for (auto& h : a.fc_hidden) h = static_cast<int>(r.u32());
  a.output_dim = static_cast<int>(r.u32());
  NetworkState net(a);
  if (r.u64() != net.weights().size()) throw FormatError("weight count does not match architecture");
  r.f64s(net.weights());
  if (r.u8() != 0) {
    net.step = r.i64();
    r.f64s(net.adam_m);
    r.f64s(net.adam_v);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
  return net;
}

void save_checkpoint(const NetworkState& net, const std::filesystem::path& path, bool with_adam) {
  io::write_file(path, encode_checkpoint(net, with_adam));
}

NetworkState load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

} // namespace hamlearn::nn
