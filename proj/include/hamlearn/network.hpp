#pragma once

// Sequence regressor: one LSTM layer over the observation time series,
// final hidden state fed to a fully connected head (tanh hidden layers,
// affine output). Gradients are exact backpropagation through time; the
// optimizer is Adam with bias correction. Everything is float64.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hamlearn/quantum.hpp"
#include "hamlearn/rng.hpp"

namespace hamlearn::nn {

using Matrix = Eigen::MatrixXd;
using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;

struct Architecture {
  int input_dim = 0;
  int hidden_dim = 128;
  std::vector<int> fc_hidden{64};
  int output_dim = 0;

  void validate() const;
  std::size_t parameter_count() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon_hat = 1e-8;
  int batch_size = 256;
  int epochs = 200;
  int patience = 30;
  std::uint64_t seed = 0;
  /// Multiplies the learning rate after every epoch; 1 keeps it constant.
  double lr_decay = 1.0;

  void validate() const;
};

/// Offsets of each weight block inside the flat parameter vector.
///
/// Order: LSTM input weights Wx (4H x D), recurrent weights Wh (4H x H),
/// bias b (4H), then per FC layer its weight (out x in) and bias (out).
/// Gate rows are ordered input, forget, cell, output. All matrices are
/// column-major.
struct Layout {
  explicit Layout(const Architecture& arch);

  std::size_t wx = 0, wh = 0, b = 0;
  std::vector<std::size_t> fc_w, fc_b;
  std::vector<int> fc_in, fc_out;
  std::size_t total = 0;

  friend bool operator==(const Layout&, const Layout&) = default;
};

/// Weights plus optimizer state.
class NetworkState {
public:
  NetworkState() = default;
  /// All weights zero.
  explicit NetworkState(Architecture arch);

  const Architecture& arch() const noexcept { return arch_; }
  const Layout& layout() const noexcept { return layout_; }

  std::vector<double>& weights() noexcept { return weights_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  ConstMatrixMap wx() const;
  ConstMatrixMap wh() const;
  ConstMatrixMap lstm_bias() const;
  ConstMatrixMap fc_weight(std::size_t layer) const;
  ConstMatrixMap fc_bias(std::size_t layer) const;
  std::size_t fc_layers() const noexcept { return layout_.fc_w.size(); }

  // Adam accumulators, same layout as the weights.
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::int64_t step = 0;

  friend bool operator==(const NetworkState&, const NetworkState&) = default;

private:
  Architecture arch_;
  Layout layout_{Architecture{1, 1, {}, 1}};
  std::vector<double> weights_;
};

/// Gradient of the loss with respect to every weight, in the same layout.
struct Gradient {
  std::vector<double> values;
};

/// sqrt(6 / (fan_in + fan_out)).
double xavier_bound(int fan_in, int fan_out);

/// rows x cols matrix, uniform on [-bound, bound] with fan_in = cols, fan_out = rows.
Matrix init_xavier(int rows, int cols, Rng& rng);

/// Xavier weights, zero biases, forget-gate bias 1.
NetworkState initialize(const Architecture& arch, std::uint64_t seed);

/// A mini-batch laid out for the LSTM: column t * batch + b holds sample b's
/// input at step t.
struct SequenceBatch {
  int n_steps = 0;
  int batch = 0;
  Matrix inputs; // input_dim x (n_steps * batch)
};

/// Read-only view of regression pairs stored elsewhere.
///
/// Each sample's observations use the ObservationSeries layout
/// [state][step][feature]; the network input at step t is the concatenation
/// over states of that step's features.
struct SequenceSet {
  std::span<const double> observations;
  std::span<const double> targets;
  int n_states = 0;
  int n_steps = 0;
  int features_per_state = 0;
  int target_dim = 0;

  std::size_t size() const;
  int input_dim() const noexcept { return n_states * features_per_state; }
  std::size_t observation_stride() const noexcept {
    return static_cast<std::size_t>(n_states) * static_cast<std::size_t>(n_steps) *
           static_cast<std::size_t>(features_per_state);
  }
  std::span<const double> target(std::size_t i) const {
    return targets.subspan(i * static_cast<std::size_t>(target_dim),
                           static_cast<std::size_t>(target_dim));
  }
  SequenceBatch gather(std::span<const std::size_t> indices) const;
  SequenceBatch gather_range(std::size_t first, std::size_t count) const;
};

SequenceBatch to_batch(const ObservationSeries& series);

/// Network outputs for a batch, output_dim x batch.
Matrix forward_batch(const NetworkState& net, const SequenceBatch& batch);

std::vector<double> forward(const NetworkState& net, const ObservationSeries& series);

/// ||pred - target||^2 / M.
double loss_mse(std::span<const double> pred, std::span<const double> target);

/// Mean over the batch of loss_mse; writes the exact gradient of that mean
/// into `grad` (resized as needed) and returns the loss.
double backward_batch(const NetworkState& net, const SequenceBatch& batch,
                      const Matrix& targets, Gradient& grad);

Gradient backward(const NetworkState& net, const ObservationSeries& series,
                  std::span<const double> target);

/// One Adam update. Throws DivergenceError if any gradient entry is non-finite.
void adam_step(NetworkState& net, const Gradient& grad, const TrainConfig& config,
               double learning_rate);
inline void adam_step(NetworkState& net, const Gradient& grad, const TrainConfig& config) {
  adam_step(net, grad, config, config.learning_rate);
}

/// Evaluation is chunked at this batch size everywhere so that outputs do
/// not depend on who asked for them.
inline constexpr std::size_t kEvalChunk = 256;

/// output_dim x n matrix of outputs for every sample of the set.
Matrix predict_all(const NetworkState& net, const SequenceSet& set);

/// Mean per-sample loss over the set.
double evaluate_loss(const NetworkState& net, const SequenceSet& set);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct FitResult {
  NetworkState net; // weights at the epoch with the lowest validation loss
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam training with a per-epoch deterministic reshuffle.
/// Stops after `patience` epochs without validation improvement.
FitResult fit(const SequenceSet& train, const SequenceSet& val, const Architecture& arch,
              const TrainConfig& config, const EpochCallback& on_epoch = {});

// Checkpoint container: magic "HLNET\0\0\1", u32 version, architecture,
// weights (f64), optional Adam state, CRC-32 trailer.
std::string encode_checkpoint(const NetworkState& net, bool with_adam);
NetworkState decode_checkpoint(std::string_view bytes);
void save_checkpoint(const NetworkState& net, const std::filesystem::path& path, bool with_adam);
NetworkState load_checkpoint(const std::filesystem::path& path);

} // namespace hamlearn::nn
