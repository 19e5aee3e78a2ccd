#pragma once

// Residual multi-stage learning.
//
// Stage 0 regresses the true coefficients directly. Stage n >= 1 regresses
// the normalized residual E_n / eps_n, where E_n = theta_true - theta^(n) and
// eps_n is the RMS of E_n over all training components. The composed
// estimate after k stages is theta^(k) = sum_{j<k} eps_j * net_j(series) with
// eps_0 = 1, summed in stage order.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hamlearn/dataset.hpp"
#include "hamlearn/network.hpp"
#include "hamlearn/table.hpp"

namespace hamlearn {

struct StageModel {
  int index = 0;
  nn::NetworkState net;
  double epsilon = 1.0;
};

struct MultiStagePredictor {
  DatasetMeta meta;
  std::vector<StageModel> stages;

  std::size_t size() const noexcept { return stages.size(); }
  /// Throws std::invalid_argument unless stage indices run 0, 1, ..., stage 0
  /// has epsilon exactly 1, and every epsilon is finite and positive.
  void validate() const;
};

struct PipelineConfig {
  int hidden_dim = 128;
  std::vector<int> fc_hidden{64};
  nn::TrainConfig train;
  int max_stages = 3;
  /// Stop once a stage improves mean validation infidelity by less than
  /// this fraction of the previous value.
  double improvement_margin = 0.1;
  /// Residual RMS at or below this counts as converged.
  double convergence_floor = 1e-15;
  /// Per-parameter guard for relative errors.
  double relative_error_guard = 1e-3;

  void validate() const;
  nn::Architecture architecture(const DatasetMeta& meta) const;
};

struct StageReport {
  int stage = 0;
  double epsilon = 1.0;      // factor that scaled this stage's targets
  double target_rms = 0.0;   // RMS of the scaled training targets (1 for n >= 1)
  double next_epsilon = 0.0; // RMS of training residuals after this stage
  int best_epoch = 0;
  std::vector<nn::EpochRecord> history;
  double train_fidelity = 0.0; // mean per-sample cosine similarity
  double val_fidelity = 0.0;
  std::vector<double> train_error_mean, train_error_std;
  std::vector<double> val_error_mean, val_error_std;
};

struct PipelineResult {
  MultiStagePredictor predictor;
  std::vector<StageReport> reports;
  std::string stop_reason;
};

using StageEpochCallback = std::function<void(int stage, const nn::EpochRecord&)>;

/// Throws MetadataMismatch if the dataset was not produced under the
/// predictor's family, sampling grid and initial states.
void check_compatible(const MultiStagePredictor& predictor, const DatasetMeta& meta);

nn::SequenceSet sequence_view(const Dataset& ds, std::span<const double> targets);

/// Raw network output of every stage on every sample: one M x n matrix per stage.
std::vector<nn::Matrix> stage_outputs(const MultiStagePredictor& predictor, const Dataset& ds);

/// theta^(k) from per-stage outputs, k = n_stages (negative: all).
nn::Matrix compose(const MultiStagePredictor& predictor, const std::vector<nn::Matrix>& outputs,
                   int n_stages = -1);

/// Composed estimate for every sample (M x n).
nn::Matrix predict_all(const MultiStagePredictor& predictor, const Dataset& ds, int n_stages = -1);

std::vector<double> predict(const MultiStagePredictor& predictor, const ObservationSeries& series,
                            int n_stages = -1);

/// Theta_true - theta^(k) for every sample (M x n).
nn::Matrix residuals(const MultiStagePredictor& predictor, const Dataset& ds, int n_stages = -1);

/// True coefficients as an M x n matrix.
nn::Matrix theta_matrix(const Dataset& ds);

/// RMS over every component of every sample. Zero only if all errors are zero.
double normalization_factor(const nn::Matrix& errors);

/// Cosine similarity. Throws std::invalid_argument on a zero vector.
double fidelity(std::span<const double> a, std::span<const double> b);

/// Mean over columns of fidelity(pred.col(i), truth.col(i)).
double mean_fidelity(const nn::Matrix& pred, const nn::Matrix& truth);

/// Fidelity of the two matrices flattened into single vectors.
double concatenated_fidelity(const nn::Matrix& pred, const nn::Matrix& truth);

/// Mean of |hat_i - true_i| / |true_i| over `group`, skipping indices with
/// |true_i| < guard. Throws std::invalid_argument if nothing is left.
double relative_error(std::span<const double> theta_hat, std::span<const double> theta_true,
                      std::span<const std::size_t> group, double guard = 1e-3);

/// Thrown by train_stage when the residuals are already at the convergence floor.
class Converged : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Train the next stage on top of `predictor` (which is not modified).
std::pair<StageModel, StageReport> train_stage(const MultiStagePredictor& predictor,
                                               const Dataset& train, const Dataset& val,
                                               const PipelineConfig& config,
                                               const StageEpochCallback& on_epoch = {});

PipelineResult run_pipeline(const Dataset& train, const Dataset& val, const PipelineConfig& config,
                            const StageEpochCallback& on_epoch = {});

/// Per-parameter mean and (population) standard deviation of the columns.
void column_stats(const nn::Matrix& errors, std::vector<double>& mean, std::vector<double>& stddev);

// Predictor bundle: magic "HLPRED\0\1", u32 version, meta JSON, stage count,
// then per stage its index, epsilon and network checkpoint; CRC-32 trailer.
std::string encode_predictor(const MultiStagePredictor& predictor);
MultiStagePredictor decode_predictor(std::string_view bytes);
void save_predictor(const MultiStagePredictor& predictor, const std::filesystem::path& path);
MultiStagePredictor load_predictor(const std::filesystem::path& path);

/// One row per epoch: stage, epoch, train_loss, val_loss.
Table loss_table(const std::vector<StageReport>& reports);
/// One row per stage: epsilon, fidelities, infidelities, next epsilon.
Table stage_table(const std::vector<StageReport>& reports);

} // namespace hamlearn
