#pragma once

// Diagnostics: per-stage error statistics, linear and histogram-based
// dependence between inputs and stage targets, and sampling-grid sweeps.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hamlearn/dataset.hpp"
#include "hamlearn/multistage.hpp"
#include "hamlearn/table.hpp"

namespace hamlearn::analysis {

inline constexpr int kDefaultBins = 32;

/// Pearson correlation. Absent when either series has zero variance.
/// Throws std::invalid_argument on unequal lengths or fewer than two points.
std::optional<double> pcc(std::span<const double> x, std::span<const double> y);

struct MutualInformation {
  double nats = 0.0;
  bool degenerate = false; // a constant series; nats is 0 by convention
};

/// Plug-in estimate over equal-width bins spanning each variable's observed
/// range. Throws std::invalid_argument unless lengths match and are >= bins.
MutualInformation mutual_information(std::span<const double> x, std::span<const double> y,
                                     int bins = kDefaultBins);

struct ErrorStats {
  int stage_cutoff = 0;
  std::vector<std::string> labels;
  std::vector<double> mean;   // of theta_hat - theta_true, per parameter
  std::vector<double> stddev; // population
};

/// Statistics of the predictor truncated to its first `stage_cutoff` stages.
/// Throws MetadataMismatch if the dataset does not match the predictor.
ErrorStats error_stats(const MultiStagePredictor& predictor, const Dataset& ds, int stage_cutoff);

struct StageCorrelation {
  int stage = 0;
  double max_abs_pcc = 0.0;
  double max_mi = 0.0;
  std::size_t pcc_feature = 0, pcc_target = 0;
  std::size_t mi_feature = 0, mi_target = 0;
  std::size_t undefined_pcc = 0; // (feature, target) pairs with zero variance
};

struct CorrelationReport {
  std::size_t n_features = 0;
  std::size_t n_targets = 0;
  int bins = kDefaultBins;
  std::vector<StageCorrelation> stages;
};

/// Max |PCC| and max MI over every (observation entry, target row) pair.
/// `targets` is M x n with one column per sample.
StageCorrelation scan_correlations(const Dataset& ds, const nn::Matrix& targets, int bins = kDefaultBins,
                                   unsigned workers = 1);

/// Stage-n targets on `ds` for n = 0 .. predictor.size(): the true
/// coefficients for n = 0 and the normalized residual E_n / eps_n after.
std::vector<nn::Matrix> stage_targets(const MultiStagePredictor& predictor, const Dataset& ds);

CorrelationReport correlation_report(const MultiStagePredictor& predictor, const Dataset& ds,
                                     int bins = kDefaultBins, unsigned workers = 1);

struct SweepPoint {
  double tau = 0.0;
  int n_steps = 0;
};

struct SweepConfig {
  ModelFamily family;
  std::vector<SweepPoint> grid;
  std::size_t n_samples = 0;
  double train_fraction = 0.8;
  std::uint64_t master_seed = 0;
  double noise_sigma = 0.0;
  PipelineConfig pipeline;
  unsigned workers = 1;

  void validate() const;
};

struct SweepResult {
  SweepPoint point;
  std::vector<StageReport> reports;
};

using SweepProgress = std::function<void(const SweepPoint&, int stage, const nn::EpochRecord&)>;

/// One full pipeline run per grid point, each on a freshly generated dataset.
std::vector<SweepResult> sampling_sweep(const SweepConfig& config, const SweepProgress& progress = {});

/// Rows (tau, n_steps, stage, train/val fidelity and infidelity).
Table sweep_table(const std::vector<SweepResult>& results);

/// Rows (split, stage_cutoff, parameter, mean, std).
Table error_table(const std::vector<std::pair<std::string, ErrorStats>>& stats);

/// Rows (stage, max_abs_pcc, max_mi and the argmax indices).
Table correlation_table(const CorrelationReport& report);

} // namespace hamlearn::analysis
