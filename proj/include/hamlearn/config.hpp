#pragma once

// Run configuration for the command-line tool. One YAML document with
// optional sections; every key is checked against the schema below and
// unknown keys are rejected with ConfigError. See docs/config.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hamlearn/analysis.hpp"
#include "hamlearn/dataset.hpp"
#include "hamlearn/decoupling.hpp"
#include "hamlearn/multistage.hpp"

namespace hamlearn::cli {

struct FamilyConfig {
  std::string name = "H1";
  int n_qubits = 2;
  /// Replaces the family's default sampling ranges, one per parameter.
  std::optional<std::vector<ParameterRange>> ranges;

  ModelFamily build() const;
};

struct RunConfig {
  std::uint64_t seed = 20240601;
  unsigned workers = 0; // 0: all available cores
  std::filesystem::path output_dir = "runs/default";

  FamilyConfig family;

  // sampling
  double tau = 0.02 * 3.14159265358979323846;
  int n_steps = 100;

  // dataset
  std::size_t n_samples = 1000;
  double noise_sigma = 0.0;
  std::optional<std::uint64_t> state_seed;
  double train_fraction = 0.8;

  // network, training, stages
  PipelineConfig pipeline;

  // evaluate
  std::vector<double> eval_sigmas{0.0};
  std::uint64_t eval_noise_seed = 7;

  // dd
  FamilyConfig dd_family{"H3", 4, std::nullopt};
  std::vector<int> dd_cycles{1, 2, 4, 8, 16};
  dd::PulsePlacement dd_placement = dd::PulsePlacement::Spectators;
  std::optional<std::vector<double>> dd_theta;
  std::uint64_t dd_theta_seed = 11;

  // analyze
  int bins = analysis::kDefaultBins;

  // sweep: tau values at the configured S, and S values at the configured tau
  std::vector<double> sweep_taus;
  std::vector<int> sweep_steps;
  std::optional<std::size_t> sweep_samples;

  unsigned resolved_workers() const;
  DatasetMeta dataset_meta() const;
  std::vector<analysis::SweepPoint> sweep_grid() const;
  analysis::SweepConfig sweep_config() const;

  /// Throws ConfigError on any inconsistent value.
  void validate() const;
};

/// Parse YAML text, apply "section.key=value" overrides, validate.
RunConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides = {});
/// As above from a file. Missing or unreadable files raise IoError.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
/// Defaults only, with overrides applied.
RunConfig default_config(const std::vector<std::string>& overrides = {});

} // namespace hamlearn::cli
