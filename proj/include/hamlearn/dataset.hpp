#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hamlearn/quantum.hpp"
#include "hamlearn/rng.hpp"

namespace hamlearn {

struct ParameterRange {
  double lo = -1.0;
  double hi = 1.0;
  friend bool operator==(const ParameterRange&, const ParameterRange&) = default;
};

/// A Hamiltonian structure plus the prior box its coefficients are drawn from.
struct ModelFamily {
  std::string name;
  int n_qubits = 0;
  std::vector<PauliString> terms;
  std::vector<ParameterRange> ranges;
  std::vector<std::string> labels; // e.g. "w1", "J12", "Jxy"
  std::vector<std::string> groups; // magnitude class used for relative-error tables

  /// w1 Z1 + w2 Z2 + J12 X1X2.
  static ModelFamily h1();
  /// All nine two-body couplings J_ab s_a^1 s_b^2, ordered xx, xy, ..., zz.
  static ModelFamily h2();
  /// Local Z fields on every qubit, then XX couplings on every pair i < j.
  static ModelFamily h3(int n_qubits);
  /// Open chain with all nine two-body couplings at distance 1 (NN), 2 (NNN)
  /// and 3 (NNNN), with ranges [-1,1], [-0.1,0.1], [-0.01,0.01].
  static ModelFamily h4(int n_qubits);
  /// Dispatch on "H1".."H4"; n_qubits is ignored for the two-qubit families.
  static ModelFamily by_name(const std::string& name, int n_qubits = 2);

  std::size_t size() const noexcept { return terms.size(); }
  HamiltonianModel model(std::span<const double> theta) const;
  /// Throws std::invalid_argument on inconsistent sizes or inverted ranges.
  void validate() const;
  /// Indices of the parameters belonging to `group`.
  std::vector<std::size_t> group_indices(const std::string& group) const;
  /// Distinct group names in first-appearance order.
  std::vector<std::string> group_names() const;

  friend bool operator==(const ModelFamily&, const ModelFamily&) = default;
};

inline constexpr int kInitialStateCount = 3;

struct DatasetMeta {
  ModelFamily family;
  double tau = 0.0;
  int n_steps = 0;
  std::vector<QuantumState> initial_states;
  std::uint64_t master_seed = 0;
  double noise_sigma = 0.0;
  std::size_t n_samples = 0;

  void validate() const;
  std::size_t observation_stride() const {
    return ObservationSeries::value_count(family.n_qubits, static_cast<int>(initial_states.size()), n_steps);
  }
};

/// Meta with three Haar-random initial states drawn from `state_seed`.
DatasetMeta make_meta(ModelFamily family, double tau, int n_steps, std::size_t n_samples,
                      std::uint64_t master_seed, double noise_sigma, std::uint64_t state_seed);
inline DatasetMeta make_meta(ModelFamily family, double tau, int n_steps, std::size_t n_samples,
                             std::uint64_t master_seed, double noise_sigma = 0.0) {
  return make_meta(std::move(family), tau, n_steps, n_samples, master_seed, noise_sigma, master_seed);
}

/// Samples of (observation series, true coefficients) that share one meta.
struct Dataset {
  DatasetMeta meta;
  std::vector<double> thetas;       // n_samples x M
  std::vector<double> observations; // n_samples x observation_stride, ObservationSeries layout

  std::size_t size() const noexcept { return meta.n_samples; }
  std::size_t theta_dim() const noexcept { return meta.family.size(); }
  std::span<const double> theta(std::size_t i) const;
  std::span<const double> observation(std::size_t i) const;
  std::span<double> observation(std::size_t i);
  ObservationSeries series(std::size_t i) const;

  friend bool operator==(const Dataset& a, const Dataset& b);
};

/// Independent uniform draw of every coefficient on its range.
std::vector<double> sample_parameters(const ModelFamily& family, Rng& rng);

/// Adds i.i.d. N(0, sigma^2) to every entry. sigma = 0 leaves the series untouched.
void add_noise(std::span<double> values, double sigma, Rng& rng);
ObservationSeries add_noise(ObservationSeries series, double sigma, Rng& rng);

/// Sample i uses the stream derive_seed(master_seed, i) for its coefficients
/// and then its noise, so output does not depend on the worker count.
Dataset generate(const DatasetMeta& meta, unsigned workers = 1);

/// First round(n * train_fraction) samples, then the rest.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction);

/// Copy of `ds` with fresh noise of the given sigma added to every
/// observation; stream per sample is derive_seed(seed, i).
Dataset with_noise(const Dataset& ds, double sigma, std::uint64_t seed);

bool same_source(const DatasetMeta& a, const DatasetMeta& b);

// Dataset container. See docs/file-formats.md for the byte layout.
std::string encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::string_view bytes);
void save(const Dataset& ds, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

/// JSON text describing meta (used in the container header and sidecars).
std::string meta_to_json(const DatasetMeta& meta, int indent = -1);
DatasetMeta meta_from_json(std::string_view text);

} // namespace hamlearn
