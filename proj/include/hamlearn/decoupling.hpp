#pragma once

// Periodic XY-4 decoupling for reducing an N-qubit Pauli Hamiltonian to
// two-qubit subsystems that a pre-trained two-qubit predictor can read.
//
// One cycle is  free(d) . X . free(d) . Y . free(d) . X . free(d) . Y  with
// d = tau / (4P) and P cycles per sampling interval, so every observation
// time is a cycle boundary. Pulses are ideal, instantaneous pi rotations
// exp(-i pi sigma / 2) = -i sigma on every pulsed qubit.

#include <span>
#include <string>
#include <vector>

#include "hamlearn/dataset.hpp"
#include "hamlearn/multistage.hpp"
#include "hamlearn/quantum.hpp"
#include "hamlearn/table.hpp"

namespace hamlearn::dd {

struct QubitPair {
  int first = 0;
  int second = 1;
  friend bool operator==(const QubitPair&, const QubitPair&) = default;
};

enum class PulsePlacement {
  Spectators, // pulse every qubit outside the target pair (default)
  Targets,    // pulse only the target pair
};

struct PulseSchedule {
  int n_qubits = 0;
  QubitPair targets;
  int cycles_per_interval = 1;
  double tau = 0.0;
  PulsePlacement placement = PulsePlacement::Spectators;

  void validate() const;
  double segment() const { return tau / (4.0 * cycles_per_interval); }
  std::vector<int> spectators() const;
  std::vector<int> pulsed_qubits() const;
};

/// Tensor product of -i sigma_axis on each listed qubit and identity
/// elsewhere. axis must be X or Y. An empty list gives exactly the identity.
CMatrix pulse_unitary(int n_qubits, Axis axis, std::span<const int> pulsed);

/// As above for a spectator set; throws std::invalid_argument if it overlaps
/// the target pair.
CMatrix spectator_pulse(int n_qubits, Axis axis, std::span<const int> spectators, QubitPair targets);

/// Propagator over one sampling interval: P XY-4 cycles.
CMatrix interval_propagator(const SpectralDecomposition& dec, const PulseSchedule& schedule);

/// Embed a two-qubit state on the target pair, spectators in |0>.
QuantumState embed_pair_state(const QuantumState& pair_state, int n_qubits, QubitPair targets);

/// Evolve each embedded pair state under H with the schedule and record the
/// pair's six single-qubit expectations at t = tau, ..., S tau. The result is
/// a two-qubit ObservationSeries.
ObservationSeries observe_with_dd(const HamiltonianModel& model, const PulseSchedule& schedule,
                                  std::span<const QuantumState> pair_states, int n_steps);

/// The terms of `model` supported inside the pair, restricted to two qubits
/// (pair.first becomes qubit 0).
HamiltonianModel isolated_pair_model(const HamiltonianModel& model, QubitPair pair);

/// Two-qubit series of the isolated pair model, for comparison with observe_with_dd.
ObservationSeries observe_isolated(const HamiltonianModel& model, QubitPair pair,
                                   std::span<const QuantumState> pair_states, double tau, int n_steps);

double max_abs_deviation(const ObservationSeries& a, const ObservationSeries& b);

struct PairEstimate {
  QubitPair pair;
  /// Two-qubit estimate after each stage cutoff: [k - 1] uses stages 0..k-1.
  std::vector<std::vector<double>> theta_hat;
  /// Max deviation of the decoupled pair series from the isolated pair evolution.
  double series_deviation = 0.0;
};

struct FullEstimate {
  int cycles_per_interval = 0;
  std::vector<PairEstimate> pairs;
  /// Assembled estimate over all family parameters, one per stage cutoff.
  std::vector<std::vector<double>> theta_hat;
};

struct DdOptions {
  PulsePlacement placement = PulsePlacement::Spectators;
  int max_qubits = kDefaultMaxQubits;
};

/// Qubit pairs that carry at least one two-body term of the family, i < j.
std::vector<QubitPair> coupled_pairs(const ModelFamily& family);

/// Decouple every coupled pair, run the two-qubit predictor on its series
/// and assemble all family parameters. Two-body terms come from the single
/// pair that carries them; local terms are averaged over every pair that
/// contains the qubit. Throws std::invalid_argument when the predictor's
/// two-qubit family cannot express the pair structure.
FullEstimate estimate_full(const ModelFamily& family, std::span<const double> theta_true,
                           const MultiStagePredictor& predictor, int cycles_per_interval,
                           const DdOptions& options = {});

/// Rows (P, stage, fidelity, infidelity) for a set of estimates.
Table fidelity_table(const std::vector<FullEstimate>& estimates, std::span<const double> theta_true);

/// Rows (P, stage, group..., ) of mean relative error per parameter group.
Table relative_error_table(const ModelFamily& family, const std::vector<FullEstimate>& estimates,
                           std::span<const double> theta_true, double guard);

/// Rows (pair, P, stage, series deviation, pair estimates..., assembled
/// fidelity) for every pair run.
Table pair_table(const std::vector<FullEstimate>& estimates, const MultiStagePredictor& predictor,
                 std::span<const double> theta_true);

} // namespace hamlearn::dd
