#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "hamlearn/rng.hpp"

namespace hamlearn {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Dense matrices beyond this many qubits are refused unless the caller
/// raises the limit explicitly.
inline constexpr int kDefaultMaxQubits = 10;

enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };
enum class Axis : std::uint8_t { X = 0, Y = 1, Z = 2 };

char to_char(Pauli p);
Pauli pauli_from_char(char c);

Eigen::Matrix2cd pauli_matrix(Pauli p);

/// Tensor product of single-qubit Paulis. Factor 0 is qubit 0, the leftmost
/// (most significant) Kronecker factor; this ordering is used everywhere.
class PauliString {
public:
  PauliString() = default;
  explicit PauliString(std::vector<Pauli> factors);

  /// Parses e.g. "XZI". Case-insensitive.
  static PauliString parse(std::string_view text);

  /// Identity everywhere except `a` on qubit `i` (and `b` on qubit `j`).
  static PauliString local(int n_qubits, int i, Pauli a);
  static PauliString pair(int n_qubits, int i, Pauli a, int j, Pauli b);

  int size() const noexcept { return static_cast<int>(factors_.size()); }
  Pauli operator[](int q) const { return factors_.at(static_cast<std::size_t>(q)); }
  const std::vector<Pauli>& factors() const noexcept { return factors_; }
  bool is_identity() const noexcept;
  std::string str() const;

  friend bool operator==(const PauliString&, const PauliString&) = default;

private:
  std::vector<Pauli> factors_;
};

CMatrix term_matrix(const PauliString& p, int max_qubits = kDefaultMaxQubits);

/// H(theta) = sum_i theta_i T_i over a known set of Pauli strings.
struct HamiltonianModel {
  int n_qubits = 0;
  std::vector<PauliString> terms;
  std::vector<double> theta;

  /// Throws std::invalid_argument if terms are empty, duplicated, the wrong
  /// length, the identity, or if theta does not match the term count.
  void validate() const;
};

CMatrix assemble(const HamiltonianModel& model, int max_qubits = kDefaultMaxQubits);

struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues; // ascending
  CMatrix eigenvectors;        // columns; unitary
};

/// Eigendecomposition of a Hermitian matrix. Inputs whose anti-Hermitian
/// part exceeds 1e-10 (max abs entry) are rejected.
SpectralDecomposition spectral(const CMatrix& h);

/// Normalized pure state on n qubits.
class QuantumState {
public:
  QuantumState() = default;
  /// Throws unless the dimension is a power of two and the norm is 1 within 1e-12.
  explicit QuantumState(CVector amplitudes);

  /// Computational basis state |index> on n qubits.
  static QuantumState basis(int n_qubits, std::uint64_t index);

  int n_qubits() const noexcept { return n_qubits_; }
  Eigen::Index dim() const noexcept { return amplitudes_.size(); }
  const CVector& amplitudes() const noexcept { return amplitudes_; }

  friend bool operator==(const QuantumState& a, const QuantumState& b) {
    return a.n_qubits_ == b.n_qubits_ && a.amplitudes_ == b.amplitudes_;
  }

private:
  struct Unchecked {};
  QuantumState(CVector amplitudes, Unchecked);
  friend QuantumState evolve(const SpectralDecomposition&, const QuantumState&, double);
  friend QuantumState apply_unitary(const CMatrix&, const QuantumState&);

  CVector amplitudes_;
  int n_qubits_ = 0;
};

/// exp(-i H t) psi with H = V diag(lambda) V^dagger.
QuantumState evolve(const SpectralDecomposition& dec, const QuantumState& psi0, double t);

/// U psi, for U unitary (not checked).
QuantumState apply_unitary(const CMatrix& u, const QuantumState& psi);

/// <psi| sigma_axis on `qubit` |psi>, qubit 0-based from the left.
double expectation(const QuantumState& psi, int qubit, Axis axis);

/// Single-qubit expectation values recorded for several initial states.
///
/// values is laid out [state][step][feature] with feature = 3*qubit + axis
/// (x, y, z per qubit). Step j is the state evolved to t_j = (j + 1) * tau.
struct ObservationSeries {
  int n_qubits = 0;
  int n_states = 0;
  int n_steps = 0;
  double tau = 0.0;
  std::vector<double> values;

  int features_per_state() const noexcept { return 3 * n_qubits; }
  std::size_t size() const noexcept { return values.size(); }

  double& at(int state, int step, int feature) { return values[index(state, step, feature)]; }
  double at(int state, int step, int feature) const { return values[index(state, step, feature)]; }

  std::size_t index(int state, int step, int feature) const noexcept {
    return (static_cast<std::size_t>(state) * static_cast<std::size_t>(n_steps) +
            static_cast<std::size_t>(step)) *
               static_cast<std::size_t>(features_per_state()) +
           static_cast<std::size_t>(feature);
  }

  static std::size_t value_count(int n_qubits, int n_states, int n_steps) {
    return static_cast<std::size_t>(n_states) * static_cast<std::size_t>(n_steps) * 3u *
           static_cast<std::size_t>(n_qubits);
  }
};

/// Record all 3N single-qubit expectations of every state at t = tau, 2 tau, ..., S tau.
ObservationSeries observe_series(const HamiltonianModel& model,
                                 std::span<const QuantumState> states, double tau, int n_steps);

/// Same, reusing an existing decomposition of the model Hamiltonian.
ObservationSeries observe_series(const SpectralDecomposition& dec, int n_qubits,
                                 std::span<const QuantumState> states, double tau, int n_steps);

/// Haar-random pure state: normalized vector of i.i.d. complex Gaussians.
QuantumState haar_random_state(int n_qubits, Rng& rng);

} // namespace hamlearn
