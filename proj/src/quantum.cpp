#include "hamlearn/quantum.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace hamlearn {

namespace {

constexpr double kNormTolerance = 1e-12;
constexpr double kHermitianTolerance = 1e-10;

int qubits_for_dim(Eigen::Index dim) {
  int n = 0;
  Eigen::Index d = 1;
  while (d < dim) {
    d <<= 1;
    ++n;
  }
  if (d != dim || dim < 2) {
    throw std::invalid_argument("state dimension must be a power of two >= 2");
  }
  return n;
}

void check_qubit_count(int n_qubits, int max_qubits) {
  if (n_qubits < 1) throw std::invalid_argument("qubit count must be >= 1");
  if (n_qubits > max_qubits) {
    throw std::length_error("qubit count " + std::to_string(n_qubits) +
                            " exceeds dense-matrix limit " + std::to_string(max_qubits));
  }
}

} // namespace

char to_char(Pauli p) {
  switch (p) {
  case Pauli::I: return 'I';
  case Pauli::X: return 'X';
  case Pauli::Y: return 'Y';
  case Pauli::Z: return 'Z';
  }
  return '?';
}

Pauli pauli_from_char(char c) {
  switch (std::toupper(static_cast<unsigned char>(c))) {
  case 'I': return Pauli::I;
  case 'X': return Pauli::X;
  case 'Y': return Pauli::Y;
  case 'Z': return Pauli::Z;
  default: throw std::invalid_argument(std::string("not a Pauli code: '") + c + "'");
  }
}

Eigen::Matrix2cd pauli_matrix(Pauli p) {
  const Complex i{0.0, 1.0};
  Eigen::Matrix2cd m;
  switch (p) {
  case Pauli::I: m << 1.0, 0.0, 0.0, 1.0; break;
  case Pauli::X: m << 0.0, 1.0, 1.0, 0.0; break;
  case Pauli::Y: m << 0.0, -i, i, 0.0; break;
  case Pauli::Z: m << 1.0, 0.0, 0.0, -1.0; break;
  }
  return m;
}

PauliString::PauliString(std::vector<Pauli> factors) : factors_(std::move(factors)) {
  if (factors_.empty()) throw std::invalid_argument("Pauli string needs at least one qubit");
}

PauliString PauliString::parse(std::string_view text) {
  std::vector<Pauli> f;
  f.reserve(text.size());
  for (char c : text) f.push_back(pauli_from_char(c));
  return PauliString(std::move(f));
}

PauliString PauliString::local(int n_qubits, int i, Pauli a) {
  if (i < 0 || i >= n_qubits) throw std::out_of_range("qubit index out of range");
  std::vector<Pauli> f(static_cast<std::size_t>(n_qubits), Pauli::I);
  f[static_cast<std::size_t>(i)] = a;
  return PauliString(std::move(f));
}

PauliString PauliString::pair(int n_qubits, int i, Pauli a, int j, Pauli b) {
  if (i == j) throw std::invalid_argument("pair term needs two distinct qubits");
  if (j < 0 || j >= n_qubits) throw std::out_of_range("qubit index out of range");
  PauliString p = local(n_qubits, i, a);
  p.factors_[static_cast<std::size_t>(j)] = b;
  return p;
}

bool PauliString::is_identity() const noexcept {
  return std::all_of(factors_.begin(), factors_.end(), [](Pauli p) { return p == Pauli::I; });
}

std::string PauliString::str() const {
  std::string s;
  s.reserve(factors_.size());
  for (Pauli p : factors_) s.push_back(to_char(p));
  return s;
}

CMatrix term_matrix(const PauliString& p, int max_qubits) {
  check_qubit_count(p.size(), max_qubits);
  // A Pauli string is a signed/phased permutation matrix: row r has one
  // nonzero, in column r ^ flip_mask.
  const Eigen::Index dim = Eigen::Index{1} << p.size();
  CMatrix m = CMatrix::Zero(dim, dim);
  for (Eigen::Index col = 0; col < dim; ++col) {
    Eigen::Index row = 0;
    Complex amp{1.0, 0.0};
    for (int q = 0; q < p.size(); ++q) {
      const int shift = p.size() - 1 - q;
      const int in_bit = static_cast<int>((col >> shift) & 1);
      const auto local = pauli_matrix(p[q]);
      const int out_bit = (p[q] == Pauli::X || p[q] == Pauli::Y) ? 1 - in_bit : in_bit;
      amp *= local(out_bit, in_bit);
      row |= static_cast<Eigen::Index>(out_bit) << shift;
    }
    m(row, col) = amp;
  }
  return m;
}

void HamiltonianModel::validate() const {
  if (n_qubits < 1) throw std::invalid_argument("model needs at least one qubit");
  if (terms.empty()) throw std::invalid_argument("model needs at least one term");
  if (theta.size() != terms.size()) {
    throw std::invalid_argument("theta length " + std::to_string(theta.size()) +
                                " does not match term count " + std::to_string(terms.size()));
  }
  for (std::size_t a = 0; a < terms.size(); ++a) {
    if (terms[a].size() != n_qubits) throw std::invalid_argument("term length differs from qubit count");
    if (terms[a].is_identity()) throw std::invalid_argument("identity term is not allowed");
    for (std::size_t b = 0; b < a; ++b) {
      if (terms[a] == terms[b]) throw std::invalid_argument("duplicate term " + terms[a].str());
    }
  }
  for (double t : theta) {
    if (!std::isfinite(t)) throw std::invalid_argument("non-finite coefficient");
  }
}

CMatrix assemble(const HamiltonianModel& model, int max_qubits) {
  model.validate();
  check_qubit_count(model.n_qubits, max_qubits);
  const Eigen::Index dim = Eigen::Index{1} << model.n_qubits;
  CMatrix h = CMatrix::Zero(dim, dim);
  for (std::size_t k = 0; k < model.terms.size(); ++k) {
    h += model.theta[k] * term_matrix(model.terms[k], max_qubits);
  }
  return h;
}

SpectralDecomposition spectral(const CMatrix& h) {
  if (h.rows() != h.cols() || h.rows() == 0) throw std::invalid_argument("matrix must be square");
  const double asym = (h - h.adjoint()).cwiseAbs().maxCoeff();
  if (asym > kHermitianTolerance) {
    throw std::invalid_argument("matrix is not Hermitian (max |H - H^dagger| = " +
                                std::to_string(asym) + ")");
  }
  const CMatrix sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(sym);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

QuantumState::QuantumState(CVector amplitudes)
    : amplitudes_(std::move(amplitudes)), n_qubits_(qubits_for_dim(amplitudes_.size())) {
  const double norm = amplitudes_.norm();
  if (std::abs(norm - 1.0) > kNormTolerance) {
    throw std::invalid_argument("state is not normalized (norm = " + std::to_string(norm) + ")");
  }
}

QuantumState::QuantumState(CVector amplitudes, Unchecked)
    : amplitudes_(std::move(amplitudes)), n_qubits_(qubits_for_dim(amplitudes_.size())) {}

QuantumState QuantumState::basis(int n_qubits, std::uint64_t index) {
  check_qubit_count(n_qubits, 62);
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  if (index >= static_cast<std::uint64_t>(dim)) throw std::out_of_range("basis index out of range");
  CVector v = CVector::Zero(dim);
  v(static_cast<Eigen::Index>(index)) = 1.0;
  return QuantumState(std::move(v));
}

QuantumState evolve(const SpectralDecomposition& dec, const QuantumState& psi0, double t) {
  if (!std::isfinite(t)) throw std::invalid_argument("evolution time must be finite");
  if (dec.eigenvectors.rows() != psi0.dim()) throw std::invalid_argument("dimension mismatch");
  CVector c = dec.eigenvectors.adjoint() * psi0.amplitudes();
  for (Eigen::Index k = 0; k < c.size(); ++k) {
    c(k) *= std::polar(1.0, -dec.eigenvalues(k) * t);
  }
  return QuantumState(dec.eigenvectors * c, QuantumState::Unchecked{});
}

QuantumState apply_unitary(const CMatrix& u, const QuantumState& psi) {
  if (u.cols() != psi.dim() || u.rows() != psi.dim()) throw std::invalid_argument("dimension mismatch");
  return QuantumState(u * psi.amplitudes(), QuantumState::Unchecked{});
}

double expectation(const QuantumState& psi, int qubit, Axis axis) {
  const int n = psi.n_qubits();
  if (qubit < 0 || qubit >= n) throw std::out_of_range("qubit index out of range");
  const auto& a = psi.amplitudes();
  const Eigen::Index mask = Eigen::Index{1} << (n - 1 - qubit);
  double acc = 0.0;
  switch (axis) {
  case Axis::Z:
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      acc += (i & mask) ? -std::norm(a(i)) : std::norm(a(i));
    }
    return acc;
  case Axis::X:
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (!(i & mask)) acc += (std::conj(a(i)) * a(i | mask)).real();
    }
    return 2.0 * acc;
  case Axis::Y:
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (!(i & mask)) acc += (std::conj(a(i)) * a(i | mask)).imag();
    }
    return 2.0 * acc;
  }
  return 0.0;
}

ObservationSeries observe_series(const HamiltonianModel& model,
                                 std::span<const QuantumState> states, double tau, int n_steps) {
  return observe_series(spectral(assemble(model)), model.n_qubits, states, tau, n_steps);
}

ObservationSeries observe_series(const SpectralDecomposition& dec, int n_qubits,
                                 std::span<const QuantumState> states, double tau, int n_steps) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be positive");
  if (n_steps < 1) throw std::invalid_argument("need at least one time step");
  if (states.empty()) throw std::invalid_argument("need at least one initial state");

  ObservationSeries out;
  out.n_qubits = n_qubits;
  out.n_states = static_cast<int>(states.size());
  out.n_steps = n_steps;
  out.tau = tau;
  out.values.resize(ObservationSeries::value_count(n_qubits, out.n_states, n_steps));

  for (int k = 0; k < out.n_states; ++k) {
    const QuantumState& psi0 = states[static_cast<std::size_t>(k)];
    if (psi0.n_qubits() != n_qubits) throw std::invalid_argument("initial state has wrong qubit count");
    for (int j = 0; j < n_steps; ++j) {
      const QuantumState psi = evolve(dec, psi0, (j + 1) * tau);
      for (int q = 0; q < n_qubits; ++q) {
        out.at(k, j, 3 * q + 0) = expectation(psi, q, Axis::X);
        out.at(k, j, 3 * q + 1) = expectation(psi, q, Axis::Y);
        out.at(k, j, 3 * q + 2) = expectation(psi, q, Axis::Z);
      }
    }
  }
  return out;
}

QuantumState haar_random_state(int n_qubits, Rng& rng) {
  check_qubit_count(n_qubits, kDefaultMaxQubits);
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  CVector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double re = rng.normal();
    const double im = rng.normal();
    v(i) = Complex(re, im);
  }
  v /= v.norm();
  return QuantumState(std::move(v));
}

} // namespace hamlearn
