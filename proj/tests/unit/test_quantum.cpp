#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hamlearn/dataset.hpp"
#include "hamlearn/quantum.hpp"
#include "oracles.hpp"

using namespace hamlearn;

namespace {

double max_abs(const CMatrix& a) { return a.cwiseAbs().maxCoeff(); }

QuantumState plus_state() {
  CVector v(2);
  v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  return QuantumState(v);
}

std::vector<oracle::CVec> amplitudes(const std::vector<QuantumState>& states) {
  std::vector<oracle::CVec> out;
  for (const auto& s : states) out.push_back(s.amplitudes());
  return out;
}

} // namespace

TEST_CASE("single-qubit Pauli matrices") {
  Eigen::Matrix2cd z;
  z << 1, 0, 0, -1;
  CHECK(pauli_matrix(Pauli::Z) == z);
  CHECK(pauli_matrix(Pauli::I) == Eigen::Matrix2cd::Identity());
  CHECK(pauli_matrix(Pauli::X) * pauli_matrix(Pauli::X) == Eigen::Matrix2cd::Identity());
  for (Pauli p : {Pauli::I, Pauli::X, Pauli::Y, Pauli::Z}) {
    const auto m = pauli_matrix(p);
    CHECK((m - m.adjoint()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((m * m.adjoint() - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("Pauli string parsing") {
  const auto p = PauliString::parse("XIZ");
  CHECK(p.size() == 3);
  CHECK(p[0] == Pauli::X);
  CHECK(p[2] == Pauli::Z);
  CHECK(p.str() == "XIZ");
  CHECK(PauliString::parse("III").is_identity());
  CHECK(PauliString::local(3, 1, Pauli::Y).str() == "IYI");
  CHECK(PauliString::pair(4, 0, Pauli::X, 3, Pauli::Z).str() == "XIIZ");
  CHECK_THROWS(PauliString::parse("XQ"));
  CHECK_THROWS(PauliString::parse(""));
}

TEST_CASE("term matrices follow the leftmost-is-most-significant convention") {
  const CMatrix zi = term_matrix(PauliString::parse("ZI"));
  CHECK(max_abs(zi - CVector(Eigen::Vector4cd(1, 1, -1, -1)).asDiagonal().toDenseMatrix()) == 0.0);

  const CMatrix xx = term_matrix(PauliString::parse("XX"));
  CMatrix anti = CMatrix::Zero(4, 4);
  for (int i = 0; i < 4; ++i) anti(i, 3 - i) = 1.0;
  CHECK(max_abs(xx - anti) == 0.0);

  CHECK(max_abs(term_matrix(PauliString::parse("IZI")) - oracle::kron_string("IZI")) == 0.0);

  SUBCASE("every three-qubit string matches the Kronecker oracle") {
    for (int code = 1; code < 64; ++code) {
      std::string s;
      for (int q = 2; q >= 0; --q) s += "IXYZ"[(code >> (2 * q)) & 3];
      CHECK(max_abs(term_matrix(PauliString::parse(s)) - oracle::kron_string(s)) == 0.0);
    }
  }
}

TEST_CASE("term matrices refuse systems above the qubit limit") {
  CHECK_THROWS_AS(term_matrix(PauliString::parse(std::string(11, 'Z'))), std::length_error);
  CHECK_NOTHROW(term_matrix(PauliString::parse("ZZZZ"), 4));
  CHECK_THROWS_AS(term_matrix(PauliString::parse("ZZZZZ"), 4), std::length_error);
}

TEST_CASE("assembled Hamiltonians") {
  const ModelFamily h1 = ModelFamily::h1();
  const double diag[] = {1, 1, -1, -1};
  const CMatrix a = assemble(h1.model(std::vector<double>{1, 0, 0}));
  for (int i = 0; i < 4; ++i) CHECK(a(i, i) == Complex(diag[i], 0));
  CHECK(max_abs(a - CMatrix(a.diagonal().asDiagonal())) == 0.0);

  CHECK(max_abs(assemble(h1.model(std::vector<double>{0, 0, 0}))) == 0.0);

  const std::vector<double> theta{0.3, -0.7, 0.5};
  const CMatrix h = assemble(h1.model(theta));
  const CMatrix ref = oracle::hamiltonian({"ZI", "IZ", "XX"}, theta);
  // Hand sums: (0,0) = w1 + w2, (1,1) = w1 - w2, (0,3) = J.
  CHECK(h(0, 0).real() == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(h(1, 1).real() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(h(0, 3).real() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(max_abs(h - ref) < 1e-15);
  CHECK(max_abs(h - h.adjoint()) <= 1e-12);
  CHECK(std::abs(h.trace()) <= 1e-12);
}

TEST_CASE("model validation") {
  HamiltonianModel m;
  m.n_qubits = 2;
  m.terms = {PauliString::parse("XX"), PauliString::parse("XX")};
  m.theta = {1, 2};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  m.terms = {PauliString::parse("II")};
  m.theta = {1};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  m.terms = {PauliString::parse("XXX")};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  m.terms = {PauliString::parse("XY")};
  m.theta = {1, 2};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  m.terms.clear();
  m.theta.clear();
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
}

TEST_CASE("spectral decomposition") {
  const auto d = spectral(term_matrix(PauliString::parse("ZI")));
  CHECK(d.eigenvalues(0) == doctest::Approx(-1));
  CHECK(d.eigenvalues(1) == doctest::Approx(-1));
  CHECK(d.eigenvalues(2) == doctest::Approx(1));
  CHECK(d.eigenvalues(3) == doctest::Approx(1));

  const double w = 0.37;
  const auto dx = spectral(w * term_matrix(PauliString::parse("X")));
  CHECK(dx.eigenvalues(0) == doctest::Approx(-w).epsilon(1e-14));
  CHECK(dx.eigenvalues(1) == doctest::Approx(w).epsilon(1e-14));

  Rng rng(5);
  const ModelFamily h2 = ModelFamily::h2();
  for (int rep = 0; rep < 20; ++rep) {
    const CMatrix h = assemble(h2.model(sample_parameters(h2, rng)));
    const auto dec = spectral(h);
    const CMatrix recon = dec.eigenvectors * dec.eigenvalues.cast<Complex>().asDiagonal() * dec.eigenvectors.adjoint();
    CHECK(max_abs(recon - h) < 1e-10);
    CHECK(max_abs(dec.eigenvectors.adjoint() * dec.eigenvectors - CMatrix::Identity(4, 4)) < 1e-10);
    for (int k = 1; k < 4; ++k) CHECK(dec.eigenvalues(k - 1) <= dec.eigenvalues(k));
  }

  CMatrix bad = CMatrix::Zero(2, 2);
  bad(0, 1) = 1.0;
  CHECK_THROWS_AS(spectral(bad), std::invalid_argument);
}

TEST_CASE("states") {
  CHECK_THROWS_AS(QuantumState(CVector::Ones(2)), std::invalid_argument);
  CHECK_THROWS_AS(QuantumState(CVector::Ones(3) / std::sqrt(3.0)), std::invalid_argument);
  const auto b = QuantumState::basis(2, 3);
  CHECK(b.amplitudes()(3) == Complex(1, 0));
  CHECK(b.n_qubits() == 2);
}

TEST_CASE("free evolution") {
  const double w = 0.5;
  const auto dec = spectral(w * term_matrix(PauliString::parse("Z")));
  const QuantumState plus = plus_state();

  CHECK(evolve(dec, plus, 0.0).amplitudes() == plus.amplitudes());
  for (double t : {0.1, 1.0, 3.7, 12.0}) {
    CHECK(expectation(evolve(dec, plus, t), 0, Axis::X) == doctest::Approx(std::cos(2 * w * t)).epsilon(1e-13));
  }

  SUBCASE("matches the matrix-exponential oracle on random instances") {
    Rng rng(11);
    const ModelFamily h2 = ModelFamily::h2();
    for (int rep = 0; rep < 50; ++rep) {
      const CMatrix h = assemble(h2.model(sample_parameters(h2, rng)));
      const QuantumState psi = haar_random_state(2, rng);
      const double t = 5.0 * rng.uniform();
      const QuantumState out = evolve(spectral(h), psi, t);
      const oracle::CVec ref = oracle::expm(Complex(0, -t) * h) * psi.amplitudes();
      CHECK((out.amplitudes() - ref).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(std::abs(out.amplitudes().norm() - 1.0) < 1e-12);
    }
  }

  SUBCASE("evolution composes additively in time") {
    Rng rng(12);
    const ModelFamily h2 = ModelFamily::h2();
    const auto d2 = spectral(assemble(h2.model(sample_parameters(h2, rng))));
    const QuantumState psi = haar_random_state(2, rng);
    const auto a = evolve(d2, evolve(d2, psi, 0.7), 1.9);
    const auto b = evolve(d2, psi, 2.6);
    CHECK((a.amplitudes() - b.amplitudes()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("single-qubit expectations") {
  const auto zero = QuantumState::basis(1, 0);
  CHECK(expectation(zero, 0, Axis::Z) == 1.0);
  const auto plus = plus_state();
  CHECK(expectation(plus, 0, Axis::X) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(expectation(plus, 0, Axis::Z)) < 1e-15);

  CVector bell = CVector::Zero(4);
  bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
  const QuantumState b(bell);
  for (int q = 0; q < 2; ++q)
    for (Axis a : {Axis::X, Axis::Y, Axis::Z}) CHECK(std::abs(expectation(b, q, a)) < 1e-15);

  CHECK_THROWS_AS(expectation(b, 2, Axis::X), std::out_of_range);
  CHECK_THROWS_AS(expectation(b, -1, Axis::X), std::out_of_range);

  SUBCASE("agrees with the explicit-operator oracle") {
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
      const auto psi = haar_random_state(3, rng);
      for (int q = 0; q < 3; ++q) {
        CHECK(expectation(psi, q, Axis::X) == doctest::Approx(oracle::expval(psi.amplitudes(), 3, q, 'X')).epsilon(1e-13));
        CHECK(expectation(psi, q, Axis::Y) == doctest::Approx(oracle::expval(psi.amplitudes(), 3, q, 'Y')).epsilon(1e-13));
        CHECK(expectation(psi, q, Axis::Z) == doctest::Approx(oracle::expval(psi.amplitudes(), 3, q, 'Z')).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("observation series") {
  Rng rng(21);
  std::vector<QuantumState> states;
  for (int k = 0; k < 3; ++k) states.push_back(haar_random_state(2, rng));
  const double tau = 0.02 * std::numbers::pi;
  const ModelFamily h1 = ModelFamily::h1();

  SUBCASE("zero Hamiltonian keeps the initial expectations") {
    const auto s = observe_series(h1.model(std::vector<double>{0, 0, 0}), states, tau, 7);
    CHECK(s.n_steps == 7);
    CHECK(s.values.size() == 3u * 7u * 6u);
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 7; ++j)
        for (int q = 0; q < 2; ++q)
          for (int a = 0; a < 3; ++a)
            CHECK(s.at(k, j, 3 * q + a) ==
                  doctest::Approx(expectation(states[k], q, static_cast<Axis>(a))).epsilon(1e-14));
  }

  SUBCASE("x channel precesses at twice the field") {
    HamiltonianModel m;
    m.n_qubits = 1;
    m.terms = {PauliString::parse("Z")};
    const std::vector<QuantumState> plus(3, plus_state());
    for (double w : {0.1, 0.5, 1.0}) {
      m.theta = {w};
      const auto s = observe_series(m, plus, tau, 100);
      for (int j = 0; j < 100; ++j) CHECK(std::abs(s.at(0, j, 0) - std::cos(2 * w * (j + 1) * tau)) <= 1e-12);
    }
  }

  SUBCASE("agrees with small-step time integration") {
    for (int rep = 0; rep < 3; ++rep) {
      const auto theta = sample_parameters(h1, rng);
      const auto s = observe_series(h1.model(theta), states, tau, 100);
      const oracle::CMat h = oracle::hamiltonian({"ZI", "IZ", "XX"}, theta);
      double dev = 0.0;
      for (int k = 0; k < 3; ++k) {
        oracle::CVec psi = states[k].amplitudes();
        for (int j = 0; j < 100; ++j) {
          psi = oracle::rk4_evolve(h, psi, tau, 1000);
          for (int q = 0; q < 2; ++q) {
            int a = 0;
            for (char ax : {'X', 'Y', 'Z'}) dev = std::max(dev, std::abs(s.at(k, j, 3 * q + a++) - oracle::expval(psi, 2, q, ax)));
          }
        }
      }
      CHECK(dev < 1e-6);
    }
  }

  SUBCASE("agrees with the matrix-exponential oracle and stays in range") {
    const ModelFamily h2 = ModelFamily::h2();
    const auto theta = sample_parameters(h2, rng);
    const auto s = observe_series(h2.model(theta), states, tau, 100);
    std::vector<std::string> terms;
    for (const auto& t : h2.terms) terms.push_back(t.str());
    const auto ref = oracle::observe(oracle::hamiltonian(terms, theta), 2, amplitudes(states), tau, 100);
    REQUIRE(ref.size() == s.values.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(std::abs(s.values[i] - ref[i]) < 1e-10);
      CHECK(std::abs(s.values[i]) <= 1.0);
    }
  }

  CHECK_THROWS(observe_series(h1.model(std::vector<double>{0, 0, 0}), states, 0.0, 5));
  CHECK_THROWS(observe_series(h1.model(std::vector<double>{0, 0, 0}), states, tau, 0));
}

TEST_CASE("Haar-random states") {
  Rng a(77), b(77);
  const auto s1 = haar_random_state(2, a);
  const auto s2 = haar_random_state(2, b);
  CHECK(s1 == s2);
  Rng rng(78);
  double mean = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto s = haar_random_state(2, rng);
    CHECK(std::abs(s.amplitudes().norm() - 1.0) <= 1e-12);
    mean += expectation(s, 0, Axis::Z);
  }
  mean /= n;
  // A single-qubit marginal of a Haar state in dimension 4 has variance 1/5.
  CHECK(std::abs(mean) < 3.0 * std::sqrt(0.2) / std::sqrt(double(n)));
}
