#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hamlearn/decoupling.hpp"
#include "oracles.hpp"

using namespace hamlearn;
using namespace hamlearn::dd;

namespace {

constexpr double kTau = 0.02 * std::numbers::pi;

std::vector<QuantumState> pair_states(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<QuantumState> s;
  for (int k = 0; k < 3; ++k) s.push_back(haar_random_state(2, rng));
  return s;
}

HamiltonianModel zz_chain(double j, double k) {
  HamiltonianModel m;
  m.n_qubits = 3;
  m.terms = {PauliString::parse("ZZI"), PauliString::parse("IZZ")};
  m.theta = {j, k};
  return m;
}

PulseSchedule schedule(int n, QubitPair pair, int p) {
  PulseSchedule s;
  s.n_qubits = n;
  s.targets = pair;
  s.cycles_per_interval = p;
  s.tau = kTau;
  return s;
}

double log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += std::log(x[i]), my += std::log(y[i]);
  mx /= double(x.size());
  my /= double(y.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

} // namespace

TEST_CASE("pulse unitaries") {
  const std::vector<int> none;
  CHECK(pulse_unitary(3, Axis::X, none) == CMatrix::Identity(8, 8));

  const std::vector<int> third{2};
  const CMatrix x = pulse_unitary(3, Axis::X, third);
  CHECK((x - Complex(0, -1) * oracle::kron_string("IIX")).cwiseAbs().maxCoeff() == 0.0);
  CHECK((x * x + CMatrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((x.adjoint() * x - CMatrix::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-12);

  const std::vector<int> two{0, 2};
  const CMatrix y = pulse_unitary(3, Axis::Y, two);
  CHECK((y - Complex(-1, 0) * oracle::kron_string("YIY")).cwiseAbs().maxCoeff() < 1e-15);

  SUBCASE("an X pulse flips the spectator's z expectation") {
    const QuantumState zero = QuantumState::basis(3, 0);
    CHECK(expectation(zero, 2, Axis::Z) == 1.0);
    CHECK(expectation(apply_unitary(x, zero), 2, Axis::Z) == doctest::Approx(-1.0));
    Rng rng(4);
    const QuantumState psi = haar_random_state(3, rng);
    const QuantumState twice = apply_unitary(x, apply_unitary(x, psi));
    for (int q = 0; q < 3; ++q)
      for (Axis a : {Axis::X, Axis::Y, Axis::Z})
        CHECK(expectation(twice, q, a) == doctest::Approx(expectation(psi, q, a)).epsilon(1e-13));
  }

  CHECK_THROWS_AS(pulse_unitary(3, Axis::Z, third), std::invalid_argument);
  const std::vector<int> clash{1};
  CHECK_THROWS_AS(spectator_pulse(3, Axis::X, clash, QubitPair{0, 1}), std::invalid_argument);
  CHECK_NOTHROW(spectator_pulse(3, Axis::X, third, QubitPair{0, 1}));
}

TEST_CASE("schedules") {
  PulseSchedule s = schedule(5, {1, 3}, 4);
  CHECK(s.segment() == doctest::Approx(kTau / 16.0));
  CHECK(s.spectators() == std::vector<int>{0, 2, 4});
  CHECK(s.pulsed_qubits() == std::vector<int>{0, 2, 4});
  s.placement = PulsePlacement::Targets;
  CHECK(s.pulsed_qubits() == std::vector<int>{1, 3});
  s.cycles_per_interval = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = schedule(3, {1, 1}, 1);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = schedule(3, {0, 3}, 1);
  CHECK_THROWS_AS(s.validate(), std::out_of_range);
}

TEST_CASE("interval propagators are unitary") {
  Rng rng(9);
  const ModelFamily h3 = ModelFamily::h3(4);
  const auto dec = spectral(assemble(h3.model(sample_parameters(h3, rng))));
  for (int p : {1, 2, 4, 8, 16}) {
    const CMatrix u = interval_propagator(dec, schedule(4, {0, 2}, p));
    CHECK((u.adjoint() * u - CMatrix::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("state embedding") {
  const auto s = pair_states(3)[0];
  const QuantumState e = embed_pair_state(s, 3, {0, 2});
  CHECK(e.n_qubits() == 3);
  CHECK(expectation(e, 1, Axis::Z) == doctest::Approx(1.0).epsilon(1e-14));
  for (Axis a : {Axis::X, Axis::Y, Axis::Z}) {
    CHECK(expectation(e, 0, a) == doctest::Approx(expectation(s, 0, a)).epsilon(1e-13));
    CHECK(expectation(e, 2, a) == doctest::Approx(expectation(s, 1, a)).epsilon(1e-13));
  }
}

TEST_CASE("isolated pair model") {
  const ModelFamily h3 = ModelFamily::h3(3);
  const std::vector<double> theta{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const HamiltonianModel iso = isolated_pair_model(h3.model(theta), {0, 2});
  CHECK(iso.n_qubits == 2);
  REQUIRE(iso.terms.size() == 3);
  CHECK(iso.terms[0].str() == "ZI");
  CHECK(iso.theta[0] == 0.1);
  CHECK(iso.terms[1].str() == "IZ");
  CHECK(iso.theta[1] == 0.3);
  CHECK(iso.terms[2].str() == "XX");
  CHECK(iso.theta[2] == 0.5);
}

TEST_CASE("decoupled observation") {
  const auto states = pair_states(5);

  SUBCASE("commuting spectator couplings cancel exactly") {
    const HamiltonianModel m = zz_chain(0.7, -0.9);
    HamiltonianModel j_only;
    j_only.n_qubits = 2;
    j_only.terms = {PauliString::parse("ZZ")};
    j_only.theta = {0.7};
    const auto ref = observe_series(j_only, states, kTau, 60);
    for (int p : {1, 2, 4}) {
      const auto s = observe_with_dd(m, schedule(3, {0, 1}, p), states, 60);
      CHECK(s.n_qubits == 2);
      CHECK(s.n_states == 3);
      CHECK(s.n_steps == 60);
      CHECK(s.tau == kTau);
      CHECK(max_abs_deviation(s, ref) <= 1e-10);
    }
  }

  SUBCASE("pair-internal models are untouched by spectator pulses") {
    HamiltonianModel m;
    m.n_qubits = 3;
    m.terms = {PauliString::parse("ZII"), PauliString::parse("IZI"), PauliString::parse("XXI")};
    m.theta = {0.3, -0.6, 0.8};
    const auto iso = observe_isolated(m, {0, 1}, states, kTau, 40);
    for (int p : {1, 3}) CHECK(max_abs_deviation(observe_with_dd(m, schedule(3, {0, 1}, p), states, 40), iso) <= 1e-10);
  }

  SUBCASE("agrees with the explicit pulse-sequence oracle") {
    Rng rng(8);
    const ModelFamily h3 = ModelFamily::h3(4);
    const auto theta = sample_parameters(h3, rng);
    std::vector<std::string> terms;
    for (const auto& t : h3.terms) terms.push_back(t.str());
    const oracle::CMat h = oracle::hamiltonian(terms, theta);
    const QubitPair pair{1, 3};
    std::vector<oracle::CVec> full;
    for (const auto& s : states) full.push_back(embed_pair_state(s, 4, pair).amplitudes());
    for (auto placement : {PulsePlacement::Spectators, PulsePlacement::Targets}) {
      PulseSchedule sched = schedule(4, pair, 2);
      sched.placement = placement;
      const auto s = observe_with_dd(h3.model(theta), sched, states, 12);
      const auto ref = oracle::observe_dd(h, 4, sched.pulsed_qubits(), 1, 3, full, kTau, 2, 12);
      REQUIRE(ref.size() == s.values.size());
      double dev = 0.0;
      for (std::size_t i = 0; i < ref.size(); ++i) dev = std::max(dev, std::abs(ref[i] - s.values[i]));
      CHECK(dev < 1e-10);
    }
  }

  SUBCASE("deviation from isolated evolution falls with the cycle count") {
    Rng rng(13);
    const ModelFamily h3 = ModelFamily::h3(4);
    const HamiltonianModel m = h3.model(sample_parameters(h3, rng));
    const QubitPair pair{0, 1};
    const auto iso = observe_isolated(m, pair, states, kTau, 100);
    std::vector<double> ps, devs;
    for (int p : {1, 2, 4, 8, 16}) {
      ps.push_back(p);
      devs.push_back(max_abs_deviation(observe_with_dd(m, schedule(4, pair, p), states, 100), iso));
    }
    for (std::size_t i = 1; i < devs.size(); ++i) CHECK(devs[i] < devs[i - 1]);
    CHECK(log_slope(ps, devs) <= -0.8);
  }

  CHECK_THROWS_AS(observe_with_dd(zz_chain(1, 1), schedule(3, {0, 1}, 0), states, 5), std::invalid_argument);
  HamiltonianModel two;
  two.n_qubits = 2;
  two.terms = {PauliString::parse("ZZ")};
  two.theta = {1};
  CHECK_THROWS_AS(observe_with_dd(two, schedule(2, {0, 1}, 1), states, 5), std::invalid_argument);
}

TEST_CASE("coupled pairs") {
  CHECK(coupled_pairs(ModelFamily::h3(7)).size() == 21);
  const auto h4 = coupled_pairs(ModelFamily::h4(5));
  CHECK(h4.size() == 4 + 3 + 2);
  CHECK(h4.front() == QubitPair{0, 1});
  CHECK(h4.back() == QubitPair{3, 4});
}

TEST_CASE("full-system estimation") {
  // Small H1 predictor; the checks below compare against that same predictor
  // applied to native pair series, so its accuracy does not matter.
  const Dataset ds = generate(make_meta(ModelFamily::h1(), kTau, 10, 200, 31));
  const auto [train, val] = split(ds, 0.8);
  PipelineConfig cfg;
  cfg.hidden_dim = 8;
  cfg.fc_hidden = {8};
  cfg.train.epochs = 3;
  cfg.train.batch_size = 16;
  cfg.train.learning_rate = 1e-2;
  cfg.max_stages = 2;
  cfg.improvement_margin = 0.0;
  const MultiStagePredictor pred = run_pipeline(train, val, cfg).predictor;
  REQUIRE(pred.size() == 2);

  SUBCASE("zero couplings on three qubits") {
    const ModelFamily h3 = ModelFamily::h3(3);
    const std::vector<double> theta{0.4, -0.7, 0.9, 0.0, 0.0, 0.0};
    const FullEstimate est = estimate_full(h3, theta, pred, 2);
    REQUIRE(est.pairs.size() == 3);
    REQUIRE(est.theta_hat.size() == 2);
    for (int k = 1; k <= 2; ++k) {
      std::vector<std::vector<double>> native;
      for (const auto& pe : est.pairs) {
        HamiltonianModel iso;
        iso.n_qubits = 2;
        iso.terms = ModelFamily::h1().terms;
        iso.theta = {theta[pe.pair.first], theta[pe.pair.second], 0.0};
        native.push_back(predict(pred, observe_series(iso, pred.meta.initial_states, kTau, 10), k));
        CHECK(pe.series_deviation <= 1e-10);
      }
      const auto& hat = est.theta_hat[k - 1];
      // Pairs in order (0,1), (0,2), (1,2).
      CHECK(hat[0] == doctest::Approx((native[0][0] + native[1][0]) / 2).epsilon(1e-9));
      CHECK(hat[1] == doctest::Approx((native[0][1] + native[2][0]) / 2).epsilon(1e-9));
      CHECK(hat[2] == doctest::Approx((native[1][1] + native[2][1]) / 2).epsilon(1e-9));
      CHECK(hat[3] == doctest::Approx(native[0][2]).epsilon(1e-9));
      CHECK(hat[5] == doctest::Approx(native[2][2]).epsilon(1e-9));
    }
  }

  SUBCASE("tables") {
    const ModelFamily h3 = ModelFamily::h3(3);
    Rng rng(2);
    const auto theta = sample_parameters(h3, rng);
    std::vector<FullEstimate> all;
    for (int p : {1, 2}) all.push_back(estimate_full(h3, theta, pred, p));
    const Table f = fidelity_table(all, theta);
    CHECK(f.columns() == std::vector<std::string>{"P", "stage", "fidelity", "infidelity"});
    CHECK(f.rows().size() == 4);
    const Table r = relative_error_table(h3, all, theta, 1e-3);
    CHECK(r.columns() == std::vector<std::string>{"P", "stage", "local", "coupling"});
    const Table pt = pair_table(all, pred, theta);
    CHECK(pt.rows().size() == 2u * 2u * 3u);
    CHECK(pt.rows().front().front() == "1-2");
  }

  SUBCASE("structures the predictor cannot express are rejected") {
    const ModelFamily h4 = ModelFamily::h4(3);
    std::vector<double> theta(h4.size(), 0.01);
    CHECK_THROWS_AS(estimate_full(h4, theta, pred, 1), std::invalid_argument);
  }
}
