#include "hamlearn/decoupling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace hamlearn::dd {

namespace {

// Qubits on which a Pauli string acts non-trivially.
std::vector<int> support(const PauliString& p) {
  std::vector<int> s;
  for (int q = 0; q < p.size(); ++q) {
    if (p[q] != Pauli::I) s.push_back(q);
  }
  return s;
}

// Restriction of a string supported inside `pair` to two qubits.
PauliString restrict_to_pair(const PauliString& p, QubitPair pair) {
  return PauliString({p[pair.first], p[pair.second]});
}

bool in_pair(int q, QubitPair pair) { return q == pair.first || q == pair.second; }

void check_pair(int n_qubits, QubitPair pair) {
  if (pair.first < 0 || pair.first >= n_qubits || pair.second < 0 || pair.second >= n_qubits) {
    throw std::out_of_range("target qubit out of range");
  }
  if (pair.first == pair.second) throw std::invalid_argument("target pair needs two distinct qubits");
}

} // namespace

void PulseSchedule::validate() const {
  if (n_qubits < 2) throw std::invalid_argument("schedule needs at least two qubits");
  check_pair(n_qubits, targets);
  if (cycles_per_interval < 1) throw std::invalid_argument("cycles per interval must be >= 1");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be positive");
}

std::vector<int> PulseSchedule::spectators() const {
  std::vector<int> s;
  for (int q = 0; q < n_qubits; ++q) {
    if (!in_pair(q, targets)) s.push_back(q);
  }
  return s;
}

std::vector<int> PulseSchedule::pulsed_qubits() const {
  if (placement == PulsePlacement::Targets) return {targets.first, targets.second};
  return spectators();
}

CMatrix pulse_unitary(int n_qubits, Axis axis, std::span<const int> pulsed) {
  if (axis == Axis::Z) throw std::invalid_argument("XY-4 pulses are about x or y only");
  std::vector<Pauli> f(static_cast<std::size_t>(n_qubits), Pauli::I);
  for (int q : pulsed) {
    if (q < 0 || q >= n_qubits) throw std::out_of_range("pulsed qubit out of range");
    if (f[static_cast<std::size_t>(q)] != Pauli::I) throw std::invalid_argument("qubit pulsed twice");
    f[static_cast<std::size_t>(q)] = axis == Axis::X ? Pauli::X : Pauli::Y;
  }
  // (-i)^k for k pulsed qubits.
  static const Complex kPhase[4] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
  return kPhase[pulsed.size() % 4] * term_matrix(PauliString(std::move(f)), n_qubits);
}

CMatrix spectator_pulse(int n_qubits, Axis axis, std::span<const int> spectators, QubitPair targets) {
  check_pair(n_qubits, targets);
  for (int q : spectators) {
    if (in_pair(q, targets)) throw std::invalid_argument("spectator set overlaps the target pair");
  }
  return pulse_unitary(n_qubits, axis, spectators);
}

CMatrix interval_propagator(const SpectralDecomposition& dec, const PulseSchedule& schedule) {
  schedule.validate();
  const Eigen::Index dim = dec.eigenvectors.rows();
  if (dim != (Eigen::Index{1} << schedule.n_qubits)) throw std::invalid_argument("dimension mismatch");

  Eigen::VectorXcd phases(dim);
  for (Eigen::Index k = 0; k < dim; ++k) phases(k) = std::polar(1.0, -dec.eigenvalues(k) * schedule.segment());
  const CMatrix free = dec.eigenvectors * phases.asDiagonal() * dec.eigenvectors.adjoint();

  const auto pulsed = schedule.pulsed_qubits();
  const CMatrix px = pulse_unitary(schedule.n_qubits, Axis::X, pulsed);
  const CMatrix py = pulse_unitary(schedule.n_qubits, Axis::Y, pulsed);

  // Time order: free, X, free, Y, free, X, free, Y (rightmost acts first).
  const CMatrix half = py * free * px * free;
  const CMatrix cycle = half * half;
  CMatrix interval = cycle;
  for (int p = 1; p < schedule.cycles_per_interval; ++p) interval = cycle * interval;
  return interval;
}

QuantumState embed_pair_state(const QuantumState& pair_state, int n_qubits, QubitPair targets) {
  check_pair(n_qubits, targets);
  if (pair_state.n_qubits() != 2) throw std::invalid_argument("pair state must be a two-qubit state");
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  CVector full = CVector::Zero(dim);
  for (Eigen::Index p = 0; p < 4; ++p) {
    const Eigen::Index b0 = (p >> 1) & 1, b1 = p & 1;
    const Eigen::Index idx = (b0 << (n_qubits - 1 - targets.first)) | (b1 << (n_qubits - 1 - targets.second));
    full(idx) = pair_state.amplitudes()(p);
  }
  return QuantumState(std::move(full));
}

ObservationSeries observe_with_dd(const HamiltonianModel& model, const PulseSchedule& schedule,
                                  std::span<const QuantumState> pair_states, int n_steps) {
  if (model.n_qubits < 3) throw std::invalid_argument("decoupling needs a model with at least three qubits");
  if (schedule.n_qubits != model.n_qubits) throw std::invalid_argument("schedule and model qubit counts differ");
  if (n_steps < 1) throw std::invalid_argument("need at least one time step");
  if (pair_states.empty()) throw std::invalid_argument("need at least one initial state");

  const CMatrix interval = interval_propagator(spectral(assemble(model, model.n_qubits)), schedule);
  const QubitPair tp = schedule.targets;

  ObservationSeries out;
  out.n_qubits = 2;
  out.n_states = static_cast<int>(pair_states.size());
  out.n_steps = n_steps;
  out.tau = schedule.tau;
  out.values.resize(ObservationSeries::value_count(2, out.n_states, n_steps));

  for (int k = 0; k < out.n_states; ++k) {
    QuantumState psi = embed_pair_state(pair_states[static_cast<std::size_t>(k)], model.n_qubits, tp);
    for (int j = 0; j < n_steps; ++j) {
      psi = apply_unitary(interval, psi);
      int f = 0;
      for (int q : {tp.first, tp.second}) {
        out.at(k, j, f++) = expectation(psi, q, Axis::X);
        out.at(k, j, f++) = expectation(psi, q, Axis::Y);
        out.at(k, j, f++) = expectation(psi, q, Axis::Z);
      }
    }
  }
  return out;
}

HamiltonianModel isolated_pair_model(const HamiltonianModel& model, QubitPair pair) {
  check_pair(model.n_qubits, pair);
  HamiltonianModel out;
  out.n_qubits = 2;
  for (std::size_t t = 0; t < model.terms.size(); ++t) {
    const auto s = support(model.terms[t]);
    if (std::all_of(s.begin(), s.end(), [&](int q) { return in_pair(q, pair); })) {
      out.terms.push_back(restrict_to_pair(model.terms[t], pair));
      out.theta.push_back(model.theta[t]);
    }
  }
  if (out.terms.empty()) {
    // No terms inside the pair: zero Hamiltonian on two qubits.
    out.terms.push_back(PauliString::parse("ZI"));
    out.theta.push_back(0.0);
  }
  return out;
}

ObservationSeries observe_isolated(const HamiltonianModel& model, QubitPair pair,
                                   std::span<const QuantumState> pair_states, double tau, int n_steps) {
  return observe_series(isolated_pair_model(model, pair), pair_states, tau, n_steps);
}

double max_abs_deviation(const ObservationSeries& a, const ObservationSeries& b) {
  if (a.values.size() != b.values.size()) throw std::invalid_argument("series shapes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

std::vector<QubitPair> coupled_pairs(const ModelFamily& family) {
  std::vector<QubitPair> pairs;
  for (const auto& t : family.terms) {
    const auto s = support(t);
    if (s.size() > 2) throw std::invalid_argument("term " + t.str() + " acts on more than two qubits");
    if (s.size() == 2) {
      const QubitPair p{s[0], s[1]};
      if (std::find(pairs.begin(), pairs.end(), p) == pairs.end()) pairs.push_back(p);
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](QubitPair a, QubitPair b) {
    return a.first != b.first ? a.first < b.first : a.second < b.second;
  });
  return pairs;
}

FullEstimate estimate_full(const ModelFamily& family, std::span<const double> theta_true,
                           const MultiStagePredictor& predictor, int cycles_per_interval,
                           const DdOptions& options) {
  family.validate();
  predictor.validate();
  if (theta_true.size() != family.size()) throw std::invalid_argument("theta length does not match family");
  const ModelFamily& pair_family = predictor.meta.family;
  if (pair_family.n_qubits != 2) throw std::invalid_argument("decoupled estimation needs a two-qubit predictor");
  if (predictor.size() == 0) throw std::invalid_argument("predictor has no stages");
  if (family.n_qubits > options.max_qubits) throw std::length_error("family exceeds dense-matrix limit");

  const auto pairs = coupled_pairs(family);
  // For each family term: where its value comes from.
  struct Source {
    std::size_t pair_index;
    std::size_t pair_param;
  };
  std::vector<std::vector<Source>> sources(family.size());
  auto find_param = [&](const PauliString& restricted) -> std::ptrdiff_t {
    const auto it = std::find(pair_family.terms.begin(), pair_family.terms.end(), restricted);
    return it == pair_family.terms.end() ? -1 : it - pair_family.terms.begin();
  };
  for (std::size_t t = 0; t < family.size(); ++t) {
    const auto s = support(family.terms[t]);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      if (!std::all_of(s.begin(), s.end(), [&](int q) { return in_pair(q, pairs[p]); })) continue;
      const auto k = find_param(restrict_to_pair(family.terms[t], pairs[p]));
      if (k >= 0) sources[t].push_back({p, static_cast<std::size_t>(k)});
    }
    if (sources[t].empty()) {
      throw std::invalid_argument("family mismatch: term " + family.terms[t].str() + " (" + family.labels[t] +
                                  ") is not expressible by the " + pair_family.name + " predictor");
    }
  }

  const HamiltonianModel model = family.model(theta_true);
  FullEstimate result;
  result.cycles_per_interval = cycles_per_interval;

  for (const QubitPair pair : pairs) {
    PulseSchedule sched;
    sched.n_qubits = family.n_qubits;
    sched.targets = pair;
    sched.cycles_per_interval = cycles_per_interval;
    sched.tau = predictor.meta.tau;
    sched.placement = options.placement;
    const ObservationSeries series =
        observe_with_dd(model, sched, predictor.meta.initial_states, predictor.meta.n_steps);

    PairEstimate pe;
    pe.pair = pair;
    pe.series_deviation = max_abs_deviation(
        series, observe_isolated(model, pair, predictor.meta.initial_states, sched.tau, predictor.meta.n_steps));
    for (std::size_t k = 1; k <= predictor.size(); ++k) {
      pe.theta_hat.push_back(predict(predictor, series, static_cast<int>(k)));
    }
    result.pairs.push_back(std::move(pe));
  }

  for (std::size_t k = 0; k < predictor.size(); ++k) {
    std::vector<double> theta(family.size(), 0.0);
    for (std::size_t t = 0; t < family.size(); ++t) {
      double acc = 0.0;
      for (const auto& src : sources[t]) acc += result.pairs[src.pair_index].theta_hat[k][src.pair_param];
      theta[t] = acc / static_cast<double>(sources[t].size());
    }
    result.theta_hat.push_back(std::move(theta));
  }
  return result;
}

Table fidelity_table(const std::vector<FullEstimate>& estimates, std::span<const double> theta_true) {
  Table t("dd_fidelity", {"P", "stage", "fidelity", "infidelity"});
  for (const auto& e : estimates) {
    for (std::size_t k = 0; k < e.theta_hat.size(); ++k) {
      const double f = fidelity(e.theta_hat[k], theta_true);
      t.add_row({Table::num(e.cycles_per_interval), Table::num(k), Table::num(f), Table::num(1.0 - f)});
    }
  }
  return t;
}

Table relative_error_table(const ModelFamily& family, const std::vector<FullEstimate>& estimates,
                           std::span<const double> theta_true, double guard) {
  std::vector<std::string> cols{"P", "stage"};
  const auto groups = family.group_names();
  for (const auto& g : groups) cols.push_back(g);
  Table t("dd_relative_error", cols);
  for (const auto& e : estimates) {
    for (std::size_t k = 0; k < e.theta_hat.size(); ++k) {
      std::vector<std::string> row{Table::num(e.cycles_per_interval), Table::num(k)};
      for (const auto& g : groups) {
        const auto idx = family.group_indices(g);
        try {
          row.push_back(Table::num(relative_error(e.theta_hat[k], theta_true, idx, guard)));
        } catch (const std::invalid_argument&) {
          row.push_back("nan");
        }
      }
      t.add_row(std::move(row));
    }
  }
  return t;
}

Table pair_table(const std::vector<FullEstimate>& estimates, const MultiStagePredictor& predictor,
                 std::span<const double> theta_true) {
  std::vector<std::string> cols{"pair", "P", "stage", "series_deviation"};
  for (const auto& l : predictor.meta.family.labels) cols.push_back(l);
  cols.push_back("assembled_fidelity");
  Table t("dd_pairs", cols);
  for (const auto& e : estimates) {
    for (const auto& p : e.pairs) {
      for (std::size_t k = 0; k < p.theta_hat.size(); ++k) {
        std::vector<std::string> row{std::to_string(p.pair.first + 1) + "-" + std::to_string(p.pair.second + 1),
                                     Table::num(e.cycles_per_interval), Table::num(k),
                                     Table::num(p.series_deviation)};
        for (double v : p.theta_hat[k]) row.push_back(Table::num(v));
        row.push_back(Table::num(fidelity(e.theta_hat[k], theta_true)));
        t.add_row(std::move(row));
      }
    }
  }
  return t;
}

} // namespace hamlearn::dd
