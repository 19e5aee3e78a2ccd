#include "hamlearn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "hamlearn/binary_io.hpp"
#include "hamlearn/errors.hpp"
#include "parallel.hpp"

namespace hamlearn {

namespace {

constexpr char kDatasetMagic[8] = {'H', 'L', 'D', 'A', 'T', 'A', '\0', '\1'};
constexpr std::uint32_t kDatasetVersion = 1;

// Stream tags with the top bit set never collide with a sample index.
constexpr std::uint64_t kStateStream = 0x8000'0000'0000'5747ULL;

constexpr const char* kAxisNames = "xyz";
constexpr Pauli kAxes[3] = {Pauli::X, Pauli::Y, Pauli::Z};

std::string qubit_pair_label(int i, int j) {
  return "J" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
}

} // namespace

// ---------------------------------------------------------------------------

ModelFamily ModelFamily::h1() {
  ModelFamily f;
  f.name = "H1";
  f.n_qubits = 2;
  f.terms = {PauliString::parse("ZI"), PauliString::parse("IZ"), PauliString::parse("XX")};
  f.ranges.assign(3, ParameterRange{-1.0, 1.0});
  f.labels = {"w1", "w2", "J12"};
  f.groups = {"local", "local", "coupling"};
  return f;
}

ModelFamily ModelFamily::h2() {
  ModelFamily f;
  f.name = "H2";
  f.n_qubits = 2;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      f.terms.push_back(PauliString::pair(2, 0, kAxes[a], 1, kAxes[b]));
      f.labels.push_back(std::string("J") + kAxisNames[a] + kAxisNames[b]);
    }
  }
  f.ranges.assign(9, ParameterRange{-1.0, 1.0});
  f.groups.assign(9, "coupling");
  return f;
}

ModelFamily ModelFamily::h3(int n_qubits) {
  if (n_qubits < 2) throw std::invalid_argument("H3 needs at least two qubits");
  ModelFamily f;
  f.name = "H3";
  f.n_qubits = n_qubits;
  for (int i = 0; i < n_qubits; ++i) {
    f.terms.push_back(PauliString::local(n_qubits, i, Pauli::Z));
    f.labels.push_back("w" + std::to_string(i + 1));
    f.groups.push_back("local");
  }
  for (int i = 0; i < n_qubits; ++i) {
    for (int j = i + 1; j < n_qubits; ++j) {
      f.terms.push_back(PauliString::pair(n_qubits, i, Pauli::X, j, Pauli::X));
      f.labels.push_back(qubit_pair_label(i, j));
      f.groups.push_back("coupling");
    }
  }
  f.ranges.assign(f.terms.size(), ParameterRange{-1.0, 1.0});
  return f;
}

ModelFamily ModelFamily::h4(int n_qubits) {
  if (n_qubits < 2) throw std::invalid_argument("H4 needs at least two qubits");
  static const char* kGroup[3] = {"NN", "NNN", "NNNN"};
  static const double kScale[3] = {1.0, 0.1, 0.01};
  ModelFamily f;
  f.name = "H4";
  f.n_qubits = n_qubits;
  for (int d = 1; d <= 3; ++d) {
    for (int i = 0; i + d < n_qubits; ++i) {
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          f.terms.push_back(PauliString::pair(n_qubits, i, kAxes[a], i + d, kAxes[b]));
          f.labels.push_back(qubit_pair_label(i, i + d) + "_" + kAxisNames[a] + kAxisNames[b]);
          f.groups.push_back(kGroup[d - 1]);
          f.ranges.push_back({-kScale[d - 1], kScale[d - 1]});
        }
      }
    }
  }
  return f;
}

ModelFamily ModelFamily::by_name(const std::string& name, int n_qubits) {
  if (name == "H1") return h1();
  if (name == "H2") return h2();
  if (name == "H3") return h3(n_qubits);
  if (name == "H4") return h4(n_qubits);
  throw std::invalid_argument("unknown model family '" + name + "' (expected H1, H2, H3 or H4)");
}

HamiltonianModel ModelFamily::model(std::span<const double> theta) const {
  HamiltonianModel m;
  m.n_qubits = n_qubits;
  m.terms = terms;
  m.theta.assign(theta.begin(), theta.end());
  m.validate();
  return m;
}

void ModelFamily::validate() const {
  const std::size_t m = terms.size();
  if (m == 0) throw std::invalid_argument("family has no terms");
  if (ranges.size() != m || labels.size() != m || groups.size() != m) {
    throw std::invalid_argument("family term/range/label/group counts differ");
  }
  for (const auto& r : ranges) {
    if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
      throw std::invalid_argument("invalid parameter range");
    }
  }
  HamiltonianModel probe{n_qubits, terms, std::vector<double>(m, 0.0)};
  probe.validate();
}

std::vector<std::size_t> ModelFamily::group_indices(const std::string& group) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i] == group) idx.push_back(i);
  }
  return idx;
}

std::vector<std::string> ModelFamily::group_names() const {
  std::vector<std::string> names;
  for (const auto& g : groups) {
    if (std::find(names.begin(), names.end(), g) == names.end()) names.push_back(g);
  }
  return names;
}

// ---------------------------------------------------------------------------

void DatasetMeta::validate() const {
  family.validate();
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be positive");
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  if (initial_states.size() != kInitialStateCount) throw std::invalid_argument("need exactly three initial states");
  for (const auto& s : initial_states) {
    if (s.n_qubits() != family.n_qubits) throw std::invalid_argument("initial state qubit count mismatch");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
}

DatasetMeta make_meta(ModelFamily family, double tau, int n_steps, std::size_t n_samples,
                      std::uint64_t master_seed, double noise_sigma, std::uint64_t state_seed) {
  DatasetMeta meta;
  Rng rng(derive_seed(state_seed, kStateStream));
  for (int k = 0; k < kInitialStateCount; ++k) {
    meta.initial_states.push_back(haar_random_state(family.n_qubits, rng));
  }
  meta.family = std::move(family);
  meta.tau = tau;
  meta.n_steps = n_steps;
  meta.master_seed = master_seed;
  meta.noise_sigma = noise_sigma;
  meta.n_samples = n_samples;
  meta.validate();
  return meta;
}

std::span<const double> Dataset::theta(std::size_t i) const {
  const std::size_t m = theta_dim();
  return std::span<const double>(thetas).subspan(i * m, m);
}

std::span<const double> Dataset::observation(std::size_t i) const {
  const std::size_t s = meta.observation_stride();
  return std::span<const double>(observations).subspan(i * s, s);
}

std::span<double> Dataset::observation(std::size_t i) {
  const std::size_t s = meta.observation_stride();
  return std::span<double>(observations).subspan(i * s, s);
}

ObservationSeries Dataset::series(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("sample index out of range");
  ObservationSeries s;
  s.n_qubits = meta.family.n_qubits;
  s.n_states = static_cast<int>(meta.initial_states.size());
  s.n_steps = meta.n_steps;
  s.tau = meta.tau;
  const auto obs = observation(i);
  s.values.assign(obs.begin(), obs.end());
  return s;
}

bool operator==(const Dataset& a, const Dataset& b) {
  // Bitwise comparison so that NaN payloads and signed zeros count.
  auto same_bits = [](const std::vector<double>& x, const std::vector<double>& y) {
    return x.size() == y.size() &&
           (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
  };
  return same_source(a.meta, b.meta) && a.meta.master_seed == b.meta.master_seed &&
         a.meta.noise_sigma == b.meta.noise_sigma && a.meta.n_samples == b.meta.n_samples &&
         same_bits(a.thetas, b.thetas) && same_bits(a.observations, b.observations);
}

std::vector<double> sample_parameters(const ModelFamily& family, Rng& rng) {
  std::vector<double> theta(family.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const auto& r = family.ranges[i];
    theta[i] = r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi);
  }
  return theta;
}

void add_noise(std::span<double> values, double sigma, Rng& rng) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("noise sigma must be >= 0");
  if (sigma == 0.0) return;
  for (double& v : values) v += sigma * rng.normal();
}

ObservationSeries add_noise(ObservationSeries series, double sigma, Rng& rng) {
  add_noise(std::span<double>(series.values), sigma, rng);
  return series;
}

Dataset generate(const DatasetMeta& meta, unsigned workers) {
  meta.validate();
  Dataset ds;
  ds.meta = meta;
  const std::size_t m = meta.family.size();
  const std::size_t stride = meta.observation_stride();
  ds.thetas.resize(meta.n_samples * m);
  ds.observations.resize(meta.n_samples * stride);

  detail::parallel_for(meta.n_samples, workers, [&](std::size_t i) {
    Rng rng(derive_seed(meta.master_seed, i));
    const std::vector<double> theta = sample_parameters(meta.family, rng);
    const ObservationSeries s =
        observe_series(meta.family.model(theta), meta.initial_states, meta.tau, meta.n_steps);
    std::copy(theta.begin(), theta.end(), ds.thetas.begin() + static_cast<std::ptrdiff_t>(i * m));
    auto out = ds.observation(i);
    std::copy(s.values.begin(), s.values.end(), out.begin());
    add_noise(out, meta.noise_sigma, rng);
  });
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train fraction must be in (0, 1)");
  }
  const std::size_t n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
  if (n_train == 0 || n_train >= n) throw std::invalid_argument("split leaves one side empty");

  const std::size_t m = ds.theta_dim();
  const std::size_t stride = ds.meta.observation_stride();
  auto take = [&](std::size_t first, std::size_t count) {
    Dataset part;
    part.meta = ds.meta;
    part.meta.n_samples = count;
    part.thetas.assign(ds.thetas.begin() + static_cast<std::ptrdiff_t>(first * m),
                       ds.thetas.begin() + static_cast<std::ptrdiff_t>((first + count) * m));
    part.observations.assign(ds.observations.begin() + static_cast<std::ptrdiff_t>(first * stride),
                             ds.observations.begin() + static_cast<std::ptrdiff_t>((first + count) * stride));
    return part;
  };
  return {take(0, n_train), take(n_train, n - n_train)};
}

Dataset with_noise(const Dataset& ds, double sigma, std::uint64_t seed) {
  Dataset out = ds;
  if (sigma == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    add_noise(out.observation(i), sigma, rng);
  }
  return out;
}

bool same_source(const DatasetMeta& a, const DatasetMeta& b) {
  return a.family.name == b.family.name && a.family.n_qubits == b.family.n_qubits &&
         a.family.terms == b.family.terms && a.tau == b.tau && a.n_steps == b.n_steps &&
         a.initial_states == b.initial_states;
}

// ---------------------------------------------------------------------------

std::string meta_to_json(const DatasetMeta& meta, int indent) {
  using nlohmann::json;
  json fam;
  fam["name"] = meta.family.name;
  fam["n_qubits"] = meta.family.n_qubits;
  json terms = json::array(), ranges = json::array();
  for (const auto& t : meta.family.terms) terms.push_back(t.str());
  for (const auto& r : meta.family.ranges) ranges.push_back({r.lo, r.hi});
  fam["terms"] = terms;
  fam["ranges"] = ranges;
  fam["labels"] = meta.family.labels;
  fam["groups"] = meta.family.groups;

  json states = json::array();
  for (const auto& s : meta.initial_states) {
    json amps = json::array();
    for (Eigen::Index i = 0; i < s.dim(); ++i) {
      amps.push_back(s.amplitudes()(i).real());
      amps.push_back(s.amplitudes()(i).imag());
    }
    states.push_back(amps);
  }

  json j;
  j["family"] = fam;
  j["tau"] = meta.tau;
  j["n_steps"] = meta.n_steps;
  j["initial_states"] = states;
  j["master_seed"] = meta.master_seed;
  j["noise_sigma"] = meta.noise_sigma;
  j["n_samples"] = meta.n_samples;
  return j.dump(indent);
}

DatasetMeta meta_from_json(std::string_view text) {
  using nlohmann::json;
  try {
    const json j = json::parse(text);
    DatasetMeta meta;
    const json& fam = j.at("family");
    meta.family.name = fam.at("name").get<std::string>();
    meta.family.n_qubits = fam.at("n_qubits").get<int>();
    for (const auto& t : fam.at("terms")) meta.family.terms.push_back(PauliString::parse(t.get<std::string>()));
    for (const auto& r : fam.at("ranges")) meta.family.ranges.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    meta.family.labels = fam.at("labels").get<std::vector<std::string>>();
    meta.family.groups = fam.at("groups").get<std::vector<std::string>>();
    for (const auto& amps : j.at("initial_states")) {
      const auto v = amps.get<std::vector<double>>();
      CVector a(static_cast<Eigen::Index>(v.size() / 2));
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        a(i) = Complex(v[static_cast<std::size_t>(2 * i)], v[static_cast<std::size_t>(2 * i + 1)]);
      }
      meta.initial_states.emplace_back(std::move(a));
    }
    meta.tau = j.at("tau").get<double>();
    meta.n_steps = j.at("n_steps").get<int>();
    meta.master_seed = j.at("master_seed").get<std::uint64_t>();
    meta.noise_sigma = j.at("noise_sigma").get<double>();
    meta.n_samples = j.at("n_samples").get<std::size_t>();
    meta.validate();
    return meta;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad dataset metadata: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("bad dataset metadata: ") + e.what());
  }
}

std::string encode_dataset(const Dataset& ds) {
  if (ds.thetas.size() != ds.size() * ds.theta_dim() ||
      ds.observations.size() != ds.size() * ds.meta.observation_stride()) {
    throw std::invalid_argument("dataset arrays do not match its metadata");
  }
  io::ByteWriter w;
  w.bytes(std::string_view(kDatasetMagic, sizeof kDatasetMagic));
  w.u32(kDatasetVersion);
  w.blob(meta_to_json(ds.meta));
  w.f64s(ds.thetas);
  w.f64s(ds.observations);
  return io::seal(w.take());
}

Dataset decode_dataset(std::string_view bytes) {
  if (bytes.size() < sizeof kDatasetMagic ||
      bytes.substr(0, sizeof kDatasetMagic) != std::string_view(kDatasetMagic, sizeof kDatasetMagic)) {
    throw FormatError("not a dataset file (bad magic)");
  }
  io::ByteReader r(io::unseal(bytes));
  r.bytes(sizeof kDatasetMagic);
  if (const auto v = r.u32(); v != kDatasetVersion) {
    throw FormatError("unsupported dataset format version " + std::to_string(v));
  }
  Dataset ds;
  ds.meta = meta_from_json(r.blob());
  ds.thetas.resize(ds.size() * ds.theta_dim());
  ds.observations.resize(ds.size() * ds.meta.observation_stride());
  r.f64s(ds.thetas);
  r.f64s(ds.observations);
  if (r.remaining() != 0) throw FormatError("trailing bytes in dataset file");
  return ds;
}

void save(const Dataset& ds, const std::filesystem::path& path) { io::write_file(path, encode_dataset(ds)); }

Dataset load(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

} // namespace hamlearn
