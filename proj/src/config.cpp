#include "hamlearn/config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <thread>

#include <yaml-cpp/yaml.h>

#include "hamlearn/binary_io.hpp"
#include "hamlearn/errors.hpp"

namespace hamlearn::cli {

namespace {

// Reads one YAML mapping, remembering which keys were consumed so the rest
// can be reported as unknown.
class Section {
public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where() + " must be a mapping");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_ && node_.IsMap() && node_[key] && !node_[key].IsNull();
  }

  template <class T> void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = as<T>(node_[key], key);
  }

  template <class T> void get(const std::string& key, std::optional<T>& out) {
    if (!has(key)) return;
    out = as<T>(node_[key], key);
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(node_ && node_.IsMap() ? node_[key] : YAML::Node(), qualified(key));
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return node_[key];
  }

  template <class T> T as(const YAML::Node& n, const std::string& key) const {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("bad value for '" + qualified(key) + "'");
    }
  }

  void reject_unknown() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.contains(key)) throw ConfigError("unknown key '" + qualified(key) + "'");
    }
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

double read_tau(Section& s, double current) {
  const bool abs = s.has("tau");
  const bool rel = s.has("tau_over_pi");
  if (abs && rel) throw ConfigError("give either sampling.tau or sampling.tau_over_pi, not both");
  double v = current;
  if (abs) s.get("tau", v);
  if (rel) {
    s.get("tau_over_pi", v);
    v *= std::numbers::pi;
  }
  return v;
}

FamilyConfig read_family(Section s, FamilyConfig f) {
  s.get("name", f.name);
  s.get("n_qubits", f.n_qubits);
  if (s.has("ranges")) {
    const auto raw = s.as<std::vector<std::vector<double>>>(s.raw("ranges"), "ranges");
    std::vector<ParameterRange> ranges;
    for (const auto& r : raw) {
      if (r.size() != 2) throw ConfigError("'" + s.qualified("ranges") + "' entries must be [lo, hi]");
      ranges.push_back({r[0], r[1]});
    }
    f.ranges = std::move(ranges);
  }
  s.reject_unknown();
  return f;
}

// Splits "a.b.c=value" and writes value (parsed as YAML) into the tree.
void apply_override(YAML::Node& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' must look like key.path=value");
  const std::string path = spec.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(spec.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override '" + spec + "': " + e.what());
  }
  std::vector<std::string> keys;
  for (std::size_t start = 0;;) {
    const auto dot = path.find('.', start);
    keys.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  // yaml-cpp nodes are handles, so walk with fresh copies.
  std::vector<YAML::Node> chain{root};
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    YAML::Node next = chain.back()[keys[i]];
    if (!next || next.IsNull()) {
      chain.back()[keys[i]] = YAML::Node(YAML::NodeType::Map);
      next = chain.back()[keys[i]];
    }
    if (!next.IsMap()) throw ConfigError("override '" + spec + "': '" + keys[i] + "' is not a section");
    chain.push_back(next);
  }
  chain.back()[keys.back()] = value;
}

RunConfig from_node(const YAML::Node& root) {
  RunConfig c;
  Section top(root, "");
  top.get("seed", c.seed);
  top.get("workers", c.workers);
  std::string out;
  if (top.has("output_dir")) {
    top.get("output_dir", out);
    c.output_dir = out;
  }

  c.family = read_family(top.sub("family"), c.family);

  {
    auto s = top.sub("sampling");
    c.tau = read_tau(s, c.tau);
    s.get("n_steps", c.n_steps);
    s.reject_unknown();
  }
  {
    auto s = top.sub("dataset");
    s.get("n_samples", c.n_samples);
    s.get("noise_sigma", c.noise_sigma);
    s.get("state_seed", c.state_seed);
    s.get("train_fraction", c.train_fraction);
    s.reject_unknown();
  }
  {
    auto s = top.sub("network");
    s.get("hidden", c.pipeline.hidden_dim);
    s.get("fc_hidden", c.pipeline.fc_hidden);
    s.reject_unknown();
  }
  {
    auto s = top.sub("training");
    auto& t = c.pipeline.train;
    t.seed = c.seed;
    s.get("learning_rate", t.learning_rate);
    s.get("beta1", t.beta1);
    s.get("beta2", t.beta2);
    s.get("adam_epsilon", t.epsilon_hat);
    s.get("batch_size", t.batch_size);
    s.get("epochs", t.epochs);
    s.get("patience", t.patience);
    s.get("lr_decay", t.lr_decay);
    s.get("seed", t.seed);
    s.reject_unknown();
  }
  {
    auto s = top.sub("stages");
    s.get("max", c.pipeline.max_stages);
    s.get("improvement_margin", c.pipeline.improvement_margin);
    s.get("convergence_floor", c.pipeline.convergence_floor);
    s.get("relative_error_guard", c.pipeline.relative_error_guard);
    s.reject_unknown();
  }
  {
    auto s = top.sub("evaluate");
    s.get("noise_sigmas", c.eval_sigmas);
    s.get("noise_seed", c.eval_noise_seed);
    s.reject_unknown();
  }
  {
    auto s = top.sub("dd");
    c.dd_family = read_family(s.sub("family"), c.dd_family);
    s.get("cycles", c.dd_cycles);
    std::string placement;
    if (s.has("pulse_on")) {
      s.get("pulse_on", placement);
      if (placement == "spectators") {
        c.dd_placement = dd::PulsePlacement::Spectators;
      } else if (placement == "targets") {
        c.dd_placement = dd::PulsePlacement::Targets;
      } else {
        throw ConfigError("dd.pulse_on must be 'spectators' or 'targets'");
      }
    }
    s.get("theta", c.dd_theta);
    s.get("theta_seed", c.dd_theta_seed);
    s.reject_unknown();
  }
  {
    auto s = top.sub("analyze");
    s.get("bins", c.bins);
    s.reject_unknown();
  }
  {
    auto s = top.sub("sweep");
    if (s.has("taus") && s.has("taus_over_pi")) throw ConfigError("give either sweep.taus or sweep.taus_over_pi");
    s.get("taus", c.sweep_taus);
    if (s.has("taus_over_pi")) {
      s.get("taus_over_pi", c.sweep_taus);
      for (double& t : c.sweep_taus) t *= std::numbers::pi;
    }
    s.get("n_steps", c.sweep_steps);
    s.get("n_samples", c.sweep_samples);
    s.reject_unknown();
  }
  top.reject_unknown();
  c.validate();
  return c;
}

RunConfig parse_root(YAML::Node root, const std::vector<std::string>& overrides) {
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError("config must be a mapping");
  for (const auto& o : overrides) apply_override(root, o);
  return from_node(root);
}

} // namespace

ModelFamily FamilyConfig::build() const {
  ModelFamily f;
  try {
    f = ModelFamily::by_name(name, n_qubits);
  } catch (const std::exception& e) {
    throw ConfigError("family: " + std::string(e.what()));
  }
  if (ranges) {
    if (ranges->size() != f.size()) {
      throw ConfigError("family.ranges has " + std::to_string(ranges->size()) + " entries, family " + name +
                        " has " + std::to_string(f.size()) + " parameters");
    }
    f.ranges = *ranges;
  }
  try {
    f.validate();
  } catch (const std::exception& e) {
    throw ConfigError("family: " + std::string(e.what()));
  }
  return f;
}

unsigned RunConfig::resolved_workers() const {
  if (workers > 0) return workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

DatasetMeta RunConfig::dataset_meta() const {
  return make_meta(family.build(), tau, n_steps, n_samples, seed, noise_sigma, state_seed.value_or(seed));
}

std::vector<analysis::SweepPoint> RunConfig::sweep_grid() const {
  std::vector<analysis::SweepPoint> grid;
  auto add = [&](double t, int s) {
    const bool dup = std::any_of(grid.begin(), grid.end(), [&](const auto& p) { return p.tau == t && p.n_steps == s; });
    if (!dup) grid.push_back({t, s});
  };
  for (double t : sweep_taus) add(t, n_steps);
  for (int s : sweep_steps) add(tau, s);
  if (grid.empty()) add(tau, n_steps);
  return grid;
}

analysis::SweepConfig RunConfig::sweep_config() const {
  analysis::SweepConfig s;
  s.family = family.build();
  s.grid = sweep_grid();
  s.n_samples = sweep_samples.value_or(n_samples);
  s.train_fraction = train_fraction;
  s.master_seed = seed;
  s.noise_sigma = noise_sigma;
  s.pipeline = pipeline;
  s.workers = resolved_workers();
  return s;
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  (void)family.build();
  (void)dd_family.build();
  check(std::isfinite(tau) && tau > 0.0, "sampling.tau must be positive");
  check(n_steps >= 1, "sampling.n_steps must be >= 1");
  check(n_samples >= 2, "dataset.n_samples must be >= 2");
  check(std::isfinite(noise_sigma) && noise_sigma >= 0.0, "dataset.noise_sigma must be >= 0");
  check(train_fraction > 0.0 && train_fraction < 1.0, "dataset.train_fraction must be in (0, 1)");
  check(!eval_sigmas.empty(), "evaluate.noise_sigmas must not be empty");
  for (double s : eval_sigmas) check(std::isfinite(s) && s >= 0.0, "evaluate.noise_sigmas must be >= 0");
  check(!dd_cycles.empty(), "dd.cycles must not be empty");
  for (int p : dd_cycles) check(p >= 1, "dd.cycles entries must be >= 1");
  if (dd_theta) {
    check(dd_theta->size() == dd_family.build().size(), "dd.theta length does not match dd.family");
  }
  check(bins >= 1, "analyze.bins must be >= 1");
  for (double t : sweep_taus) check(std::isfinite(t) && t > 0.0, "sweep taus must be positive");
  for (int s : sweep_steps) check(s >= 1, "sweep.n_steps entries must be >= 1");
  if (sweep_samples) check(*sweep_samples >= 2, "sweep.n_samples must be >= 2");
  try {
    pipeline.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  return parse_root(root, overrides);
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  return parse_config(io::read_file(path), overrides);
}

RunConfig default_config(const std::vector<std::string>& overrides) {
  return parse_root(YAML::Node(YAML::NodeType::Map), overrides);
}

} // namespace hamlearn::cli
