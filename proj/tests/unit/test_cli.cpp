#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "hamlearn/binary_io.hpp"
#include "hamlearn/commands.hpp"
#include "hamlearn/config.hpp"
#include "hamlearn/errors.hpp"

using namespace hamlearn;
using namespace hamlearn::cli;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig = R"(
seed: 5
workers: 2
family:
  name: H1
sampling:
  tau_over_pi: 0.02
  n_steps: 5
dataset:
  n_samples: 80
network:
  hidden: 4
  fc_hidden: []
training:
  epochs: 2
  batch_size: 16
  learning_rate: 0.01
stages:
  max: 2
  improvement_margin: 0.0
evaluate:
  noise_sigmas: [0.0, 0.01, 0.05, 0.1]
dd:
  family:
    name: H3
    n_qubits: 3
  cycles: [1, 2]
analyze:
  bins: 8
sweep:
  taus_over_pi: [0.02, 0.04]
  n_steps: [4]
  n_samples: 40
)";

struct Run {
  int code;
  std::string out, log;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, log;
  const int code = run(args, out, log);
  return {code, out.str(), log.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "hamlearn_cli_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string value_of(const std::string& line, const std::string& key) {
  const auto pos = line.find(key + "=");
  if (pos == std::string::npos) return {};
  const auto start = pos + key.size() + 1;
  return line.substr(start, line.find_first_of(" \n", start) - start);
}

} // namespace

TEST_CASE("configuration parsing") {
  const RunConfig d = default_config();
  CHECK(d.n_steps == 100);
  CHECK(d.tau == doctest::Approx(0.02 * 3.141592653589793));
  CHECK(d.train_fraction == 0.8);
  CHECK(d.family.name == "H1");

  const RunConfig c = parse_config(kSmallConfig);
  CHECK(c.seed == 5);
  CHECK(c.n_samples == 80);
  CHECK(c.pipeline.hidden_dim == 4);
  CHECK(c.pipeline.fc_hidden.empty());
  CHECK(c.pipeline.train.seed == 5);
  CHECK(c.eval_sigmas.size() == 4);
  CHECK(c.dd_family.n_qubits == 3);
  CHECK(c.sweep_grid().size() == 3);

  const RunConfig o = parse_config(kSmallConfig, {"training.epochs=7", "family.name=H2", "stages.max=4"});
  CHECK(o.pipeline.train.epochs == 7);
  CHECK(o.family.name == "H2");
  CHECK(o.pipeline.max_stages == 4);

  const RunConfig r = parse_config("family:\n  name: H1\n  ranges: [[-1, 1], [-0.1, 0.1], [-0.01, 0.01]]\n");
  CHECK(r.family.build().ranges[2] == ParameterRange{-0.01, 0.01});

  CHECK_THROWS_AS(parse_config("family:\n  nmae: H1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("bogus: 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("training:\n  epochs: -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("dataset: [1, 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("", {"training.epochz=3"}), ConfigError);
  CHECK_THROWS_AS(parse_config("", {"no_equals_sign"}), ConfigError);
  CHECK_THROWS_AS(parse_config("family:\n  ranges: [[0, 1]]\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), IoError);
}

TEST_CASE("command-line workflow") {
  const fs::path dir = fresh_dir("workflow");
  const fs::path cfg = dir / "run.yaml";
  io::write_file(cfg, kSmallConfig);
  const std::string c = cfg.string(), o = (dir / "out").string();

  const Run gen = invoke({"generate", "-c", c, "-o", o});
  REQUIRE(gen.code == kExitOk);
  CHECK(gen.out.rfind("command=generate status=ok", 0) == 0);
  CHECK(value_of(gen.out, "samples") == "80");
  const fs::path data = fs::path(o) / "dataset.hld";
  CHECK(fs::exists(data));
  CHECK(fs::exists(data.string() + ".json"));

  SUBCASE("generation is reproducible and independent of workers") {
    const Run again = invoke({"generate", "-c", c, "-o", (dir / "again").string(), "--workers", "1"});
    CHECK(value_of(again.out, "digest") == value_of(gen.out, "digest"));
    const Run other = invoke({"generate", "-c", c, "-o", (dir / "other").string(), "--seed", "6"});
    CHECK(value_of(other.out, "digest") != value_of(gen.out, "digest"));
  }

  const Run tr = invoke({"train", "-c", c, "-o", o});
  REQUIRE(tr.code == kExitOk);
  CHECK(value_of(tr.out, "stages") == "2");
  for (const char* f : {"predictor.hlp", "losses.tsv", "stages.tsv", "stage_errors.tsv"}) CHECK(fs::exists(fs::path(o) / f));
  const std::string pred = (fs::path(o) / "predictor.hlp").string();

  SUBCASE("training is reproducible") {
    const Run again = invoke({"train", "-c", c, "-o", (dir / "again_train").string(), "-d", data.string()});
    CHECK(value_of(again.out, "digest") == value_of(tr.out, "digest"));
    CHECK(io::read_file(fs::path(o) / "losses.tsv") == io::read_file(dir / "again_train" / "losses.tsv"));
  }

  SUBCASE("evaluate") {
    const Run ev = invoke({"evaluate", "-c", c, "-o", o, "-p", pred, "-d", data.string()});
    REQUIRE(ev.code == kExitOk);
    const Table t = Table::parse(io::read_file(fs::path(o) / "evaluation.tsv"));
    CHECK(t.rows().size() == 4);
    CHECK(t.columns() == std::vector<std::string>{"sigma", "fidelity_0", "fidelity_1", "infidelity_0", "infidelity_1"});
    // The noiseless row reproduces the validation fidelity reported by train.
    const Table stages = Table::parse(io::read_file(fs::path(o) / "stages.tsv"));
    const auto& cols = stages.columns();
    const auto vf = std::find(cols.begin(), cols.end(), "val_fidelity") - cols.begin();
    for (int k = 0; k < 2; ++k) {
      CHECK(std::abs(std::stod(t.rows()[0][1 + k]) - std::stod(stages.rows()[k][vf])) <= 1e-12);
    }
    const Run flag = invoke({"evaluate", "-c", c, "-o", o, "-p", pred, "-d", data.string(), "--sigma", "0.2,0.3"});
    CHECK(flag.code == kExitOk);
    CHECK(value_of(flag.out, "rows") == "2");
  }

  SUBCASE("dd") {
    const Run d = invoke({"dd", "-c", c, "-o", o, "-p", pred});
    REQUIRE(d.code == kExitOk);
    CHECK(value_of(d.out, "runs") == "2");
    for (const char* f : {"dd_theta.tsv", "dd_fidelity.tsv", "dd_relative_error.tsv", "dd_pairs.tsv", "dd_manifest.json"})
      CHECK(fs::exists(fs::path(o) / f));
    const Run bad = invoke({"dd", "-c", c, "-o", o, "-p", pred, "--set", "dd.family.name=H4"});
    CHECK(bad.code == kExitMismatch);
  }

  SUBCASE("analyze") {
    const Run a = invoke({"analyze", "-c", c, "-o", o, "-p", pred, "-d", data.string()});
    REQUIRE(a.code == kExitOk);
    const Table e = Table::parse(io::read_file(fs::path(o) / "error_stats.tsv"));
    CHECK(e.rows().size() == 2u * 2u * 3u);
    const Table corr = Table::parse(io::read_file(fs::path(o) / "correlation.tsv"));
    CHECK(corr.rows().size() == 3);
  }

  SUBCASE("mismatched dataset") {
    const fs::path other = dir / "h2";
    REQUIRE(invoke({"generate", "-c", c, "-o", other.string(), "--set", "family.name=H2"}).code == kExitOk);
    const Run ev = invoke({"evaluate", "-c", c, "-o", o, "-p", pred, "-d", (other / "dataset.hld").string()});
    CHECK(ev.code == kExitMismatch);
    CHECK(ev.log.find("mismatch") != std::string::npos);
  }
}

TEST_CASE("sweep command") {
  const fs::path dir = fresh_dir("sweep");
  const fs::path cfg = dir / "sweep.yaml";
  io::write_file(cfg, kSmallConfig);
  const Run s = invoke({"sweep", "-c", cfg.string(), "-o", (dir / "out").string()});
  REQUIRE(s.code == kExitOk);
  CHECK(value_of(s.out, "points") == "3");
  const Table t = Table::parse(io::read_file(dir / "out" / "sweep.tsv"));
  CHECK(t.rows().size() == 3u * 2u);
}

TEST_CASE("exit codes") {
  const fs::path dir = fresh_dir("codes");
  CHECK(invoke({"generate", "--no-such-flag"}).code == kExitConfig);
  CHECK(invoke({"frobnicate"}).code == kExitConfig);
  CHECK(invoke({}).code == kExitConfig);

  io::write_file(dir / "bad.yaml", "training:\n  epochs: 3\n  epohcs: 4\n");
  const Run bad = invoke({"generate", "-c", (dir / "bad.yaml").string(), "-o", dir.string()});
  CHECK(bad.code == kExitConfig);
  CHECK(bad.log.find("training.epohcs") != std::string::npos);

  CHECK(invoke({"train", "-o", dir.string(), "-d", (dir / "missing.hld").string()}).code == kExitIo);
  io::write_file(dir / "junk.hld", "not a dataset");
  CHECK(invoke({"train", "-o", dir.string(), "-d", (dir / "junk.hld").string()}).code == kExitIo);

  io::write_file(dir / "hot.yaml", std::string(kSmallConfig) + "\n");
  REQUIRE(invoke({"generate", "-c", (dir / "hot.yaml").string(), "-o", dir.string()}).code == kExitOk);
  const Run hot = invoke({"train", "-c", (dir / "hot.yaml").string(), "-o", dir.string(), "--set",
                       "training.learning_rate=1e300"});
  CHECK(hot.code == kExitDivergence);
  CHECK(hot.log.find("stage 0") != std::string::npos);

  CHECK(invoke({"--help"}).code == kExitOk);
  CHECK(invoke({"train", "--help"}).code == kExitOk);
}

#ifdef HAMLEARN_CONFIG_DIR
TEST_CASE("shipped configs parse") {
  int n = 0;
  for (const auto& e : fs::directory_iterator(HAMLEARN_CONFIG_DIR)) {
    if (e.path().extension() != ".yaml") continue;
    INFO(e.path().string());
    CHECK_NOTHROW(load_config(e.path()));
    ++n;
  }
  CHECK(n >= 6);
}
#endif
