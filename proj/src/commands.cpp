#include "hamlearn/commands.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hamlearn/analysis.hpp"
#include "hamlearn/binary_io.hpp"
#include "hamlearn/config.hpp"
#include "hamlearn/decoupling.hpp"
#include "hamlearn/errors.hpp"
#include "hamlearn/rng.hpp"

namespace hamlearn::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::string output_dir;
};

class Logger {
public:
  explicit Logger(std::ostream& os) : os_(os) {}
  template <class... A> void operator()(fmt::format_string<A...> f, A&&... a) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[16];
    std::strftime(stamp, sizeof stamp, "%H:%M:%S", std::localtime(&now));
    os_ << '[' << stamp << "] " << fmt::format(f, std::forward<A>(a)...) << '\n' << std::flush;
  }

private:
  std::ostream& os_;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
  auto* c = cmd->add_option("-c,--config", o.config, "YAML run configuration");
  if (config_required) c->required();
  cmd->add_option("--set", o.set, "Override a config value, e.g. --set training.epochs=20")->take_all();
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--workers", o.workers, "Worker threads (0: all cores)");
  cmd->add_option("-o,--output-dir", o.output_dir, "Directory for outputs");
}

RunConfig resolve(const CommonOptions& o, std::vector<std::string> extra = {}) {
  std::vector<std::string> ov = o.set;
  if (o.seed) ov.push_back("seed=" + std::to_string(*o.seed));
  if (o.workers) ov.push_back("workers=" + std::to_string(*o.workers));
  if (!o.output_dir.empty()) ov.push_back("output_dir=\"" + o.output_dir + "\"");
  ov.insert(ov.end(), extra.begin(), extra.end());
  return o.config.empty() ? default_config(ov) : load_config(o.config, ov);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path);
}

std::string save_table(const Table& t, const fs::path& path) {
  t.save(path);
  return path.string();
}

// ---------------------------------------------------------------------------

int cmd_generate(const CommonOptions& o, const std::string& out_path, std::optional<std::size_t> samples,
                 std::optional<double> noise, std::ostream& out, Logger& log) {
  std::vector<std::string> extra;
  if (samples) extra.push_back("dataset.n_samples=" + std::to_string(*samples));
  if (noise) extra.push_back("dataset.noise_sigma=" + Table::num(*noise));
  const RunConfig cfg = resolve(o, extra);
  const DatasetMeta meta = cfg.dataset_meta();
  const fs::path path = out_path.empty() ? cfg.output_dir / "dataset.hld" : fs::path(out_path);

  log("generating {} {} samples (tau {}, S {}, noise {})", meta.n_samples, meta.family.name, meta.tau,
      meta.n_steps, meta.noise_sigma);
  const Dataset ds = generate(meta, cfg.resolved_workers());
  const std::string bytes = encode_dataset(ds);
  io::write_file(path, bytes);
  const std::string digest = io::digest_hex(bytes);

  nlohmann::json side = nlohmann::json::parse(meta_to_json(ds.meta));
  side["file"] = path.filename().string();
  side["bytes"] = bytes.size();
  side["digest"] = digest;
  io::write_file(fs::path(path.string() + ".json"), side.dump(2) + "\n");

  out << fmt::format("command=generate status=ok path={} samples={} family={} digest={}\n", path.string(),
                     ds.size(), ds.meta.family.name, digest);
  return kExitOk;
}

int cmd_train(const CommonOptions& o, const std::string& dataset_path, std::ostream& out, Logger& log) {
  const RunConfig cfg = resolve(o);
  const std::string dpath = dataset_path.empty() ? (cfg.output_dir / "dataset.hld").string() : dataset_path;
  require_file(dpath, "dataset");
  const Dataset ds = load(dpath);
  const auto [train, val] = split(ds, cfg.train_fraction);
  log("training on {} samples, validating on {}", train.size(), val.size());

  const PipelineResult result = run_pipeline(train, val, cfg.pipeline, [&](int stage, const nn::EpochRecord& r) {
    log("stage {} epoch {} train {:.4e} val {:.4e}", stage, r.epoch, r.train_loss, r.val_loss);
  });
  log("stopped: {}", result.stop_reason);

  const fs::path dir = cfg.output_dir;
  const fs::path ppath = dir / "predictor.hlp";
  const std::string bytes = encode_predictor(result.predictor);
  io::write_file(ppath, bytes);
  save_table(loss_table(result.reports), dir / "losses.tsv");
  save_table(stage_table(result.reports), dir / "stages.tsv");

  Table errs("stage_errors", {"stage", "split", "parameter", "mean", "std"});
  const auto& labels = result.predictor.meta.family.labels;
  for (const auto& r : result.reports) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      errs.add_row({Table::num(r.stage), "train", labels[i], Table::num(r.train_error_mean[i]),
                    Table::num(r.train_error_std[i])});
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      errs.add_row({Table::num(r.stage), "val", labels[i], Table::num(r.val_error_mean[i]),
                    Table::num(r.val_error_std[i])});
    }
  }
  save_table(errs, dir / "stage_errors.tsv");

  const auto& last = result.reports.back();
  out << fmt::format("command=train status=ok stages={} val_fidelity={} val_infidelity={} predictor={} digest={}\n",
                     result.predictor.size(), Table::num(last.val_fidelity), Table::num(1.0 - last.val_fidelity),
                     ppath.string(), io::digest_hex(bytes));
  return kExitOk;
}

int cmd_evaluate(const CommonOptions& o, const std::string& predictor_path, const std::string& dataset_path,
                 const std::vector<double>& sigmas_flag, bool whole, std::ostream& out, Logger& log) {
  std::vector<std::string> extra;
  if (!sigmas_flag.empty()) {
    std::string list = "evaluate.noise_sigmas=[";
    for (std::size_t i = 0; i < sigmas_flag.size(); ++i) list += (i ? "," : "") + Table::num(sigmas_flag[i]);
    extra.push_back(list + "]");
  }
  const RunConfig cfg = resolve(o, extra);
  require_file(predictor_path, "predictor");
  require_file(dataset_path, "dataset");
  const MultiStagePredictor pred = load_predictor(predictor_path);
  const Dataset ds = load(dataset_path);
  check_compatible(pred, ds.meta);
  const Dataset target = whole ? ds : split(ds, cfg.train_fraction).second;
  log("evaluating {} stages on {} samples", pred.size(), target.size());

  std::vector<std::string> cols{"sigma"};
  for (std::size_t k = 0; k < pred.size(); ++k) cols.push_back("fidelity_" + std::to_string(k));
  for (std::size_t k = 0; k < pred.size(); ++k) cols.push_back("infidelity_" + std::to_string(k));
  Table t("noise_evaluation", cols);
  const nn::Matrix truth = theta_matrix(target);
  double last_fid = 0.0;
  for (double sigma : cfg.eval_sigmas) {
    const Dataset noisy = with_noise(target, sigma, cfg.eval_noise_seed);
    const auto outputs = stage_outputs(pred, noisy);
    std::vector<double> fid;
    for (std::size_t k = 1; k <= pred.size(); ++k) {
      fid.push_back(mean_fidelity(compose(pred, outputs, static_cast<int>(k)), truth));
    }
    std::vector<std::string> row{Table::num(sigma)};
    for (double f : fid) row.push_back(Table::num(f));
    for (double f : fid) row.push_back(Table::num(1.0 - f));
    t.add_row(std::move(row));
    last_fid = fid.back();
    log("sigma {} final-stage fidelity {}", sigma, Table::num(last_fid));
  }
  const auto path = save_table(t, cfg.output_dir / "evaluation.tsv");
  out << fmt::format("command=evaluate status=ok rows={} stages={} table={} last_fidelity={}\n", t.rows().size(),
                     pred.size(), path, Table::num(last_fid));
  return kExitOk;
}

int cmd_dd(const CommonOptions& o, const std::string& predictor_path, std::ostream& out, Logger& log) {
  const RunConfig cfg = resolve(o);
  require_file(predictor_path, "predictor");
  const MultiStagePredictor pred = load_predictor(predictor_path);
  const ModelFamily family = cfg.dd_family.build();

  std::vector<double> theta;
  if (cfg.dd_theta) {
    theta = *cfg.dd_theta;
  } else {
    Rng rng(cfg.dd_theta_seed);
    theta = sample_parameters(family, rng);
  }

  dd::DdOptions opts;
  opts.placement = cfg.dd_placement;
  std::vector<dd::FullEstimate> estimates;
  for (int p : cfg.dd_cycles) {
    try {
      estimates.push_back(dd::estimate_full(family, theta, pred, p, opts));
    } catch (const std::invalid_argument& e) {
      throw MetadataMismatch(e.what());
    }
    log("P {}: final-stage fidelity {}", p, Table::num(fidelity(estimates.back().theta_hat.back(), theta)));
  }

  const fs::path dir = cfg.output_dir;
  Table truth("dd_theta", {"parameter", "group", "value"});
  for (std::size_t i = 0; i < family.size(); ++i) truth.add_row({family.labels[i], family.groups[i], Table::num(theta[i])});
  save_table(truth, dir / "dd_theta.tsv");
  const Table fid = dd::fidelity_table(estimates, theta);
  save_table(fid, dir / "dd_fidelity.tsv");
  save_table(dd::relative_error_table(family, estimates, theta, cfg.pipeline.relative_error_guard),
             dir / "dd_relative_error.tsv");
  save_table(dd::pair_table(estimates, pred, theta), dir / "dd_pairs.tsv");

  nlohmann::json manifest;
  manifest["family"] = family.name;
  manifest["n_qubits"] = family.n_qubits;
  manifest["terms"] = nlohmann::json::array();
  for (const auto& term : family.terms) manifest["terms"].push_back(term.str());
  manifest["theta_source"] = cfg.dd_theta ? std::string("config") : "seed " + std::to_string(cfg.dd_theta_seed);
  manifest["cycles_per_interval"] = cfg.dd_cycles;
  manifest["pulse_on"] = cfg.dd_placement == dd::PulsePlacement::Spectators ? "spectators" : "targets";
  manifest["predictor"] = fs::absolute(predictor_path).string();
  manifest["predictor_family"] = pred.meta.family.name;
  manifest["pairs"] = nlohmann::json::array();
  for (const auto& p : dd::coupled_pairs(family)) manifest["pairs"].push_back({p.first + 1, p.second + 1});
  io::write_file(dir / "dd_manifest.json", manifest.dump(2) + "\n");

  const auto& best = estimates.back();
  out << fmt::format("command=dd status=ok family={} n_qubits={} runs={} pairs={} final_fidelity={}\n", family.name,
                     family.n_qubits, estimates.size(), best.pairs.size(),
                     Table::num(fidelity(best.theta_hat.back(), theta)));
  return kExitOk;
}

int cmd_analyze(const CommonOptions& o, const std::string& predictor_path, const std::string& dataset_path,
                std::ostream& out, Logger& log) {
  const RunConfig cfg = resolve(o);
  require_file(predictor_path, "predictor");
  require_file(dataset_path, "dataset");
  const MultiStagePredictor pred = load_predictor(predictor_path);
  const Dataset ds = load(dataset_path);
  check_compatible(pred, ds.meta);
  const auto [train, val] = split(ds, cfg.train_fraction);

  std::vector<std::pair<std::string, analysis::ErrorStats>> stats;
  for (int k = 1; k <= static_cast<int>(pred.size()); ++k) {
    stats.emplace_back("train", analysis::error_stats(pred, train, k));
    stats.emplace_back("val", analysis::error_stats(pred, val, k));
  }
  const fs::path dir = cfg.output_dir;
  save_table(analysis::error_table(stats), dir / "error_stats.tsv");

  log("correlation scan over {} features on {} training samples", train.meta.observation_stride(), train.size());
  const auto report = analysis::correlation_report(pred, train, cfg.bins, cfg.resolved_workers());
  save_table(analysis::correlation_table(report), dir / "correlation.tsv");

  std::string pccs, mis;
  for (const auto& s : report.stages) {
    pccs += (pccs.empty() ? "" : ",") + Table::num(s.max_abs_pcc);
    mis += (mis.empty() ? "" : ",") + Table::num(s.max_mi);
  }
  out << fmt::format("command=analyze status=ok stages={} max_abs_pcc={} max_mi={}\n", pred.size(), pccs, mis);
  return kExitOk;
}

int cmd_sweep(const CommonOptions& o, std::ostream& out, Logger& log) {
  const RunConfig cfg = resolve(o);
  const auto sc = cfg.sweep_config();
  log("sweeping {} grid points with {} samples each", sc.grid.size(), sc.n_samples);
  const auto results = analysis::sampling_sweep(sc, [&](const analysis::SweepPoint& p, int stage,
                                                        const nn::EpochRecord& r) {
    log("tau {} S {} stage {} epoch {} val {:.4e}", Table::num(p.tau), p.n_steps, stage, r.epoch, r.val_loss);
  });
  const auto path = save_table(analysis::sweep_table(results), cfg.output_dir / "sweep.tsv");

  // Grid point with the lowest final validation infidelity.
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    if (results[i].reports.back().val_fidelity > results[best].reports.back().val_fidelity) best = i;
  }
  out << fmt::format("command=sweep status=ok points={} table={} best_tau={} best_n_steps={}\n", results.size(), path,
                     Table::num(results[best].point.tau), results[best].point.n_steps);
  return kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log_stream) {
  Logger log(log_stream);
  CLI::App app{"Hamiltonian learning from observation time series"};
  app.name("hamlearn");
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, eval_o, dd_o, an_o, sw_o;
  std::string gen_out, dataset, predictor;
  std::optional<std::size_t> gen_samples;
  std::optional<double> gen_noise;
  std::vector<double> sigmas;
  bool whole = false;

  auto* gen = app.add_subcommand("generate", "Simulate a dataset");
  add_common(gen, gen_o, false);
  gen->add_option("--out", gen_out, "Dataset file (default <output_dir>/dataset.hld)");
  gen->add_option("--samples", gen_samples, "Number of samples");
  gen->add_option("--noise", gen_noise, "Gaussian noise sigma on observations");

  auto* tr = app.add_subcommand("train", "Train a multi-stage predictor");
  add_common(tr, train_o, false);
  tr->add_option("-d,--dataset", dataset, "Dataset file (default <output_dir>/dataset.hld)");

  auto* ev = app.add_subcommand("evaluate", "Fidelity of a predictor under validation noise");
  add_common(ev, eval_o, false);
  ev->add_option("-p,--predictor", predictor, "Predictor bundle")->required();
  ev->add_option("-d,--dataset", dataset, "Dataset file")->required();
  ev->add_option("--sigma", sigmas, "Noise levels (overrides evaluate.noise_sigmas)")->delimiter(',');
  ev->add_flag("--all", whole, "Evaluate the whole dataset instead of its validation split");

  auto* ddc = app.add_subcommand("dd", "Decoupled pairwise estimation of a larger system");
  add_common(ddc, dd_o, false);
  ddc->add_option("-p,--predictor", predictor, "Two-qubit predictor bundle")->required();

  auto* an = app.add_subcommand("analyze", "Error statistics and input/target correlations");
  add_common(an, an_o, false);
  an->add_option("-p,--predictor", predictor, "Predictor bundle")->required();
  an->add_option("-d,--dataset", dataset, "Dataset file")->required();

  auto* sw = app.add_subcommand("sweep", "Pipeline runs over a grid of sampling settings");
  add_common(sw, sw_o, true);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
        sub && e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      out << sub->help();
      return kExitOk;
    }
    log_stream << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_o, gen_out, gen_samples, gen_noise, out, log);
    if (tr->parsed()) return cmd_train(train_o, dataset, out, log);
    if (ev->parsed()) return cmd_evaluate(eval_o, predictor, dataset, sigmas, whole, out, log);
    if (ddc->parsed()) return cmd_dd(dd_o, predictor, out, log);
    if (an->parsed()) return cmd_analyze(an_o, predictor, dataset, out, log);
    if (sw->parsed()) return cmd_sweep(sw_o, out, log);
  } catch (const ConfigError& e) {
    log_stream << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    log_stream << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    log_stream << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DivergenceError& e) {
    log_stream << "diverged at stage " << e.stage() << " epoch " << e.epoch() << ": " << e.what() << '\n';
    return kExitDivergence;
  } catch (const MetadataMismatch& e) {
    log_stream << "mismatch: " << e.what() << '\n';
    return kExitMismatch;
  } catch (const std::exception& e) {
    log_stream << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

} // namespace hamlearn::cli
