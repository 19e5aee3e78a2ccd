#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hamlearn/analysis.hpp"
#include "hamlearn/dataset.hpp"
#include "hamlearn/decoupling.hpp"
#include "hamlearn/multistage.hpp"
#include "hamlearn/rng.hpp"
#ifdef HAMLEARN_WITH_CLI
#include "hamlearn/commands.hpp"
#endif

namespace py = pybind11;
using namespace hamlearn;

namespace {

py::array_t<double> to_array(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  py::array_t<double> a({rows, cols});
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

// M x n column-per-sample matrix to an n x M array.
py::array_t<double> samples_to_array(const nn::Matrix& m) {
  py::array_t<double> a({static_cast<std::size_t>(m.cols()), static_cast<std::size_t>(m.rows())});
  auto r = a.mutable_unchecked<2>();
  for (Eigen::Index i = 0; i < m.cols(); ++i)
    for (Eigen::Index j = 0; j < m.rows(); ++j) r(i, j) = m(j, i);
  return a;
}

std::vector<double> as_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

py::dict family_dict(const ModelFamily& f) {
  py::dict d;
  d["name"] = f.name;
  d["n_qubits"] = f.n_qubits;
  std::vector<std::string> terms;
  std::vector<std::pair<double, double>> ranges;
  for (const auto& t : f.terms) terms.push_back(t.str());
  for (const auto& r : f.ranges) ranges.emplace_back(r.lo, r.hi);
  d["terms"] = terms;
  d["labels"] = f.labels;
  d["groups"] = f.groups;
  d["ranges"] = ranges;
  return d;
}

ModelFamily make_family(const std::string& name, int n_qubits,
                        const std::optional<std::vector<std::pair<double, double>>>& ranges) {
  ModelFamily f = ModelFamily::by_name(name, n_qubits);
  if (ranges) {
    if (ranges->size() != f.size()) throw std::invalid_argument("one range per parameter required");
    for (std::size_t i = 0; i < f.size(); ++i) f.ranges[i] = {(*ranges)[i].first, (*ranges)[i].second};
    f.validate();
  }
  return f;
}

py::dict report_dict(const StageReport& r) {
  py::dict d;
  d["stage"] = r.stage;
  d["epsilon"] = r.epsilon;
  d["next_epsilon"] = r.next_epsilon;
  d["best_epoch"] = r.best_epoch;
  d["train_fidelity"] = r.train_fidelity;
  d["val_fidelity"] = r.val_fidelity;
  std::vector<double> tl, vl;
  for (const auto& e : r.history) {
    tl.push_back(e.train_loss);
    vl.push_back(e.val_loss);
  }
  d["train_loss"] = tl;
  d["val_loss"] = vl;
  d["train_error_std"] = r.train_error_std;
  d["val_error_std"] = r.val_error_std;
  return d;
}

} // namespace

PYBIND11_MODULE(_hamlearn, m) {
  m.doc() = "Hamiltonian learning core";
  m.attr("__version__") = "0.1.0";

  m.def("family", [](const std::string& name, int n_qubits) { return family_dict(ModelFamily::by_name(name, n_qubits)); },
        py::arg("name"), py::arg("n_qubits") = 2, "Terms, labels, groups and ranges of a model family.");

  m.def(
      "simulate",
      [](const std::vector<std::string>& terms, const std::vector<double>& theta, double tau, int n_steps,
         std::uint64_t state_seed) {
        HamiltonianModel model;
        for (const auto& t : terms) model.terms.push_back(PauliString::parse(t));
        model.n_qubits = model.terms.empty() ? 0 : model.terms.front().size();
        model.theta = theta;
        Rng rng(state_seed);
        std::vector<QuantumState> states;
        for (int k = 0; k < kInitialStateCount; ++k) states.push_back(haar_random_state(model.n_qubits, rng));
        const ObservationSeries s = observe_series(model, states, tau, n_steps);
        py::array_t<double> a({static_cast<std::size_t>(s.n_states), static_cast<std::size_t>(s.n_steps),
                               static_cast<std::size_t>(3 * s.n_qubits)});
        std::copy(s.values.begin(), s.values.end(), a.mutable_data());
        return a;
      },
      py::arg("terms"), py::arg("theta"), py::arg("tau"), py::arg("n_steps"), py::arg("state_seed") = 0,
      "Observation series [state][step][3N] for H = sum theta_i T_i from three Haar-random states.");

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def_property_readonly("thetas", [](const Dataset& d) { return to_array(d.thetas, d.size(), d.theta_dim()); })
      .def_property_readonly("observations",
                             [](const Dataset& d) {
                               return to_array(d.observations, d.size(), d.meta.observation_stride());
                             })
      .def_property_readonly("family", [](const Dataset& d) { return family_dict(d.meta.family); })
      .def_property_readonly("tau", [](const Dataset& d) { return d.meta.tau; })
      .def_property_readonly("n_steps", [](const Dataset& d) { return d.meta.n_steps; })
      .def_property_readonly("noise_sigma", [](const Dataset& d) { return d.meta.noise_sigma; })
      .def_property_readonly("meta_json", [](const Dataset& d) { return meta_to_json(d.meta, 2); })
      .def("save", [](const Dataset& d, const std::filesystem::path& p) { save(d, p); })
      .def("with_noise", &with_noise, py::arg("sigma"), py::arg("seed"))
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

  m.def(
      "generate",
      [](const std::string& name, std::size_t n_samples, int n_qubits, double tau, int n_steps, std::uint64_t seed,
         double noise_sigma, std::optional<std::uint64_t> state_seed,
         std::optional<std::vector<std::pair<double, double>>> ranges, unsigned workers) {
        const DatasetMeta meta = make_meta(make_family(name, n_qubits, ranges), tau, n_steps, n_samples, seed,
                                           noise_sigma, state_seed.value_or(seed));
        py::gil_scoped_release nogil;
        return generate(meta, workers);
      },
      py::arg("family"), py::arg("n_samples"), py::arg("n_qubits") = 2, py::arg("tau") = 0.02 * 3.141592653589793,
      py::arg("n_steps") = 100, py::arg("seed") = 0, py::arg("noise_sigma") = 0.0, py::arg("state_seed") = py::none(),
      py::arg("ranges") = py::none(), py::arg("workers") = 1);

  m.def("load_dataset", [](const std::filesystem::path& p) { return load(p); });
  m.def("split", &split, py::arg("dataset"), py::arg("train_fraction") = 0.8);

  py::class_<MultiStagePredictor>(m, "Predictor")
      .def_property_readonly("n_stages", &MultiStagePredictor::size)
      .def_property_readonly("epsilons",
                             [](const MultiStagePredictor& p) {
                               std::vector<double> e;
                               for (const auto& s : p.stages) e.push_back(s.epsilon);
                               return e;
                             })
      .def_property_readonly("family", [](const MultiStagePredictor& p) { return family_dict(p.meta.family); })
      .def(
          "predict",
          [](const MultiStagePredictor& p, const Dataset& d, int n_stages) {
            nn::Matrix out;
            {
              py::gil_scoped_release nogil;
              out = predict_all(p, d, n_stages);
            }
            return samples_to_array(out);
          },
          py::arg("dataset"), py::arg("n_stages") = -1, "Composed estimates, one row per sample.")
      .def(
          "mean_fidelity",
          [](const MultiStagePredictor& p, const Dataset& d, int n_stages) {
            py::gil_scoped_release nogil;
            return mean_fidelity(predict_all(p, d, n_stages), theta_matrix(d));
          },
          py::arg("dataset"), py::arg("n_stages") = -1)
      .def("save", [](const MultiStagePredictor& p, const std::filesystem::path& path) { save_predictor(p, path); });

  m.def("load_predictor", [](const std::filesystem::path& p) { return load_predictor(p); });

  m.def(
      "train",
      [](const Dataset& train_ds, const Dataset& val_ds, int hidden, std::vector<int> fc_hidden, int epochs,
         int batch_size, double learning_rate, double lr_decay, int patience, int max_stages, std::uint64_t seed,
         double improvement_margin) {
        PipelineConfig cfg;
        cfg.hidden_dim = hidden;
        cfg.fc_hidden = std::move(fc_hidden);
        cfg.train.epochs = epochs;
        cfg.train.batch_size = batch_size;
        cfg.train.learning_rate = learning_rate;
        cfg.train.lr_decay = lr_decay;
        cfg.train.patience = patience;
        cfg.train.seed = seed;
        cfg.max_stages = max_stages;
        cfg.improvement_margin = improvement_margin;
        PipelineResult r;
        {
          py::gil_scoped_release nogil;
          r = run_pipeline(train_ds, val_ds, cfg);
        }
        py::list reports;
        for (const auto& s : r.reports) reports.append(report_dict(s));
        return py::make_tuple(r.predictor, reports);
      },
      py::arg("train"), py::arg("val"), py::arg("hidden") = 128, py::arg("fc_hidden") = std::vector<int>{64},
      py::arg("epochs") = 200, py::arg("batch_size") = 256, py::arg("learning_rate") = 1e-3, py::arg("lr_decay") = 1.0,
      py::arg("patience") = 30, py::arg("max_stages") = 3, py::arg("seed") = 0, py::arg("improvement_margin") = 0.1,
      "Run the multi-stage pipeline. Returns (predictor, per-stage reports).");

  m.def("fidelity", [](const std::vector<double>& a, const std::vector<double>& b) { return fidelity(a, b); });

  m.def(
      "pcc",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& y) {
        return analysis::pcc(as_vector(x), as_vector(y));
      },
      "Pearson correlation, or None when either input is constant.");

  m.def(
      "mutual_information",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& y, int bins) {
        return analysis::mutual_information(as_vector(x), as_vector(y), bins).nats;
      },
      py::arg("x"), py::arg("y"), py::arg("bins") = analysis::kDefaultBins, "Histogram mutual information in nats.");

  m.def(
      "dd_estimate",
      [](const std::string& name, int n_qubits, const std::vector<double>& theta, const MultiStagePredictor& p,
         int cycles) {
        const ModelFamily f = ModelFamily::by_name(name, n_qubits);
        dd::FullEstimate e;
        {
          py::gil_scoped_release nogil;
          e = dd::estimate_full(f, theta, p, cycles);
        }
        return e.theta_hat;
      },
      py::arg("family"), py::arg("n_qubits"), py::arg("theta"), py::arg("predictor"), py::arg("cycles"),
      "Decoupled pairwise estimate of all family parameters, one vector per stage cutoff.");

#ifdef HAMLEARN_WITH_CLI
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, log;
        int code;
        {
          py::gil_scoped_release nogil;
          code = cli::run(args, out, log);
        }
        return py::make_tuple(code, out.str(), log.str());
      },
      py::arg("args"), "Run a hamlearn subcommand in-process. Returns (exit_code, stdout, log).");
#endif
}
