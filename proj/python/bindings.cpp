#include "hypcd/assignment.hpp"
#include "hypcd/classifier.hpp"
#include "hypcd/config.hpp"
#include "hypcd/dataset.hpp"
#include "hypcd/errors.hpp"
#include "hypcd/gradcheck.hpp"
#include "hypcd/manifold.hpp"
#include "hypcd/optim.hpp"
#include "hypcd/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace hypcd;
using nlohmann::json;

namespace {

json to_json_obj(const py::object& o) {
  if (o.is_none()) return json();
  const auto dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(o).cast<std::string>());
}

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

TrainConfig config_from(const py::object& cfg) {
  const json doc = to_json_obj(cfg);
  TrainConfig c = resolve_config(doc, std::nullopt);
  c.validate();
  return c;
}

py::dict dataset_dict(const data::GcdDataset& ds) {
  py::dict d;
  d["features"] = ds.features;
  d["labels"] = ds.labels;
  d["labelled"] = ds.labelled;
  d["old_classes"] = ds.old_classes;
  d["num_classes"] = ds.num_classes;
  return d;
}

data::GcdDataset dataset_from(const py::dict& d) {
  data::GcdDataset ds;
  ds.features = d["features"].cast<Eigen::MatrixXd>();
  ds.labels = d["labels"].cast<std::vector<int>>();
  ds.labelled = d["labelled"].cast<std::vector<bool>>();
  ds.old_classes = d["old_classes"].cast<std::set<int>>();
  ds.num_classes = d["num_classes"].cast<int>();
  ds.validate();
  return ds;
}

py::dict report_dict(const assignment::AccReport& r) {
  py::dict d;
  d["acc_all"] = r.acc_all;
  d["acc_old"] = r.acc_old;
  d["acc_new"] = r.acc_new;
  d["n_old"] = r.n_old;
  d["n_new"] = r.n_new;
  d["permutation"] = r.permutation;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hyperbolic generalized category discovery core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  py::class_<BallConfig>(m, "BallConfig")
      .def(py::init<double, double>(), py::arg("curvature"), py::arg("clip_radius"))
      .def_property_readonly("curvature", &BallConfig::curvature)
      .def_property_readonly("clip_radius", &BallConfig::clip_radius)
      .def_property_readonly("max_norm", &BallConfig::max_norm)
      .def("__repr__", [](const BallConfig& b) {
        return "BallConfig(curvature=" + std::to_string(b.curvature()) + ", clip_radius=" +
               std::to_string(b.clip_radius()) + ")";
      });

  auto point = [](const Vector& v, const BallConfig& b) { return PoincarePoint(v, b); };

  m.def(
      "mobius_add",
      [point](const Vector& a, const Vector& b, const BallConfig& cfg) {
        return manifold::mobius_add(point(a, cfg), point(b, cfg), cfg).coords();
      },
      py::arg("a"), py::arg("b"), py::arg("cfg"));
  m.def(
      "hyperbolic_distance",
      [point](const Vector& a, const Vector& b, const BallConfig& cfg) {
        return manifold::hyperbolic_distance(point(a, cfg), point(b, cfg), cfg);
      },
      py::arg("a"), py::arg("b"), py::arg("cfg"));
  m.def(
      "conformal_factor", [point](const Vector& a, const BallConfig& cfg) { return manifold::conformal_factor(point(a, cfg), cfg); },
      py::arg("a"), py::arg("cfg"));
  m.def(
      "clip_features", [](const Vector& z, const BallConfig& cfg) { return manifold::clip_features(TangentVector(z), cfg).coords(); },
      py::arg("z"), py::arg("cfg"));
  m.def(
      "exp_map_origin",
      [](const Vector& z, const BallConfig& cfg) { return manifold::exp_map_origin(TangentVector(z), cfg).coords(); },
      py::arg("z"), py::arg("cfg"));
  m.def(
      "lift", [](const Vector& z, const BallConfig& cfg) { return manifold::lift(TangentVector(z), cfg).coords(); },
      py::arg("z"), py::arg("cfg"));
  m.def(
      "ball_proj", [](const Vector& v, const BallConfig& cfg) { return ball_proj(v, cfg).coords(); }, py::arg("v"),
      py::arg("cfg"));
  m.def(
      "hyp_linear",
      [point](const Vector& z, const Eigen::MatrixXd& w, const Vector& s, const BallConfig& cfg) {
        return classifier::hyp_linear(point(z, cfg), {w, s}, cfg).coords();
      },
      py::arg("z"), py::arg("weight"), py::arg("bias"), py::arg("cfg"));

  m.def(
      "cosine_lr",
      [](int epoch, int total_epochs, double base_lr, double min_lr) {
        return optim::cosine_lr(epoch, {base_lr, min_lr, total_epochs, 0.9});
      },
      py::arg("epoch"), py::arg("total_epochs"), py::arg("base_lr") = 0.1, py::arg("min_lr") = 0.001);

  m.def("hungarian_solve", &assignment::hungarian_solve, py::arg("cost"));
  m.def(
      "hungarian_acc",
      [](const std::vector<int>& y_true, const std::vector<int>& y_pred, int k, const std::set<int>& old) {
        return report_dict(assignment::hungarian_acc(y_true, y_pred, k, old));
      },
      py::arg("y_true"), py::arg("y_pred"), py::arg("k"), py::arg("old_classes"));
  m.def(
      "semi_sup_kmeans",
      [](const Eigen::MatrixXd& x, const std::vector<bool>& labelled, const std::vector<int>& labels, int k,
         int max_iters, std::uint64_t seed, bool balanced) {
        const assignment::KMeansOptions opt{k, max_iters, seed};
        const auto r = balanced ? assignment::balanced_semi_sup_kmeans(x, labelled, labels, opt)
                                : assignment::semi_sup_kmeans(x, labelled, labels, opt);
        return py::make_tuple(r.assignments, r.centroids, r.iterations_run);
      },
      py::arg("features"), py::arg("labelled"), py::arg("labels"), py::arg("k"), py::arg("max_iters") = 100,
      py::arg("seed") = 0, py::arg("balanced") = false);

  m.def(
      "synth_dataset",
      [](int k, int depth, int dim, int per_class, double noise, double step, double old_fraction,
         double labelled_fraction, std::uint64_t seed) {
        const data::SynthParams p{k, depth, dim, per_class, step, noise, seed};
        return dataset_dict(data::split_dataset(data::synth_dataset(p), old_fraction, labelled_fraction, seed));
      },
      py::arg("k") = 8, py::arg("depth") = 3, py::arg("dim") = 64, py::arg("per_class") = 200, py::arg("noise") = 1.5,
      py::arg("step") = 1.0, py::arg("old_fraction") = 0.5, py::arg("labelled_fraction") = 0.5, py::arg("seed") = 0);
  m.def(
      "save_dataset", [](const std::filesystem::path& prefix, const py::dict& d) { data::save_dataset(prefix, dataset_from(d)); },
      py::arg("prefix"), py::arg("dataset"));
  m.def(
      "load_features", [](const std::filesystem::path& prefix) { return dataset_dict(data::load_features(prefix)); },
      py::arg("prefix"));
  m.def("read_matrix", &data::read_matrix, py::arg("path"));
  m.def("write_matrix", &data::write_matrix, py::arg("path"), py::arg("matrix"));

  m.def(
      "default_config", [](const std::string& profile) { return to_py(to_json(profile_defaults(parse_profile(profile)))); },
      py::arg("profile") = "fine_grained");
  m.def(
      "train",
      [](const py::dict& d, const py::object& cfg, const std::string& checkpoint_dir) {
        const data::GcdDataset ds = dataset_from(d);
        const TrainConfig c = config_from(cfg);
        train::TrainResult res;
        {
          py::gil_scoped_release release;
          res = train::train_run(ds, c);
        }
        if (!checkpoint_dir.empty()) train::save_checkpoint(checkpoint_dir, res.checkpoint);
        return to_py(res.metrics);
      },
      py::arg("dataset"), py::arg("config") = py::none(), py::arg("checkpoint_dir") = "");
  m.def(
      "evaluate",
      [](const py::dict& d, const std::filesystem::path& checkpoint_dir) {
        return report_dict(train::eval_run(dataset_from(d), train::load_checkpoint(checkpoint_dir)));
      },
      py::arg("dataset"), py::arg("checkpoint_dir"));
  m.def(
      "gradcheck",
      [](int configs, std::uint64_t seed, double tol) {
        py::list out;
        for (const auto& lc : gradcheck::run_suite(configs, seed, tol)) {
          py::dict d;
          d["name"] = lc.name;
          d["configs"] = lc.configs;
          d["failures"] = lc.failures;
          d["max_rel_err"] = lc.max_rel_err;
          d["pass"] = lc.pass();
          out.append(d);
        }
        return out;
      },
      py::arg("configs") = 20, py::arg("seed") = 0, py::arg("tol") = 1e-4);
}
