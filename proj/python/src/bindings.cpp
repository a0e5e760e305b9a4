#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "oodrl/checkpoint.hpp"
#include "oodrl/corruptions.hpp"
#include "oodrl/envs.hpp"
#include "oodrl/error.hpp"
#include "oodrl/evalkit.hpp"
#include "oodrl/nn.hpp"
#include "oodrl/uncertainty.hpp"

namespace py = pybind11;
using namespace oodrl;

namespace {

using FrameArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Frame to_frame(const FrameArray& a) {
  if (a.ndim() != 2) throw ShapeError("frame must be a 2-D array (height, width)");
  Frame f(static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), f.pixels.begin());
  return f;
}

FrameArray to_array(const Frame& f) {
  FrameArray a({static_cast<py::ssize_t>(f.height), static_cast<py::ssize_t>(f.width)});
  std::copy(f.pixels.begin(), f.pixels.end(), a.mutable_data());
  return a;
}

nn::Stochastic stochastic(const std::string& kind, double rate) {
  switch (nn::stochastic_from_string(kind)) {
    case nn::StochasticKind::dropout: return nn::Stochastic::dropout(rate);
    case nn::StochasticKind::dropconnect: return nn::Stochastic::dropconnect(rate);
    case nn::StochasticKind::none: break;
  }
  return nn::Stochastic::none();
}

py::dict roc_dict(const evalkit::RocResult& r) {
  py::list points;
  for (const auto& p : r.points) points.append(py::make_tuple(p.fpr, p.tpr, p.threshold));
  py::dict d;
  d["auc"] = r.auc;
  d["best_threshold"] = r.best_threshold;
  d["youden_j"] = r.youden_j;
  d["points"] = points;
  return d;
}

py::object step_result(const envs::StepResult& r) {
  return py::make_tuple(r.obs.values, r.reward, r.terminated, r.truncated);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core routines of the OOD detection benchmark";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<SpecError>(m, "SpecError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<MethodError>(m, "MethodError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

  // ---- evaluation
  m.def(
      "auc",
      [](const std::vector<double>& id, const std::vector<double>& ood, const std::string& rule) {
        return roc_dict(evalkit::auc(id, ood, evalkit::threshold_rule_from_string(rule)));
      },
      py::arg("id_scores"), py::arg("ood_scores"), py::arg("rule") = "youden");
  m.def(
      "aggregate",
      [](const std::vector<double>& v) {
        const auto a = evalkit::aggregate(v);
        py::dict d;
        d["mean"] = a.mean;
        d["std"] = a.std;
        d["n"] = a.n;
        d["single_trial"] = a.single_trial;
        return d;
      },
      py::arg("values"));

  // ---- corruptions
  m.def(
      "corrupt",
      [](const FrameArray& frame, const std::string& kind, py::object param, std::optional<int> severity,
         std::uint64_t seed) {
        const auto k = corruptions::kind_from_string(kind);
        corruptions::CorruptionSpec spec;
        if (!param.is_none()) spec = corruptions::parse_spec(k, py::str(param));
        else if (severity) spec = corruptions::severity(k, *severity);
        else throw ConfigError("corrupt: give either param or severity");
        Rng rng(seed);
        return to_array(corruptions::corrupt(to_frame(frame), spec, rng));
      },
      py::arg("frame"), py::arg("kind"), py::arg("param") = py::none(),
      py::arg("severity") = py::none(), py::arg("seed") = 0);
  m.def(
      "severity_grid",
      [](const std::string& kind) {
        std::vector<std::string> labels;
        for (const auto& s : corruptions::severity_grid(corruptions::kind_from_string(kind)))
          labels.push_back(s.parameter_label());
        return labels;
      },
      py::arg("kind"));

  // ---- dynamics
  m.def(
      "cartpole_step",
      [](std::array<double, 4> s, int action, const std::map<std::string, double>& overrides) {
        auto env = envs::make_variant("cartpole", overrides);
        const auto& p = dynamic_cast<envs::Cartpole&>(*env).params();
        const auto t = envs::cartpole_step({s[0], s[1], s[2], s[3]},
                                           static_cast<envs::CartpoleAction>(action != 0), p);
        return py::make_tuple(std::array<double, 4>{t.state.x, t.state.x_dot, t.state.theta, t.state.theta_dot},
                              t.reward, t.terminated);
      },
      py::arg("state"), py::arg("action"), py::arg("params") = std::map<std::string, double>{});
  m.def(
      "pendulum_step",
      [](std::array<double, 2> s, double torque, const std::map<std::string, double>& overrides) {
        auto env = envs::make_variant("pendulum", overrides);
        const auto& p = dynamic_cast<envs::Pendulum&>(*env).params();
        const auto t = envs::pendulum_step({s[0], s[1]}, torque, p);
        return py::make_tuple(std::array<double, 2>{t.state.theta, t.state.theta_dot}, t.reward,
                              t.applied_torque);
      },
      py::arg("state"), py::arg("torque"), py::arg("params") = std::map<std::string, double>{});

  py::class_<envs::Environment>(m, "Environment")
      .def_property_readonly("id", &envs::Environment::id)
      .def_property_readonly("family", &envs::Environment::family)
      .def_property_readonly("observation_size", &envs::Environment::observation_size)
      .def_property_readonly("discrete", [](const envs::Environment& e) { return e.action_space().discrete; })
      .def("parameters", &envs::Environment::parameters)
      .def("reset", [](envs::Environment& e, std::uint64_t seed) { return e.reset(seed).values; },
           py::arg("seed"))
      .def("step", [](envs::Environment& e, int a) { return step_result(e.step(a)); }, py::arg("action"))
      .def("step", [](envs::Environment& e, double a) { return step_result(e.step(a)); }, py::arg("action"));

  m.def("make_env", &envs::make_env, py::arg("id"),
        py::arg("overrides") = envs::Overrides{});
  m.def("env_ids", &envs::env_ids);
  m.def(
      "variant_presets",
      [](const std::string& env) {
        std::vector<std::string> ids;
        for (const auto& p : envs::variant_presets(env)) ids.push_back(p.id);
        return ids;
      },
      py::arg("env"));

  // ---- networks and uncertainty
  py::class_<nn::Network>(m, "Network")
      .def_property_readonly("layer_dims", [](const nn::Network& n) { return n.spec().layer_dims; })
      .def_property_readonly("stochastic",
                             [](const nn::Network& n) { return nn::to_string(n.spec().stochastic.kind); })
      .def_property_readonly("parameter_count", &nn::Network::parameter_count)
      .def("weights", [](const nn::Network& n, std::size_t l) { return n.weights().at(l); }, py::arg("layer"))
      .def("biases", [](const nn::Network& n, std::size_t l) { return n.biases().at(l); }, py::arg("layer"));

  m.def(
      "init_network",
      [](std::vector<std::size_t> dims, const std::string& activation, const std::string& stoch,
         double rate, std::optional<double> output_bound, std::uint64_t seed) {
        const auto out = output_bound ? nn::OutputActivation::tanh_scaled(*output_bound)
                                      : nn::OutputActivation::identity();
        return nn::init_network(nn::NetworkSpec::mlp(std::move(dims), nn::activation_from_string(activation),
                                                     out, stochastic(stoch, rate)),
                                seed);
      },
      py::arg("dims"), py::arg("activation") = "relu", py::arg("stochastic") = "none",
      py::arg("rate") = 0.0, py::arg("output_bound") = py::none(), py::arg("seed") = 0);
  m.def(
      "forward",
      [](const nn::Network& net, const nn::Matrix& inputs, std::optional<std::uint64_t> mask_seed) {
        if (!mask_seed) return nn::predict(net, inputs, nn::StochasticMode::deterministic());
        Rng rng(*mask_seed);
        return nn::predict(net, inputs, nn::StochasticMode::sampled(rng));
      },
      py::arg("net"), py::arg("inputs"), py::arg("mask_seed") = py::none(),
      "Column-major batch: inputs has shape (input_dim, batch).");
  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& p) { return load_checkpoint(p).network; }, py::arg("path"));
  m.def(
      "mc_score",
      [](const nn::Network& net, const std::vector<double>& input, int samples, std::uint64_t seed) {
        Rng rng(seed);
        const auto ms = uncertainty::mc_score(net, input, samples, rng);
        return py::make_tuple(ms.mean, ms.std);
      },
      py::arg("net"), py::arg("input"), py::arg("samples") = 5, py::arg("seed") = 0);
  m.def(
      "ensemble_score",
      [](const std::vector<nn::Network>& members, const std::vector<double>& input) {
        const auto ms = uncertainty::ensemble_score(members, input);
        return py::make_tuple(ms.mean, ms.std);
      },
      py::arg("members"), py::arg("input"));
}
