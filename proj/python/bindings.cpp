// SPDX-License-Identifier: Apache-2.0
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ddpt/cli.hpp"
#include "ddpt/config.hpp"
#include "ddpt/diffusion.hpp"
#include "ddpt/error.hpp"
#include "ddpt/experiment.hpp"
#include "ddpt/interpret.hpp"
#include "ddpt/metrics.hpp"
#include "ddpt/mini_lang.hpp"
#include "ddpt/text.hpp"

namespace py = pybind11;
using namespace ddpt;

namespace {

using Array = py::array_t<Scalar, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() == 1) return Tensor({1, static_cast<std::size_t>(a.shape(0))}, std::vector<Scalar>(a.data(), a.data() + a.size()));
  if (a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
  return Tensor({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                std::vector<Scalar>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

std::vector<double> table_view(const std::vector<double>& v) { return v; }

}  // namespace

PYBIND11_MODULE(_ddpt, m) {
  m.doc() = "Diffusion-driven prompt tuning lab: core operations";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<UsageError>(m, "UsageError", base);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<TimestepError>(m, "TimestepError", base);
  py::register_exception<ModelContractError>(m, "ModelContractError", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base);
  py::register_exception<IngestionError>(m, "IngestionError", base);
  py::register_exception<TrainingError>(m, "TrainingError", base);
  py::register_exception<CorruptionError>(m, "CorruptionError", base);
  py::register_exception<CompatibilityError>(m, "CompatibilityError", base);

  m.def("tokenize", [](const std::string& s) { return tokenize(s); }, py::arg("text"));
  m.def("detokenize", [](const std::vector<std::string>& t) { return detokenize(t); }, py::arg("tokens"));

  m.def("bleu4", [](const std::string& c, const std::string& r) { return bleu4(tokenize(c), tokenize(r)); },
        py::arg("candidate"), py::arg("reference"));
  m.def("chrf", [](const std::string& c, const std::string& r) { return chrf(c, r); }, py::arg("candidate"),
        py::arg("reference"));
  m.def("rouge_l", [](const std::string& c, const std::string& r) { return rouge_l(tokenize(c), tokenize(r)); },
        py::arg("candidate"), py::arg("reference"));
  m.def("meteor", [](const std::string& c, const std::string& r) { return meteor_lite(tokenize(c), tokenize(r)); },
        py::arg("candidate"), py::arg("reference"));
  m.def("codebleu", [](const std::string& c, const std::string& r) { return codebleu_lite(c, r); },
        py::arg("candidate"), py::arg("reference"));
  m.def(
      "evaluate",
      [](const std::vector<std::string>& c, const std::vector<std::string>& r, const std::vector<std::string>& metrics) {
        return to_python(evaluate_texts(c, r, metrics).to_json());
      },
      py::arg("candidates"), py::arg("references"), py::arg("metrics") = std::vector<std::string>{});
  m.def("metric_names", &metric_names);

  m.def("parse_mini", [](const std::string& code) { return to_sexpr(parse_mini(code)); }, py::arg("code"));
  m.def("subtree_signatures", [](const std::string& code) { return subtree_signatures(parse_mini(code)); },
        py::arg("code"));

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_readonly("steps", &NoiseSchedule::steps)
      .def_property_readonly("beta", [](const NoiseSchedule& s) { return table_view(s.beta); })
      .def_property_readonly("alpha", [](const NoiseSchedule& s) { return table_view(s.alpha); })
      .def_property_readonly("alpha_bar", [](const NoiseSchedule& s) { return table_view(s.alpha_bar); })
      .def_property_readonly("sigma", [](const NoiseSchedule& s) { return table_view(s.sigma); });
  m.def("linear_schedule", &build_linear_schedule, py::arg("steps"), py::arg("beta_start") = 1e-4,
        py::arg("beta_end") = 0.02);
  m.def(
      "forward_perturb",
      [](const Array& x0, std::size_t t, const Array& noise, const NoiseSchedule& s) {
        return to_array(forward_perturb(to_tensor(x0), t, to_tensor(noise), s));
      },
      py::arg("x0"), py::arg("t"), py::arg("noise"), py::arg("schedule"));
  m.def(
      "posterior_step",
      [](const Array& xt, const Array& x0, std::size_t t, const Array& z, const NoiseSchedule& s) {
        return to_array(posterior_step_from_x0(to_tensor(xt), to_tensor(x0), t, to_tensor(z), s));
      },
      py::arg("x_t"), py::arg("x0_hat"), py::arg("t"), py::arg("z"), py::arg("schedule"));
  m.def(
      "sample_chain",
      [](const std::function<Array(Array, std::size_t)>& predict, std::size_t rows, std::size_t cols,
         const NoiseSchedule& s, std::uint64_t seed, double noise_scale) {
        Rng rng(seed);
        const X0Predictor p = [&](const Tensor& x, std::size_t t) { return to_tensor(predict(to_array(x), t)); };
        return to_array(sample_chain(p, {rows, cols}, s, rng, ChainOptions{noise_scale}));
      },
      py::arg("predict"), py::arg("rows"), py::arg("cols"), py::arg("schedule"), py::arg("seed"),
      py::arg("noise_scale") = 1.0);

  m.def(
      "cosine", [](const Array& a, const Array& b) { return cosine(to_tensor(a).data(), to_tensor(b).data()); },
      py::arg("a"), py::arg("b"));
  m.def(
      "top_k_nearest",
      [](const Array& query, const Array& table, const std::vector<std::string>& words, std::size_t k) {
        const Vocab vocab(words);
        std::vector<std::pair<std::string, double>> out;
        for (const auto& n : top_k_nearest(to_tensor(query).data(), to_tensor(table), vocab, k)) {
          out.emplace_back(n.word, n.score);
        }
        return out;
      },
      py::arg("query"), py::arg("table"), py::arg("words"), py::arg("k") = 5,
      "Rows of `table` follow the vocabulary built from `words`: four reserved rows, then one per word.");

  m.def("config_keys", &config_keys);
  m.def(
      "run_experiment",
      [](const std::map<std::string, std::string>& overrides, std::uint64_t seed, const std::string& out_dir) {
        ExperimentConfig c;
        for (const auto& [k, v] : overrides) set_config_value(c, k, v);
        c.seed = seed;
        c.out_dir = out_dir;
        nlohmann::json report;
        {
          py::gil_scoped_release release;
          report = run_experiment(c);
        }
        return to_python(report);
      },
      py::arg("overrides"), py::arg("seed"), py::arg("out_dir"));
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
