#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "statetrait/archetypes.hpp"
#include "statetrait/audit.hpp"
#include "statetrait/distributions.hpp"
#include "statetrait/error.hpp"
#include "statetrait/pipeline.hpp"
#include "statetrait/psychometrics.hpp"
#include "statetrait/report.hpp"
#include "statetrait/scales.hpp"

namespace py = pybind11;
using namespace statetrait;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict icc_dict(const psychometrics::IccResult& r) {
  py::dict d;
  d["icc"] = r.icc;
  d["var_between"] = r.var_between;
  d["var_within"] = r.var_within;
  d["msb"] = r.msb;
  d["msw"] = r.msw;
  d["k0"] = r.k0;
  d["n_groups"] = r.n_groups;
  d["n_obs"] = r.n_obs;
  d["clamped"] = r.clamped;
  d["degenerate"] = r.degenerate;
  return d;
}

py::dict anova_dict(const psychometrics::AnovaResult& r) {
  py::dict d;
  d["f"] = r.f;
  d["df1"] = r.df1;
  d["df2"] = r.df2;
  d["p"] = r.p;
  d["eta_squared"] = r.eta_squared;
  d["infinite_f"] = r.infinite_f;
  d["degenerate"] = r.degenerate;
  return d;
}

py::dict run_stage(const std::string& stage, const std::string& config, std::optional<std::uint64_t> seed, bool mock,
                   std::optional<std::string> out, std::optional<std::size_t> parallelism) {
  const auto s = pipeline::parse_stage(stage);
  auto cfg = pipeline::load_config(config);
  pipeline::RunOptions opt;
  opt.seed = seed;
  opt.force_mock = mock;
  if (out) opt.output_dir = *out;
  opt.parallelism = parallelism;
  pipeline::RunResult r;
  {
    py::gil_scoped_release release;
    r = pipeline::run(s, std::move(cfg), opt);
  }
  py::list stages;
  for (const auto& st : r.stages) {
    py::dict d;
    d["stage"] = pipeline::to_string(st.stage);
    d["exit_code"] = st.exit_code;
    d["outputs"] = st.outputs;
    d["notices"] = st.notices;
    stages.append(d);
  }
  py::dict d;
  d["exit_code"] = r.exit_code;
  d["error"] = r.error;
  d["stages"] = stages;
  return d;
}

py::dict mixed_model(const std::vector<double>& y, const std::vector<std::string>& contexts,
                     const std::vector<std::string>& users, const std::string& baseline) {
  const auto fit = psychometrics::fit_random_intercept(y, contexts, users, baseline);
  py::list beta;
  for (const auto& c : fit.beta) {
    py::dict b;
    b["name"] = c.name;
    b["estimate"] = c.estimate;
    b["std_error"] = c.std_error;
    b["ci_low"] = c.ci_low;
    b["ci_high"] = c.ci_high;
    b["p_value"] = c.p_value;
    beta.append(b);
  }
  py::dict d;
  d["beta"] = beta;
  d["sigma_u2"] = fit.sigma_u2;
  d["sigma_e2"] = fit.sigma_e2;
  d["reml_loglik"] = fit.reml_loglik;
  d["converged"] = fit.converged;
  d["at_boundary"] = fit.at_boundary;
  d["n_obs"] = fit.n_obs;
  d["n_groups"] = fit.n_groups;
  return d;
}

py::dict kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int restarts) {
  archetypes::KMeansOptions opt;
  opt.restarts = restarts;
  const auto m = archetypes::kmeans(x, k, seed, opt);
  py::dict d;
  d["k"] = m.k;
  d["centroids"] = m.centroids;
  d["assignments"] = m.assignments;
  d["inertia"] = m.inertia;
  d["inertia_trace"] = m.inertia_trace;
  d["iterations"] = m.iterations;
  d["converged"] = m.converged;
  return d;
}

/// Reward audit over the bundled dilemmas with mock reward models.
py::object mock_reward_audit(const std::map<std::string, double>& deltas, std::uint64_t seed, bool paired) {
  const auto questions = audit::bundled_dilemmas();
  std::vector<std::string> refs;
  for (const auto& q : questions) refs.push_back("A considered answer to: " + q.text);
  std::vector<std::pair<std::string, std::string>> cards;
  for (const char* n : {"Distressed-Vulnerable", "Driven-Assertive", "Self-Actualized"})
    cards.emplace_back(n, std::string("Profile card for ") + n);
  const auto conditions = audit::make_conditions(cards);
  std::vector<providers::RewardMock> mocks;
  mocks.reserve(deltas.size());
  for (const auto& [name, delta] : deltas) mocks.emplace_back(name, seed, delta);
  std::vector<providers::RewardProvider*> models;
  for (auto& m : mocks) models.push_back(&m);
  const auto grid = audit::run_reward_grid(questions, refs, conditions, models);
  audit::InvarianceOptions o;
  o.paired = paired;
  return to_py(report::to_json(audit::invariance_report(grid, o)));
}

}  // namespace

PYBIND11_MODULE(_statetrait, m) {
  m.doc() = "State/trait profiling and persona-sensitivity audits";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<EstimationError>(m, "EstimationError", base.ptr());
  py::register_exception<PairingError>(m, "PairingError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<DependencyError>(m, "DependencyError", base.ptr());

  m.def("version", &pipeline::version);
  m.def("stages", [] {
    std::vector<std::string> out;
    for (auto s : pipeline::stage_order()) out.push_back(pipeline::to_string(s));
    return out;
  });
  m.def("run", &run_stage, py::arg("stage"), py::arg("config"), py::arg("seed") = py::none(),
        py::arg("mock") = false, py::arg("out") = py::none(), py::arg("parallelism") = py::none(),
        "Run one pipeline stage, or \"all\". Returns exit code, error and per-stage outputs.");
  m.def("config_fingerprint", [](const std::string& path) { return to_py(pipeline::load_config(path).fingerprint()); });

  m.def("icc", [](const std::vector<std::vector<double>>& groups) { return icc_dict(psychometrics::icc_oneway(groups)); },
        py::arg("groups"));
  m.def(
      "decompose",
      [](const Eigen::MatrixXd& values, const std::vector<std::string>& users, std::vector<std::string> dimensions,
         double threshold) {
        if (dimensions.empty())
          for (Eigen::Index j = 0; j < values.cols(); ++j) dimensions.push_back("d" + std::to_string(j));
        const auto dec = psychometrics::decompose({"python", dimensions, values, users}, threshold);
        py::list dims;
        for (const auto& x : dec.dimensions) {
          py::dict d;
          d["dimension"] = x.dimension;
          d["icc"] = x.icc;
          d["ospe"] = x.ospe;
          d["var_between"] = x.var_between;
          d["var_within"] = x.var_within;
          d["clamped"] = x.clamped;
          dims.append(d);
        }
        py::dict d;
        d["dimensions"] = dims;
        d["mean_icc"] = dec.mean_icc;
        d["mean_ospe"] = dec.mean_ospe;
        d["n_below_threshold"] = dec.n_below_threshold;
        return d;
      },
      py::arg("values"), py::arg("users"), py::arg("dimensions") = std::vector<std::string>{},
      py::arg("threshold") = psychometrics::kStateDominantThreshold);
  m.def("fit_random_intercept", &mixed_model, py::arg("y"), py::arg("contexts"), py::arg("users"),
        py::arg("baseline"));
  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return psychometrics::pearson(x, y); });
  m.def("oneway_anova",
        [](const std::vector<std::vector<double>>& g) { return anova_dict(psychometrics::oneway_anova(g)); });
  m.def("cohens_d", [](const std::vector<double>& t, const std::vector<double>& b) { return psychometrics::cohens_d(t, b); });
  m.def("paired_d", [](const std::vector<double>& t, const std::vector<double>& b) { return psychometrics::paired_d(t, b); });

  m.def("f_cdf", &psychometrics::f_cdf, py::arg("df1"), py::arg("df2"), py::arg("x"));
  m.def("f_sf", &psychometrics::f_sf, py::arg("df1"), py::arg("df2"), py::arg("x"));
  m.def("t_cdf", &psychometrics::t_cdf, py::arg("df"), py::arg("x"));
  m.def("t_two_sided_p", &psychometrics::t_two_sided_p, py::arg("df"), py::arg("t"));

  m.def("kmeans", &kmeans, py::arg("x"), py::arg("k"), py::arg("seed") = 0, py::arg("restarts") = 10);
  m.def("silhouette", [](const Eigen::MatrixXd& x, const std::vector<int>& labels) {
    return archetypes::silhouette(x, labels);
  });
  m.def(
      "select_k",
      [](const Eigen::MatrixXd& x, const std::vector<int>& ks, std::uint64_t seed) {
        const auto s = archetypes::select_k(x, ks, seed);
        py::dict d;
        d["best_k"] = s.best_k;
        d["silhouettes"] = s.silhouettes;
        return d;
      },
      py::arg("x"), py::arg("k_range"), py::arg("seed") = 0);

  m.def("registry", [] { return to_py(scales::to_json(scales::default_registry())); });
  m.def("score_subscales", [](const std::map<std::string, double>& items) {
    const auto p = scales::score_subscales(items, scales::default_registry());
    std::map<std::string, double> out;
    for (std::size_t j = 0; j < p.dimensions.size(); ++j) out[p.dimensions[j]] = p.scores[j];
    return out;
  });

  m.def("mock_reward_audit", &mock_reward_audit, py::arg("deltas"), py::arg("seed") = 0, py::arg("paired") = false);

  m.def(
      "emit",
      [](const py::object& table, const std::string& format, const std::string& title) {
        return report::emit(report::table_from_json(from_py(table)), report::parse_format(format), title);
      },
      py::arg("table"), py::arg("format") = "csv", py::arg("title") = "",
      "Render a {\"columns\", \"rows\"} table as csv, json or svg-heatmap.");
}
