// Python module _topimpute: estimators, cell-level selection and the pipeline.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "topimpute/cqr.hpp"
#include "topimpute/methods.hpp"
#include "topimpute/pipeline.hpp"
#include "topimpute/synthgen.hpp"
#include "topimpute/tobit.hpp"

namespace py = pybind11;
using namespace topimpute;

namespace {

std::vector<CensorState> states_of(const std::vector<bool>& censored) {
  std::vector<CensorState> s(censored.size());
  for (std::size_t i = 0; i < censored.size(); ++i) s[i] = censored[i] ? CensorState::at_upper : CensorState::uncensored;
  return s;
}

TobitSpec spec_of(const Eigen::MatrixXd& X, double limit) {
  TobitSpec spec;
  spec.design = X;
  spec.upper = Eigen::VectorXd::Constant(X.rows(), limit);
  return spec;
}

void check_rows(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<bool>& censored) {
  if (y.size() != X.rows() || static_cast<Eigen::Index>(censored.size()) != X.rows())
    throw std::invalid_argument("X, y and censored must have the same number of rows");
}

std::vector<Eigen::Index> censored_rows(const std::vector<bool>& censored) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < censored.size(); ++i)
    if (censored[i]) rows.push_back(static_cast<Eigen::Index>(i));
  return rows;
}

}  // namespace

PYBIND11_MODULE(_topimpute, m) {
  m.doc() = "Imputation of right-censored wages";
  m.attr("__version__") = TOPIMPUTE_VERSION;

  py::register_exception<EstimationError>(m, "EstimationError", PyExc_RuntimeError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("coefficients", &FitResult::coefficients)
      .def_readonly("coef_cov", &FitResult::coef_cov)
      .def_readonly("loglik", &FitResult::loglik)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("iterations", &FitResult::iterations)
      .def_property_readonly("sigma",
                             [](const FitResult& f) -> std::optional<double> {
                               if (!f.resid_var) return std::nullopt;
                               return std::sqrt(*f.resid_var);
                             })
      .def_property_readonly("std_errors", &FitResult::std_errors);

  m.def(
      "fit_tobit",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<bool>& censored, double limit,
         std::optional<double> lower_limit) {
        check_rows(X, y, censored);
        TobitSpec spec = spec_of(X, limit);
        std::vector<CensorState> state = states_of(censored);
        if (!lower_limit) return fit_tobit(spec, y, state);
        const LowerCensoring lc = apply_lower_limit(y, state, *lower_limit);
        spec.lower = Eigen::VectorXd::Constant(X.rows(), *lower_limit);
        return fit_tobit(spec, lc.y, lc.state);
      },
      py::arg("X"), py::arg("y"), py::arg("censored"), py::arg("limit"), py::arg("lower_limit") = py::none(),
      "Tobit fit, right-censored at `limit` and optionally left-censored at `lower_limit`.");

  m.def(
      "impute_tobit",
      [](const FitResult& fit, const Eigen::MatrixXd& X, const std::vector<bool>& censored, double limit,
         std::uint64_t seed) {
        Rng rng(seed);
        const auto rows = censored_rows(censored);
        return impute_tobit(fit, X, Eigen::VectorXd::Constant(X.rows(), limit), rows, rng);
      },
      py::arg("fit"), py::arg("X"), py::arg("censored"), py::arg("limit"), py::arg("seed") = 1,
      "Truncated-normal draws above the limit for the censored rows.");

  m.def(
      "cqr",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<bool>& censored, double limit,
         double tau) {
        check_rows(X, y, censored);
        return cqr_three_step(spec_of(X, limit), y, states_of(censored), tau);
      },
      py::arg("X"), py::arg("y"), py::arg("censored"), py::arg("limit"), py::arg("tau"),
      "Three-step censored quantile regression at one quantile.");

  m.def(
      "coefficient_profile",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<bool>& censored, double limit,
         bool extrapolate) {
        check_rows(X, y, censored);
        QuantileProfile p = coefficient_profile(spec_of(X, limit), y, states_of(censored), default_quantile_grid());
        if (extrapolate) p = extrapolate_profile(p);
        py::dict d;
        d["grid"] = p.grid;
        d["coefficients"] = p.coefficients;
        d["feasible"] = p.feasible;
        d["q_c"] = p.q_c();
        return d;
      },
      py::arg("X"), py::arg("y"), py::arg("censored"), py::arg("limit"), py::arg("extrapolate") = false);

  m.def(
      "sad",
      [](const std::vector<double>& values, double limit, double bandwidth, double lower, double upper, double step) {
        return sad(values, limit, SadWindow{lower, upper, step}, bandwidth);
      },
      py::arg("values"), py::arg("limit"), py::arg("bandwidth"), py::arg("lower") = 0.99, py::arg("upper") = 1.01,
      py::arg("step") = 0.001, "Sum of absolute second differences of the density around the limit.");
  m.def("kde", [](const std::vector<double>& v, const std::vector<double>& g, double h) { return kde(v, g, h); },
        py::arg("values"), py::arg("grid"), py::arg("bandwidth"));
  m.def("silverman_bandwidth", [](const std::vector<double>& v) { return silverman_bandwidth(v); });

  m.def(
      "impute_cell",
      [](const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<bool>& censored, double limit,
         const std::vector<std::string>& methods, std::uint64_t seed) {
        check_rows(X, y, censored);
        CellMethodOptions opts;
        if (!methods.empty()) {
          opts.methods.clear();
          for (const auto& s : methods) opts.methods.push_back(parse_method_spec(s));
        }
        const std::vector<CensorState> state = states_of(censored);
        const CellOutcome o = run_cell_methods(spec_of(X, limit), y, state, opts, seed, "cell");
        py::dict scores, imputed, errors;
        for (const auto& [meth, out] : o.methods) {
          const std::string name = method_name(meth);
          if (out.ok) {
            const Eigen::VectorXd c = o.completed(y, meth);
            imputed[py::str(name)] = std::vector<double>(c.data(), c.data() + c.size());
          } else {
            errors[py::str(name)] = out.error;
          }
          if (o.selection) {
            const auto it = o.selection->scores.find(meth);
            if (it != o.selection->scores.end()) scores[py::str(name)] = it->second;
          }
        }
        py::dict d;
        d["chosen"] = o.selection ? py::object(py::str(method_name(o.selection->chosen))) : py::object(py::none());
        d["scores"] = scores;
        d["completed"] = imputed;
        d["errors"] = errors;
        d["bandwidth"] = o.bandwidth;
        return d;
      },
      py::arg("X"), py::arg("y"), py::arg("censored"), py::arg("limit"), py::arg("methods") = std::vector<std::string>{},
      py::arg("seed") = 1, "Runs every method on one cell and selects by SAD.");

  m.def(
      "generate_cell",
      [](const std::string& regime, std::size_t n, const Eigen::VectorXd& beta, std::optional<Eigen::VectorXd> gamma,
         double sigma, double share, std::uint64_t seed) {
        CellSynthConfig c;
        c.regime = parse_regime(regime);
        c.n = n;
        c.beta = beta;
        if (gamma) c.gamma = *gamma;
        c.sigma = sigma;
        c.target_share = share;
        c.seed = seed;
        const CellSample s = generate_cell(c);
        std::vector<bool> cens(s.state.size());
        for (std::size_t i = 0; i < cens.size(); ++i) cens[i] = s.state[i] == CensorState::at_upper;
        py::dict d;
        d["X"] = s.spec.design;
        d["y"] = s.y;
        d["truth"] = s.truth;
        d["censored"] = cens;
        d["limit"] = s.limit;
        return d;
      },
      py::arg("regime") = "tobit", py::arg("n") = 10000, py::arg("beta") = Eigen::Vector3d(4.5, 0.5, 0.3),
      py::arg("gamma") = py::none(), py::arg("sigma") = 0.4, py::arg("share") = 0.3, py::arg("seed") = 1);

  m.def(
      "run",
      [](const std::string& command, const std::filesystem::path& config) {
        const PipelineConfig c = PipelineConfig::load(config);
        py::gil_scoped_release release;
        if (command == "impute") return run_impute(c);
        if (command == "evaluate") return run_evaluate(c);
        if (command == "densities") return run_densities(c);
        if (command == "profile") return run_profile(c);
        throw ConfigError("unknown command '" + command + "'");
      },
      py::arg("command"), py::arg("config"), "Runs a pipeline command; returns 0, or 2 when some cell failed.");
}
