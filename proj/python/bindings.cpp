#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bbgp/data.hpp"
#include "bbgp/errors.hpp"
#include "bbgp/training.hpp"
#include "bbgp/validation.hpp"

namespace py = pybind11;
using namespace bbgp;

namespace {

py::dict trace_record(const TraceRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["objective"] = r.objective();
  d["lml_estimate"] = r.value;
  d["bias_bound"] = r.bias_bound;
  d["iters"] = r.iterations;
  d["cg_iters"] = r.cg_iterations;
  d["lanczos_t"] = r.lanczos_steps;
  d["converged"] = r.converged;
  d["hp"] = r.hp;
  d["rmse"] = r.rmse ? py::cast(*r.rmse) : py::none();
  d["wall_ms"] = r.wall_ms;
  return d;
}

py::dict fit_result(const FitResult& r) {
  py::dict d;
  d["hp"] = r.hp;
  py::list trace;
  for (const TraceRecord& rec : r.trace) trace.append(trace_record(rec));
  d["trace"] = trace;
  d["total_iterations"] = r.total_iterations;
  d["total_cg_iterations"] = r.total_cg_iterations;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bias-bounded Krylov estimates of the GP log marginal likelihood";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Hyperparameters>(m, "Hyperparameters")
      .def(py::init([](Vector lengthscales, double signal_variance, double noise_variance, double mean) {
             Hyperparameters hp;
             hp.lengthscales = std::move(lengthscales);
             hp.signal_variance = signal_variance;
             hp.noise_variance = noise_variance;
             hp.mean = mean;
             hp.validate();
             return hp;
           }),
           py::arg("lengthscales"), py::arg("signal_variance") = 1.0, py::arg("noise_variance") = 1.0,
           py::arg("mean") = 0.0)
      .def_static("initial", &Hyperparameters::initial, py::arg("dims"))
      .def_readwrite("lengthscales", &Hyperparameters::lengthscales)
      .def_readwrite("signal_variance", &Hyperparameters::signal_variance)
      .def_readwrite("noise_variance", &Hyperparameters::noise_variance)
      .def_readwrite("mean", &Hyperparameters::mean)
      .def("__repr__", [](const Hyperparameters& hp) {
        std::ostringstream s;
        s << "Hyperparameters(lengthscales=[" << hp.lengthscales.transpose() << "], signal_variance="
          << hp.signal_variance << ", noise_variance=" << hp.noise_variance << ", mean=" << hp.mean << ")";
        return s.str();
      });

  py::class_<BBGPConfig>(m, "BBGPConfig")
      .def(py::init([](double epsilon, Index probes, Index max_krylov_iters, Index precond_rank, std::uint64_t seed,
                       std::uint64_t stream) {
             BBGPConfig c{epsilon, probes, max_krylov_iters, precond_rank, seed, stream};
             c.validate();
             return c;
           }),
           py::arg("epsilon") = 1.0, py::arg("probes") = 1, py::arg("max_krylov_iters") = 0,
           py::arg("precond_rank") = 100, py::arg("seed") = 0, py::arg("stream") = 0)
      .def_readwrite("epsilon", &BBGPConfig::epsilon)
      .def_readwrite("probes", &BBGPConfig::probes)
      .def_readwrite("max_krylov_iters", &BBGPConfig::max_krylov_iters)
      .def_readwrite("precond_rank", &BBGPConfig::precond_rank)
      .def_readwrite("seed", &BBGPConfig::seed)
      .def_readwrite("stream", &BBGPConfig::stream);

  m.def("kernel_matrix", [](const Matrix& x, const Hyperparameters& hp) { return kernel_matrix(x, hp).dense(); },
        py::arg("x"), py::arg("hp"), "K = Matern-3/2 Gram matrix plus noise on the diagonal.");
  m.def("exact_lml", &exact_lml, py::arg("x"), py::arg("y"), py::arg("hp"));
  m.def("exact_lml_grad", &exact_lml_grad, py::arg("x"), py::arg("y"), py::arg("hp"),
        "Gradient over the unconstrained coordinates [lengthscales, signal, noise, mean].");
  m.def("rademacher_probes", &rademacher_probes, py::arg("n"), py::arg("count"), py::arg("seed"),
        py::arg("stream") = 0);

  m.def(
      "estimate_lml",
      [](const Matrix& x, const Vector& y, const Hyperparameters& hp, const BBGPConfig& cfg,
         const std::optional<Vector>& warm_v) {
        const BBGPEstimate est = estimate_lml(x, y, hp, cfg, warm_v.value_or(Vector()));
        py::dict d;
        d["value"] = est.value;
        d["bias_bound"] = est.bias_bound;
        d["gradient"] = est.gradient;
        d["iterations"] = est.iterations_used;
        d["cg_iterations"] = est.cg_iterations;
        d["converged"] = est.converged;
        d["logdet_lower"] = est.logdet.lower;
        d["logdet_upper"] = est.logdet.upper;
        d["logdet_gauss"] = est.logdet.gauss_mean;
        d["quad_lower"] = est.quad.lower;
        d["quad_upper"] = est.quad.upper;
        d["lanczos_t"] = est.lanczos_steps;
        d["v"] = est.v;
        return d;
      },
      py::arg("x"), py::arg("y"), py::arg("hp"), py::arg("config") = BBGPConfig{}, py::arg("warm_v") = py::none());

  m.def(
      "fit",
      [](const Matrix& x, const Vector& y, const BBGPConfig& bbgp, Index steps, double learning_rate,
         const std::optional<Hyperparameters>& init) {
        FitConfig cfg;
        cfg.bbgp = bbgp;
        cfg.steps = steps;
        cfg.learning_rate = learning_rate;
        cfg.eval_every = 0;
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit(x, y, cfg, init.value_or(Hyperparameters::initial(x.cols())));
        }
        return fit_result(r);
      },
      py::arg("x"), py::arg("y"), py::arg("config") = BBGPConfig{}, py::arg("steps") = 500,
      py::arg("learning_rate") = 0.1, py::arg("init") = py::none());

  m.def(
      "fit_exact",
      [](const Matrix& x, const Vector& y, Index steps, double learning_rate,
         const std::optional<Hyperparameters>& init) {
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit_exact(x, y, steps, learning_rate, init.value_or(Hyperparameters::initial(x.cols())), {}, 0);
        }
        return fit_result(r);
      },
      py::arg("x"), py::arg("y"), py::arg("steps") = 500, py::arg("learning_rate") = 0.1,
      py::arg("init") = py::none());

  m.def(
      "predict_mean",
      [](const Matrix& x_train, const Vector& y_train, const Matrix& x_test, const Hyperparameters& hp, double tol) {
        return predict_mean(x_train, y_train, x_test, hp, tol).mean;
      },
      py::arg("x_train"), py::arg("y_train"), py::arg("x_test"), py::arg("hp"), py::arg("tol") = 1e-6);

  m.def(
      "synth_gp",
      [](Index n, Index dims, const Hyperparameters& hp, std::uint64_t seed) {
        const Dataset ds = synth_gp(n, dims, hp, seed);
        return py::make_tuple(ds.x, ds.y);
      },
      py::arg("n"), py::arg("dims"), py::arg("hp"), py::arg("seed") = 0, "Returns (x, y).");

  m.def(
      "validate_bounds",
      [](Index instances, Index max_n, std::uint64_t seed) {
        ValidationOptions opts;
        opts.instances = instances;
        opts.max_n = max_n;
        opts.seed = seed;
        py::list out;
        for (const CheckResult& c : validate_bounds(opts).checks) {
          py::dict d;
          d["check"] = c.name;
          d["passed"] = c.passed;
          d["failed"] = c.failed;
          d["worst"] = c.worst;
          out.append(d);
        }
        return out;
      },
      py::arg("instances") = 25, py::arg("max_n") = 16, py::arg("seed") = 0);
}
