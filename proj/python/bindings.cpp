#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "affmart/conservativeness.hpp"
#include "affmart/martingale.hpp"
#include "affmart/montecarlo.hpp"
#include "affmart/riccati.hpp"
#include "affmart/spec_io.hpp"

namespace py = pybind11;
using namespace affmart;

namespace {

// Reports cross the boundary as JSON text; the Python package decodes them.
class Model {
public:
    explicit Model(AffineParams p) : params_(std::move(p)) {}

    std::size_t m() const { return params_.m; }
    std::size_t n() const { return params_.n; }

    std::string to_json() const { return params_to_json(params_).dump(); }

    std::string violations() const {
        nlohmann::json out = nlohmann::json::array();
        for (const Violation& v : validate_admissibility(params_))
            out.push_back({{"rule", v.rule}, {"message", v.message}, {"inconclusive", v.inconclusive}});
        return out.dump();
    }

    cplx R(std::size_t j, const std::vector<cplx>& u) const {
        return eval_R(context(), j, std::span<const cplx>(u));
    }

    py::tuple flow(const std::vector<cplx>& u, double T, double tol) const {
        const RContext& ctx = context();
        FlowResult f;
        {
            py::gil_scoped_release release;
            f = solve_flow(ctx, std::span<const cplx>(u), T, tol);
        }
        return py::make_tuple(f.times, f.psi0, f.psi);
    }

    std::string conservativeness() const {
        py::gil_scoped_release release;
        return affmart::to_json(conservativeness_verdict(params_)).dump();
    }

    std::string martingale(const std::string& form, std::size_t component, double p,
                           const std::vector<double>& P) const {
        MartingaleForm f;
        if (form == "stochastic_exp")
            f = MartingaleForm::stochastic_exp(component);
        else if (form == "exp")
            f = MartingaleForm::ordinary_exp(component);
        else if (form == "affine")
            f = MartingaleForm::affine_functional(p, P);
        else
            throw std::invalid_argument("unknown form '" + form + "'");
        py::gil_scoped_release release;
        return affmart::to_json(martingale_verdict(params_, f)).dump();
    }

    Model truncate(std::size_t atoms) const { return Model(truncate_model(params_, atoms)); }

    py::dict stoch_exp_mean(std::size_t i, const std::vector<double>& x0, double T, std::size_t steps,
                            std::size_t paths, std::uint64_t seed, std::size_t threads) const {
        SimConfig c;
        c.x0 = x0;
        c.T = T;
        c.steps_per_unit = steps;
        c.paths = paths;
        c.seed = seed;
        c.threads = threads;
        SampleStats s;
        {
            py::gil_scoped_release release;
            s = estimate_stoch_exp_mean(params_, i, c);
        }
        py::dict d;
        d["mean"] = s.mean;
        d["std_error"] = s.std_error;
        d["median_of_means"] = s.median_of_means;
        d["count"] = s.count;
        return d;
    }

private:
    const RContext& context() const {
        if (!ctx_) ctx_ = std::make_shared<RContext>(params_);
        return *ctx_;
    }

    AffineParams params_;
    mutable std::shared_ptr<RContext> ctx_;
};

}  // namespace

PYBIND11_MODULE(_affmart, mod) {
    mod.doc() = "Affine process conservativeness and martingale checks";

    py::register_exception<SpecError>(mod, "SpecError", PyExc_ValueError);
    py::register_exception<RiccatiError>(mod, "RiccatiError", PyExc_RuntimeError);
    py::register_exception<SimulationError>(mod, "SimulationError", PyExc_RuntimeError);

    py::class_<Model>(mod, "Model")
        .def_static("load", [](const std::string& path) { return Model(load_spec(path)); })
        .def_static("parse", [](const std::string& text) { return Model(parse_spec(text)); })
        .def_property_readonly("m", &Model::m)
        .def_property_readonly("n", &Model::n)
        .def("to_json", &Model::to_json)
        .def("violations", &Model::violations)
        .def("R", &Model::R, py::arg("j"), py::arg("u"))
        .def("flow", &Model::flow, py::arg("u"), py::arg("T"), py::arg("tol") = 1e-10)
        .def("conservativeness", &Model::conservativeness)
        .def("martingale", &Model::martingale, py::arg("form") = "stochastic_exp",
             py::arg("component") = 1, py::arg("p") = 0.0, py::arg("P") = std::vector<double>{})
        .def("truncate", &Model::truncate, py::arg("atoms"))
        .def("stoch_exp_mean", &Model::stoch_exp_mean, py::arg("i"), py::arg("x0"), py::arg("T") = 1.0,
             py::arg("steps") = 1000, py::arg("paths") = 10000, py::arg("seed") = 20240601,
             py::arg("threads") = 0);
}
