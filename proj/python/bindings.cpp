#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "largebatch/binary16.hpp"
#include "largebatch/collective.hpp"
#include "largebatch/commands.hpp"
#include "largebatch/config.hpp"
#include "largebatch/error.hpp"
#include "largebatch/lr_schedule.hpp"
#include "largebatch/optimizer.hpp"
#include "largebatch/syncbn.hpp"
#include "largebatch/trainer.hpp"

namespace py = pybind11;
using namespace largebatch;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    if (shape.empty()) shape = {1};
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Config config_from(const py::dict& settings) {
    Config c;
    for (const auto& [k, v] : settings) apply_setting(c, py::str(k), py::str(v));
    return c;
}

py::dict iteration_dict(const IterationRecord& r) {
    py::dict d;
    d["iteration"] = r.iteration;
    d["epoch"] = r.epoch;
    d["lr"] = r.lr;
    d["alpha_sgd"] = r.alpha_sgd;
    d["alpha_rmsprop"] = r.alpha_rmsprop;
    d["train_loss"] = r.train_loss;
    d["comm_seconds_model"] = r.comm_seconds_model;
    return d;
}

}  // namespace

PYBIND11_MODULE(_largebatch, m) {
    m.doc() = "Large-minibatch training recipe simulator";

    static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error, e.what());
        }
    });

    m.def("to_binary16", &to_binary16, py::arg("x"));
    m.def("from_binary16", &from_binary16, py::arg("bits"));
    m.def("round_to_binary16", &round_to_binary16, py::arg("x"));

    py::class_<OptimizerHyper>(m, "OptimizerHyper")
        .def(py::init<>())
        .def_readwrite("mu1", &OptimizerHyper::mu1)
        .def_readwrite("mu2", &OptimizerHyper::mu2)
        .def_readwrite("epsilon", &OptimizerHyper::epsilon)
        .def_readwrite("eta_rmsprop", &OptimizerHyper::eta_rmsprop)
        .def_readwrite("beta_center", &OptimizerHyper::beta_center)
        .def_readwrite("beta_period", &OptimizerHyper::beta_period);

    m.def("alpha_sgd_at", &alpha_sgd_at, py::arg("epoch"), py::arg("beta_center") = 10.0,
          py::arg("beta_period") = 5.0);
    m.def(
        "blend_at",
        [](double epoch, double eta_sgd, const OptimizerHyper& h) {
            const auto b = blend_at(epoch, eta_sgd, h);
            return py::make_tuple(b.alpha_sgd, b.alpha_rmsprop, b.eta);
        },
        py::arg("epoch"), py::arg("eta_sgd"), py::arg("hyper") = OptimizerHyper{},
        "(alpha_sgd, alpha_rmsprop, eta) at a fractional epoch");
    m.def(
        "optimizer_step",
        [](const Array& theta, const Array& g, const Array& m_buf, const Array& delta, double alpha_sgd,
           double alpha_rmsprop, double eta, const OptimizerHyper& h) {
            OptimizerState state{to_tensor(m_buf), to_tensor(delta), 0};
            const auto r = step(to_tensor(theta), to_tensor(g), state, {alpha_sgd, alpha_rmsprop, eta}, h);
            return py::make_tuple(to_array(r.theta), to_array(r.state.m), to_array(r.state.delta));
        },
        py::arg("theta"), py::arg("g"), py::arg("m"), py::arg("delta"), py::arg("alpha_sgd"),
        py::arg("alpha_rmsprop"), py::arg("eta"), py::arg("hyper") = OptimizerHyper{},
        "One hybrid update; returns (theta, m, delta)");

    m.def(
        "eta_base", [](std::size_t n, std::size_t b_local) { return eta_base(ClusterShape(n, b_local)); },
        py::arg("workers"), py::arg("b_local"));
    m.def(
        "lr_at",
        [](const std::string& schedule, double base, double epoch, double total_epochs) {
            return lr_at(make_schedule(parse_schedule_kind(schedule), base, total_epochs), epoch);
        },
        py::arg("schedule"), py::arg("eta_base"), py::arg("epoch"), py::arg("total_epochs") = kReferenceEpochs);

    m.def(
        "all_reduce",
        [](const std::vector<Array>& payloads, const std::string& op, const std::string& precision) {
            std::vector<Tensor> ts;
            for (const auto& p : payloads) ts.push_back(to_tensor(p));
            AllReduceStats stats;
            const Tensor r = all_reduce(ts, op == "average" ? ReduceOp::average : ReduceOp::sum,
                                        parse_comm_precision(precision), &stats);
            return py::make_tuple(to_array(r), stats.saturations);
        },
        py::arg("payloads"), py::arg("op") = "sum", py::arg("precision") = "full64",
        "Returns (result, saturation count)");
    m.def(
        "ring_time",
        [](std::size_t bytes, std::size_t workers, double alpha, double beta) {
            return ring_time(bytes, workers, CostModel{alpha, beta, 0.0});
        },
        py::arg("payload_bytes"), py::arg("workers"), py::arg("alpha_latency"), py::arg("beta_bandwidth"));
    m.def(
        "scaling_efficiency",
        [](std::size_t workers, double alpha, double beta, double gamma, std::size_t bytes) {
            return scaling_efficiency(workers, CostModel{alpha, beta, gamma}, bytes);
        },
        py::arg("workers"), py::arg("alpha_latency"), py::arg("beta_bandwidth"), py::arg("gamma_compute"),
        py::arg("payload_bytes"));
    m.def(
        "fit_cost_model",
        [](const std::vector<std::size_t>& workers, const std::vector<double>& seconds, std::size_t bytes) {
            if (workers.size() != seconds.size()) throw ShapeError("fit_cost_model: workers and seconds differ in length");
            std::vector<IterationMeasurement> pts;
            for (std::size_t i = 0; i < workers.size(); ++i) pts.push_back({workers[i], seconds[i]});
            const auto fit = fit_cost_model(pts, bytes);
            return py::make_tuple(fit.model.alpha_latency, fit.model.beta_bandwidth, fit.model.gamma_compute,
                                  fit.residuals);
        },
        py::arg("workers"), py::arg("seconds"), py::arg("payload_bytes"),
        "Returns (alpha_latency, beta_bandwidth, gamma_compute, residuals)");
    m.def(
        "simulate_allreduce",
        [](std::size_t workers, std::size_t elements, const std::string& precision, std::uint64_t seed) {
            const auto t = simulate_allreduce(workers, elements, parse_comm_precision(precision), seed, Config{}.cost);
            return py::make_tuple(t.rel_l2_error, t.ring_seconds_model);
        },
        py::arg("workers"), py::arg("elements"), py::arg("precision") = "half16", py::arg("seed") = 1);

    m.def(
        "bn_sync",
        [](const std::vector<Array>& means, const std::vector<Array>& vars, const std::string& combine) {
            if (means.size() != vars.size()) throw ShapeError("bn_sync: one variance per mean");
            std::vector<BnLayerState> layers;
            for (std::size_t w = 0; w < means.size(); ++w) {
                BnLayerState s(static_cast<std::size_t>(means[w].size()));
                s.last_mean = to_tensor(means[w]);
                s.last_var = to_tensor(vars[w]);
                layers.push_back(std::move(s));
            }
            std::vector<BnLayerState*> ptrs;
            for (auto& l : layers) ptrs.push_back(&l);
            sync_statistics(ptrs, CommPrecision::full64, parse_variance_combine(combine));
            return py::make_tuple(to_array(*layers[0].synced_mean), to_array(*layers[0].synced_var));
        },
        py::arg("means"), py::arg("vars"), py::arg("combine") = "simple",
        "Synced (mean, var) over workers in full precision");

    m.def(
        "default_config", [] { return config_entries(Config{}); }, "Config keys with their default values");
    m.def(
        "run",
        [](const py::dict& settings) {
            const Config c = config_from(settings);
            c.validate();
            RunResult r;
            {
                py::gil_scoped_release release;
                r = run(c);
            }
            py::list iters, epochs;
            for (const auto& it : r.log.iterations) iters.append(iteration_dict(it));
            for (const auto& e : r.log.epochs) {
                py::dict d;
                d["epoch"] = e.epoch;
                d["val_loss"] = e.val_loss;
                d["val_accuracy"] = e.val_accuracy;
                epochs.append(d);
            }
            py::dict out;
            out["iterations"] = iters;
            out["epochs"] = epochs;
            out["saturations"] = r.log.comm.saturations;
            return out;
        },
        py::arg("settings") = py::dict(),
        "Trains with config keys given as a dict; returns the per-iteration and per-epoch logs");
}
