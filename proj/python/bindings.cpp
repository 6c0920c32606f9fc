#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/numpy.h>

#include <random>

#include "liquid/cell_io.hpp"
#include "liquid/cells.hpp"
#include "liquid/config.hpp"
#include "liquid/errors.hpp"
#include "liquid/metrics.hpp"
#include "liquid/simulator.hpp"
#include "liquid/training.hpp"

namespace py = pybind11;
using namespace liquid;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array frame_to_array(const Frame& f) {
    Array out({f.height, f.width});
    std::copy(f.pixels.begin(), f.pixels.end(), out.mutable_data());
    return out;
}

Frame array_to_frame(const Array& a) {
    if (a.ndim() != 2) {
        throw DimensionError("expected a 2-d image");
    }
    Frame f(1, a.shape(0), a.shape(1));
    std::copy(a.data(), a.data() + a.size(), f.pixels.begin());
    return f;
}

py::dict arrays_of(const CellParameters& p) {
    py::dict d;
    p.visit([&](std::string_view name, const std::vector<double>& v, bool) {
        d[py::str(std::string(name))] = py::array_t<double>(v.size(), v.data());
    });
    return d;
}

HiddenState make_state(const CellParameters& p, const std::vector<double>& h,
                       const std::vector<double>& aux) {
    HiddenState s = zero_state(p);
    if (h.size() != s.h.size() || (!aux.empty() && aux.size() != s.aux.size())) {
        throw DimensionError("state has the wrong size");
    }
    s.h = h;
    if (!aux.empty()) {
        s.aux = aux;
    }
    return s;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Liquid-capacitance recurrent cells, a lane-keeping simulator and metrics";

    auto base = py::register_exception<Error>(m, "LiquidError", PyExc_RuntimeError);
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<UnsupportedKindError>(m, "UnsupportedKindError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::enum_<CellKind>(m, "CellKind")
        .value("LSTM", CellKind::LSTM)
        .value("GRU", CellKind::GRU)
        .value("MGU", CellKind::MGU)
        .value("CTRNN", CellKind::CTRNN)
        .value("LTC", CellKind::LTC)
        .value("LC_NA", CellKind::LC_NA)
        .value("LC_SA", CellKind::LC_SA)
        .value("LRC_NA", CellKind::LRC_NA)
        .value("LRC_SA", CellKind::LRC_SA);
    m.def("parse_cell_kind", [](const std::string& s) { return parse_cell_kind(s); });
    m.def("all_cell_kinds", [] { return std::vector<CellKind>(kAllCellKinds.begin(), kAllCellKinds.end()); });

    py::class_<CellParameters>(m, "CellParameters")
        .def_readonly("kind", &CellParameters::kind)
        .def_readonly("m", &CellParameters::m)
        .def_readonly("n", &CellParameters::n)
        .def_readonly("dt", &CellParameters::dt)
        .def("arrays", &arrays_of, "Copies of every learnable array, keyed by name")
        .def("to_json", [](const CellParameters& p) { return cell_to_json(p); })
        .def_static("from_json", [](const std::string& s) { return cell_from_json(s); });

    m.def("init_parameters",
          [](CellKind kind, std::size_t mm, std::size_t n, std::uint64_t seed, double dt) {
              std::mt19937_64 rng(seed);
              return init_parameters(kind, mm, n, rng, dt);
          },
          py::arg("kind"), py::arg("m"), py::arg("n"), py::arg("seed") = 0, py::arg("dt") = 1.0);
    m.def("zero_parameters", &zero_parameters, py::arg("kind"), py::arg("m"), py::arg("n"),
          py::arg("dt") = 1.0);

    m.def("elastance",
          [](const CellParameters& p, std::size_t i, const std::vector<double>& y) {
              if (i >= p.m || y.size() != p.sources()) {
                  throw DimensionError("elastance: neuron index or input size out of range");
              }
              return elastance(p, i, y);
          },
          py::arg("params"), py::arg("neuron"), py::arg("y"));
    m.def("step",
          [](const CellParameters& p, const std::vector<double>& h, const std::vector<double>& x,
             const std::vector<double>& aux, bool unit_elastance) {
              const HiddenState next = advance(p, make_state(p, h, aux), x, {unit_elastance});
              return py::make_tuple(next.h, next.aux);
          },
          py::arg("params"), py::arg("h"), py::arg("x"), py::arg("aux") = std::vector<double>{},
          py::arg("unit_elastance") = false,
          "One step; returns (h, aux). aux is the LSTM memory cell, empty otherwise");
    m.def("ode_rhs",
          [](const CellParameters& p, const std::vector<double>& h, const std::vector<double>& x) {
              return ode_rhs(p, make_state(p, h, {}), x);
          },
          py::arg("params"), py::arg("h"), py::arg("x"));
    m.def("unroll",
          [](const CellParameters& p, const std::vector<double>& h0,
             const std::vector<std::vector<double>>& inputs) {
              const auto states = unroll(p, make_state(p, h0, {}), inputs);
              Array out({states.size(), p.m});
              for (std::size_t t = 0; t < states.size(); ++t) {
                  std::copy(states[t].h.begin(), states[t].h.end(), out.mutable_data() + t * p.m);
              }
              return out;
          },
          py::arg("params"), py::arg("h0"), py::arg("inputs"), "Hidden states, shape (T, m)");

    m.def("gradient_check",
          [](CellKind kind, std::size_t instances, std::uint64_t seed) {
              GradcheckOptions o;
              o.instances = instances;
              o.seed = seed;
              const GradcheckResult r = gradient_check(kind, o);
              py::dict d;
              d["passed"] = r.passed;
              d["max_error"] = r.max_error;
              py::dict worst;
              for (std::size_t i = 0; i < r.names.size(); ++i) worst[py::str(r.names[i])] = r.worst[i];
              d["worst"] = worst;
              return d;
          },
          py::arg("kind"), py::arg("instances") = 10, py::arg("seed") = 0);

    m.def("abs_correlation",
          [](const std::vector<double>& x, const std::vector<double>& y) {
              return abs_correlation(x, y).value;
          });
    m.def("ssim", [](const Array& a, const Array& b) { return ssim(array_to_frame(a), array_to_frame(b)); });

    py::enum_<Season>(m, "Season").value("summer", Season::Summer).value("winter", Season::Winter);

    m.def("road_curvature",
          [](std::uint64_t seed, double length, double smoothness) {
              RoadOptions o;
              o.length = length;
              o.smoothness = smoothness;
              return generate_road(seed, o).curvature;
          },
          py::arg("seed"), py::arg("length") = 1000.0, py::arg("smoothness") = 120.0);
    m.def("expert_drive",
          [](std::uint64_t seed, double length, double perturbation) {
              RoadOptions o;
              o.length = length;
              const RoadProfile road = generate_road(seed, o);
              ExpertRolloutOptions eo;
              eo.perturbation = perturbation;
              eo.perturbation_time_constant = 0.5;
              eo.perturbation_seed = seed;
              const Rollout r = expert_rollout(road, eo);
              py::dict d;
              std::vector<double> s, lateral;
              for (const VehicleState& st : r.states) {
                  s.push_back(st.s);
                  lateral.push_back(st.d);
              }
              d["s"] = s;
              d["d"] = lateral;
              d["expert"] = r.expert;
              d["crashed"] = r.crashed;
              return d;
          },
          py::arg("seed"), py::arg("length") = 1000.0, py::arg("perturbation") = 0.0);
    m.def("render",
          [](std::uint64_t seed, double length, double s, double d, double psi, Season season) {
              RoadOptions o;
              o.length = length;
              const RoadProfile road = generate_road(seed, o, season);
              return frame_to_array(render_camera(road, VehicleState{s, d, psi, 10.0}, season,
                                                  frame_seed(seed, season, 0)));
          },
          py::arg("seed"), py::arg("length") = 1000.0, py::arg("s") = 0.0, py::arg("d") = 0.0,
          py::arg("psi") = 0.0, py::arg("season") = Season::Summer, "48x160 camera frame");

    m.def("config_hash",
          [](const std::string& path, const std::vector<std::string>& overrides) {
              return config_hash(load_config(path, overrides));
          },
          py::arg("path"), py::arg("overrides") = std::vector<std::string>{});
    m.def("schema_description", &schema_description);
}
