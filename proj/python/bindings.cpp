#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "jacprobe/certify.hpp"
#include "jacprobe/cli.hpp"
#include "jacprobe/density.hpp"
#include "jacprobe/error.hpp"
#include "jacprobe/plmap.hpp"
#include "jacprobe/serialize.hpp"
#include "jacprobe/solver.hpp"

namespace py = pybind11;
using namespace jacprobe;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using RectTuple = std::tuple<double, double, double, double>;

Rect to_rect(const RectTuple& r) {
    return {std::get<0>(r), std::get<1>(r), std::get<2>(r), std::get<3>(r)};
}

RectTuple from_rect(const Rect& r) { return {r.x0(), r.y0(), r.x1(), r.y1()}; }

DensityField density_from_array(const Array& values, const RectTuple& rect,
                                std::optional<std::pair<double, double>> range) {
    if (values.ndim() != 2) throw Error("density values must be a 2-d array (rows, columns)");
    const int ny = static_cast<int>(values.shape(0)), nx = static_cast<int>(values.shape(1));
    std::vector<double> v(values.data(), values.data() + values.size());
    std::optional<ValueRange> declared;
    if (range) declared = ValueRange{range->first, range->second};
    return {to_rect(rect), nx, ny, std::move(v), declared};
}

Array density_values(const DensityField& f) {
    Array out({f.ny(), f.nx()});
    std::copy(f.values().begin(), f.values().end(), out.mutable_data());
    return out;
}

Array map_vertices(const PiecewiseAffineMap& m) {
    Array out({m.ny() + 1, m.nx() + 1, 2});
    double* d = out.mutable_data();
    for (const auto& p : m.vertices()) {
        *d++ = p.x();
        *d++ = p.y();
    }
    return out;
}

PiecewiseAffineMap map_from_array(const Array& v, const RectTuple& domain) {
    if (v.ndim() != 3 || v.shape(2) != 2)
        throw Error("vertices must have shape (ny+1, nx+1, 2)");
    const int ny = static_cast<int>(v.shape(0)) - 1, nx = static_cast<int>(v.shape(1)) - 1;
    std::vector<Point> pts;
    for (py::ssize_t k = 0; k < v.shape(0) * v.shape(1); ++k)
        pts.emplace_back(v.data()[2 * k], v.data()[2 * k + 1]);
    return {nx, ny, std::move(pts), to_rect(domain)};
}

SegmentSet to_segments(const std::vector<std::pair<std::pair<double, double>, std::pair<double, double>>>& s) {
    std::vector<Segment> out;
    for (const auto& [p, q] : s) out.emplace_back(Point{p.first, p.second}, Point{q.first, q.second});
    return SegmentSet(std::move(out));
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Checkerboard densities, piecewise-affine maps and the Jacobian solver";

    py::register_exception<Error>(m, "Error", PyExc_ValueError);

    py::class_<DensityField>(m, "DensityField")
        .def(py::init(&density_from_array), py::arg("values"),
             py::arg("rect") = RectTuple{0.0, 0.0, 1.0, 1.0}, py::arg("range") = py::none())
        .def_property_readonly("nx", &DensityField::nx)
        .def_property_readonly("ny", &DensityField::ny)
        .def_property_readonly("rect", [](const DensityField& f) { return from_rect(f.rect()); })
        .def_property_readonly("range", [](const DensityField& f) {
            return std::make_pair(f.declared_range().lo, f.declared_range().hi);
        })
        .def_property_readonly("values", &density_values)
        .def("integral", [](const DensityField& f) { return integrate(f, f.grid_mask(true)); })
        .def("to_json", [](const DensityField& f) { return to_json(f).dump(); })
        .def_static("from_json", [](const std::string& s) { return density_from_json(Json::parse(s)); });

    m.def("checkerboard", [](int cells, double c, int nx, int ny, bool embedded) {
        const CheckerboardSpec spec(cells, c);
        return embedded ? embedded_checkerboard(spec, nx, ny) : make_checkerboard(spec, nx, ny);
    }, py::arg("cells"), py::arg("c"), py::arg("nx"), py::arg("ny"), py::arg("embedded") = false);

    py::class_<PiecewiseAffineMap>(m, "PiecewiseAffineMap")
        .def(py::init(&map_from_array), py::arg("vertices"),
             py::arg("domain") = RectTuple{0.0, 0.0, 1.0, 1.0})
        .def_static("identity", [](int nx, int ny) { return identity_map(nx, ny); })
        .def_property_readonly("nx", &PiecewiseAffineMap::nx)
        .def_property_readonly("ny", &PiecewiseAffineMap::ny)
        .def_property_readonly("vertices", &map_vertices)
        .def("evaluate", [](const PiecewiseAffineMap& f, double x, double y) {
            const Point p = f.evaluate({x, y});
            return std::make_pair(p.x(), p.y());
        })
        .def("jacobians", &triangle_jacobians)
        .def("bilipschitz_constant", &bilipschitz_constant)
        .def("to_json", [](const PiecewiseAffineMap& f) { return to_json(f).dump(); });

    m.def("mismatch_area", &mismatch_area, py::arg("map"), py::arg("rho"), py::arg("tau"));

    m.def("realize_jacobian",
          [](const DensityField& rho, double L, double tau, int max_iterations, int restarts,
             std::uint64_t seed, std::optional<PiecewiseAffineMap> initial) {
              SolverConfig c;
              c.lipschitz_bound = L;
              c.tau = tau;
              c.max_iterations = max_iterations;
              c.restarts = restarts;
              c.seed = seed;
              SolveReport r = [&] {
                  py::gil_scoped_release release;
                  return realize_jacobian(rho, c,
                                          initial ? *initial : identity_map(rho.nx(), rho.ny(), rho.rect()));
              }();
              py::dict d;
              d["map"] = r.map;
              d["mismatch_area"] = r.mismatch_area;
              d["achieved_L"] = r.achieved_lipschitz;
              d["converged"] = r.converged;
              d["iterations"] = r.iterations;
              d["trace"] = r.trace;
              d["evidence"] = to_string(r.evidence);
              d["stop_reason"] = r.stop_reason;
              return d;
          },
          py::arg("rho"), py::arg("L") = 2.0, py::arg("tau") = 0.05,
          py::arg("max_iterations") = 2000, py::arg("restarts") = 0, py::arg("seed") = 0,
          py::arg("initial") = py::none());

    m.def("stretch_ratios", [](const PiecewiseAffineMap& f, const std::vector<std::pair<std::pair<double, double>, std::pair<double, double>>>& segments) {
        std::vector<double> out;
        for (const auto& p : stretch_pairs(f, to_segments(segments)).pairs) out.push_back(p.ratio);
        return out;
    }, py::arg("map"), py::arg("segments"));

    m.def("run_cli", [](std::vector<std::string> args) {
        args.insert(args.begin(), "jacprobe");
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return std::make_tuple(code, out.str(), err.str());
    }, py::arg("args"));
}
