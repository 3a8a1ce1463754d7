#include "jacprobe/serialize.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jacprobe/error.hpp"

namespace jacprobe {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

const Json& field(const Json& j, const std::string& name) {
    if (!j.is_object()) throw FormatError("expected a JSON object holding '" + name + "'");
    auto it = j.find(name);
    if (it == j.end()) throw FormatError("missing field '" + name + "'");
    return *it;
}

int int_field(const Json& j, const std::string& name) {
    const Json& v = field(j, name);
    if (!v.is_number_integer()) throw FormatError("field '" + name + "' must be an integer");
    return v.get<int>();
}

double number(const Json& v, const std::string& name) {
    if (!v.is_number()) throw FormatError("field '" + name + "' must be a number");
    return v.get<double>();
}

} // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (std::size_t k = 0; k < bytes.size(); k += 3) {
        const std::uint32_t b0 = bytes[k];
        const std::uint32_t b1 = k + 1 < bytes.size() ? bytes[k + 1] : 0;
        const std::uint32_t b2 = k + 2 < bytes.size() ? bytes[k + 2] : 0;
        const std::uint32_t w = (b0 << 16) | (b1 << 8) | b2;
        out += kAlphabet[(w >> 18) & 63];
        out += kAlphabet[(w >> 12) & 63];
        out += k + 1 < bytes.size() ? kAlphabet[(w >> 6) & 63] : '=';
        out += k + 2 < bytes.size() ? kAlphabet[w & 63] : '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    std::array<int, 256> table;
    table.fill(-1);
    for (int k = 0; k < 64; ++k) table[static_cast<unsigned char>(kAlphabet[k])] = k;
    if (text.size() % 4 != 0) throw FormatError("field 'bits' is not valid base64");
    std::vector<std::uint8_t> out;
    for (std::size_t k = 0; k < text.size(); k += 4) {
        std::uint32_t w = 0;
        int pad = 0;
        for (int m = 0; m < 4; ++m) {
            const char c = text[k + m];
            int v = 0;
            if (c == '=' && k + 4 == text.size() && m >= 2) {
                ++pad;
            } else {
                if (pad > 0) throw FormatError("field 'bits' is not valid base64");
                v = table[static_cast<unsigned char>(c)];
                if (v < 0) throw FormatError("field 'bits' is not valid base64");
            }
            w = (w << 6) | static_cast<std::uint32_t>(v);
        }
        out.push_back(static_cast<std::uint8_t>(w >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((w >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(w & 0xff));
    }
    return out;
}

Json rect_to_json(const Rect& r) { return Json::array({r.x0(), r.y0(), r.x1(), r.y1()}); }

Rect rect_from_json(const Json& j, const std::string& name) {
    if (!j.is_array() || j.size() != 4)
        throw FormatError("field '" + name + "' must be [x0, y0, x1, y1]");
    try {
        return {number(j[0], name), number(j[1], name), number(j[2], name), number(j[3], name)};
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError("field '" + name + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------

Json to_json(const RasterMask& mask) {
    std::vector<std::uint8_t> packed((mask.size() + 7) / 8, 0);
    for (std::size_t k = 0; k < mask.size(); ++k)
        if (mask[k]) packed[k / 8] |= static_cast<std::uint8_t>(0x80u >> (k % 8));
    Json j;
    j["nx"] = mask.nx();
    j["ny"] = mask.ny();
    j["rect"] = rect_to_json(mask.rect());
    j["bits"] = base64_encode(packed);
    return j;
}

RasterMask mask_from_json(const Json& j) {
    const int nx = int_field(j, "nx"), ny = int_field(j, "ny");
    if (nx < 1 || ny < 1) throw FormatError("fields 'nx' and 'ny' must be positive");
    const Rect rect = rect_from_json(field(j, "rect"));
    const Json& b = field(j, "bits");
    if (!b.is_string()) throw FormatError("field 'bits' must be a base64 string");
    const auto packed = base64_decode(b.get<std::string>());
    const std::size_t n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    if (packed.size() != (n + 7) / 8) throw FormatError("field 'bits' has the wrong length");
    std::vector<std::uint8_t> bits(n);
    for (std::size_t k = 0; k < n; ++k) bits[k] = (packed[k / 8] >> (7 - k % 8)) & 1u;
    return {rect, nx, ny, std::move(bits)};
}

Json to_json(const DensityField& f) {
    Json j;
    j["nx"] = f.nx();
    j["ny"] = f.ny();
    j["rect"] = rect_to_json(f.rect());
    j["range"] = Json::array({f.declared_range().lo, f.declared_range().hi});
    j["values"] = f.values();
    return j;
}

DensityField density_from_json(const Json& j) {
    const int nx = int_field(j, "nx"), ny = int_field(j, "ny");
    if (nx < 1 || ny < 1) throw FormatError("fields 'nx' and 'ny' must be positive");
    const Rect rect = rect_from_json(field(j, "rect"));
    std::optional<ValueRange> range;
    if (j.contains("range")) {
        const Json& r = j["range"];
        if (!r.is_array() || r.size() != 2) throw FormatError("field 'range' must be [a, b]");
        range = ValueRange{number(r[0], "range"), number(r[1], "range")};
    }
    const Json& v = field(j, "values");
    if (!v.is_array()) throw FormatError("field 'values' must be an array");
    if (v.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny))
        throw FormatError("field 'values' must hold nx*ny numbers");
    std::vector<double> values;
    values.reserve(v.size());
    for (const auto& x : v) values.push_back(number(x, "values"));
    try {
        return {rect, nx, ny, std::move(values), range};
    } catch (const Error& e) {
        throw FormatError(std::string("field 'values': ") + e.what());
    }
}

std::string density_to_csv(const DensityField& f) {
    std::ostringstream os;
    os.precision(17);
    for (int j = 0; j < f.ny(); ++j) {
        for (int i = 0; i < f.nx(); ++i) os << (i ? "," : "") << f.at(i, j);
        os << '\n';
    }
    return os.str();
}

Json to_json(const PiecewiseAffineMap& map) {
    Json j;
    j["nx"] = map.nx();
    j["ny"] = map.ny();
    if (!(map.domain() == Rect::unit())) j["rect"] = rect_to_json(map.domain());
    Json v = Json::array();
    for (const auto& p : map.vertices()) v.push_back(Json::array({p.x(), p.y()}));
    j["vertices"] = std::move(v);
    return j;
}

PiecewiseAffineMap map_from_json(const Json& j) {
    const int nx = int_field(j, "nx"), ny = int_field(j, "ny");
    if (nx < 1 || ny < 1) throw FormatError("fields 'nx' and 'ny' must be positive");
    const Rect domain = j.contains("rect") ? rect_from_json(j["rect"]) : Rect::unit();
    const Json& v = field(j, "vertices");
    if (!v.is_array() ||
        v.size() != static_cast<std::size_t>(nx + 1) * static_cast<std::size_t>(ny + 1))
        throw FormatError("field 'vertices' must hold (nx+1)*(ny+1) points");
    std::vector<Point> pts;
    pts.reserve(v.size());
    for (const auto& p : v) {
        if (!p.is_array() || p.size() != 2) throw FormatError("field 'vertices' entries must be [x, y]");
        pts.emplace_back(number(p[0], "vertices"), number(p[1], "vertices"));
    }
    return {nx, ny, std::move(pts), domain};
}

Json to_json(const Segment& s) {
    return Json::array({Json::array({s.p().x(), s.p().y()}), Json::array({s.q().x(), s.q().y()})});
}

// ---------------------------------------------------------------------------

Json to_json(const SolverConfig& c) {
    Json j;
    j["L"] = c.lipschitz_bound;
    j["tau"] = c.tau;
    j["max_iterations"] = c.max_iterations;
    j["initial_step"] = c.initial_step;
    j["backtrack"] = c.backtrack;
    j["armijo"] = c.armijo;
    j["min_step"] = c.min_step;
    j["jacobian_weight"] = c.jacobian_weight;
    j["barrier_weight"] = c.barrier_weight;
    j["restarts"] = c.restarts;
    j["restart_jitter"] = c.restart_jitter;
    j["seed"] = c.seed;
    j["gradient_tolerance"] = c.gradient_tolerance;
    j["history"] = c.history;
    return j;
}

SolverConfig solver_config_from_json(const Json& j, SolverConfig c) {
    if (!j.is_object()) throw FormatError("solver config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "L") c.lipschitz_bound = number(v, key);
        else if (key == "tau") c.tau = number(v, key);
        else if (key == "max_iterations") c.max_iterations = int_field(j, key);
        else if (key == "initial_step") c.initial_step = number(v, key);
        else if (key == "backtrack") c.backtrack = number(v, key);
        else if (key == "armijo") c.armijo = number(v, key);
        else if (key == "min_step") c.min_step = number(v, key);
        else if (key == "jacobian_weight") c.jacobian_weight = number(v, key);
        else if (key == "barrier_weight") c.barrier_weight = number(v, key);
        else if (key == "restarts") c.restarts = int_field(j, key);
        else if (key == "restart_jitter") c.restart_jitter = number(v, key);
        else if (key == "seed") {
            if (!v.is_number_unsigned()) throw FormatError("field 'seed' must be a nonnegative integer");
            c.seed = v.get<std::uint64_t>();
        } else if (key == "gradient_tolerance") c.gradient_tolerance = number(v, key);
        else if (key == "history") c.history = int_field(j, key);
        else throw FormatError("unknown solver field '" + key + "'");
    }
    return c;
}

Json to_json(const SolveReport& r, const SolverConfig& config) {
    Json j;
    j["config"] = to_json(config);
    j["mismatch_area"] = r.mismatch_area;
    j["achieved_L"] = r.achieved_lipschitz;
    j["converged"] = r.converged;
    j["evidence"] = to_string(r.evidence);
    j["stop_reason"] = r.stop_reason;
    j["iterations"] = r.iterations;
    j["runs"] = r.runs;
    j["best_run"] = r.best_run;
    j["trace"] = r.trace;
    j["map"] = to_json(r.map);
    return j;
}

std::string trace_to_csv(const std::vector<double>& trace) {
    std::ostringstream os;
    os.precision(17);
    os << "step,objective\n";
    for (std::size_t k = 0; k < trace.size(); ++k) os << k << ',' << trace[k] << '\n';
    return os.str();
}

Json to_json(const CertificateResult& r) {
    Json j;
    j["verdict"] = to_string(r.verdict);
    j["mismatch_area"] = r.mismatch_area;
    j["threshold"] = r.threshold;
    j["witness"] = r.witness ? Json(*r.witness) : Json(nullptr);
    j["witness_ratio"] = r.witness_ratio;
    j["min_ratio"] = r.stretch.min_ratio;
    j["max_ratio"] = r.stretch.max_ratio;
    Json pairs = Json::array();
    for (const auto& p : r.stretch.pairs) {
        Json e;
        e["segment"] = to_json(p.segment);
        e["ratio"] = p.ratio;
        pairs.push_back(std::move(e));
    }
    j["pairs"] = std::move(pairs);
    j["absolute_threshold"] = r.absolute_threshold;
    j["absolute_holds"] = r.absolute_holds;
    return j;
}

Json to_json(const RefinementStep& s) {
    Json j;
    j["segment"] = to_json(s.segment);
    j["ratio"] = s.ratio;
    j["region"] = rect_to_json(s.region);
    j["scale"] = s.scale;
    j["cells"] = s.cells;
    j["values"] = Json::array({s.values.lo, s.values.hi});
    j["mismatch_area"] = s.mismatch_area;
    return j;
}

Json to_json(const ImageConvergenceReport& r) {
    Json j;
    j["k0"] = r.k0 ? Json(*r.k0) : Json("NOT_FOUND");
    j["eps"] = r.eps;
    j["raster"] = {{"nx", r.raster_nx}, {"ny", r.raster_ny}, {"rect", rect_to_json(r.raster_rect)}};
    Json steps = Json::array();
    for (const auto& s : r.steps) {
        Json e;
        e["k"] = s.k;
        e["exterior_inclusion"] = s.exterior_inclusion;
        e["interior_inclusion"] = s.interior_inclusion;
        e["image_area"] = s.image_area;
        e["jacobian_integral"] = s.jacobian_integral;
        e["discrepancy"] = s.discrepancy;
        e["budget"] = s.budget;
        steps.push_back(std::move(e));
    }
    j["steps"] = std::move(steps);
    return j;
}

// ---------------------------------------------------------------------------

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open input file '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw FormatError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << contents;
        if (!out.flush()) throw Error("cannot write '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error("cannot move output into '" + path + "': " + ec.message());
    }
}

} // namespace jacprobe
