#include "jacprobe/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "jacprobe/certify.hpp"
#include "jacprobe/density.hpp"
#include "jacprobe/error.hpp"
#include "jacprobe/log.hpp"
#include "jacprobe/serialize.hpp"
#include "jacprobe/solver.hpp"

namespace jacprobe::cli {

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config_path;
    Json solver_overrides = Json::object();
    std::set<std::string> given;

    std::string grid = "64x64";
    std::uint64_t seed = 0;
    std::string out;
    double tau = 0.05;
    double eps = 0.05;
    double L = 2.0;
    int restarts = 0;
    int workers = 0;
    int max_iterations = 2000;

    std::string checkerboard;
    double constant = 0.0;
    std::string ramp;
    bool embedded = false;
    std::string csv;

    std::string rho, init, map, segments, trace_csv;
    double delta = 0.0, kappa = 0.0;
    int level = 1;
    int kappa_runs = 0;

    double square = 0.0;
    int cells = 4;
    double a = std::numeric_limits<double>::quiet_NaN();
    double theta = kDefaultDensityThreshold;

    int levels = 1;
    int inner_cells = 2;

    std::string sequence, limit, region;
    int dilation = 0;
    double radius = 0.3;
    int map_grid = 16;
    int region_grid = 512;
    int raster = kDefaultImageRaster;

    std::string n_list, c_list = "1", l_list;

    bool has(const std::string& name) const { return given.count(name) > 0; }
};

// ---------------------------------------------------------------------------
// Parsing helpers

std::pair<int, int> parse_grid(const std::string& s) {
    static const std::regex re(R"((\d+)x(\d+))");
    std::smatch m;
    if (!std::regex_match(s, m, re)) throw UsageError("--grid expects WxH, got '" + s + "'");
    const int nx = std::stoi(m[1]), ny = std::stoi(m[2]);
    if (nx < 1 || ny < 1) throw UsageError("--grid dimensions must be positive");
    return {nx, ny};
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        if (!cur.empty()) parts.push_back(cur);
    return parts;
}

double to_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError(what + ": '" + s + "' is not a number");
    }
}

std::vector<double> number_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& p : split(s, ',')) out.push_back(to_double(p, what));
    if (out.empty()) throw UsageError(what + " must not be empty");
    return out;
}

CheckerboardSpec parse_checkerboard(const std::string& s) {
    int n = 0;
    double c = 0.0;
    bool have_n = false, have_c = false;
    for (const auto& kv : split(s, ',')) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--checkerboard expects N=..,c=..");
        const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "N") {
            n = static_cast<int>(to_double(val, "--checkerboard N"));
            have_n = true;
        } else if (key == "c") {
            c = to_double(val, "--checkerboard c");
            have_c = true;
        } else {
            throw UsageError("--checkerboard: unknown key '" + key + "'");
        }
    }
    if (!have_n || !have_c) throw UsageError("--checkerboard expects N=..,c=..");
    return {n, c};
}

std::vector<Segment> parse_segments(const std::string& s) {
    std::vector<Segment> out;
    for (const auto& item : split(s, ';')) {
        const auto v = number_list(item, "--segments");
        if (v.size() != 4) throw UsageError("--segments expects x0,y0,x1,y1;...");
        out.emplace_back(Point{v[0], v[1]}, Point{v[2], v[3]});
    }
    return out;
}

std::vector<Segment> strip_segments(const CheckerboardSpec& spec) {
    RefinementState probe{DensityField::constant(spec.strip(), spec.cells(), 1, 1.0), 0, {},
                          spec.strip(), spec.cells()};
    return mid_cell_segments(probe);
}

SolverConfig solver_config(const Options& o) {
    SolverConfig c = solver_config_from_json(o.solver_overrides);
    auto pick = [&](const char* name, auto& field, auto value) {
        if (o.has(name) || !o.solver_overrides.contains(name)) field = value;
    };
    pick("L", c.lipschitz_bound, o.L);
    pick("tau", c.tau, o.tau);
    pick("restarts", c.restarts, o.restarts);
    pick("seed", c.seed, o.seed);
    pick("max_iterations", c.max_iterations, o.max_iterations);
    c.validate();
    return c;
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

Json metadata(const Timer& timer) {
    Json m;
    m["timestamp"] = timestamp();
    m["wall_time"] = timer.seconds();
    m["version"] = kVersion;
    return m;
}

void emit(const std::string& path, Json j, const Json& config, const Timer& timer) {
    j["config"] = config;
    j["metadata"] = metadata(timer);
    write_file_atomic(path, j.dump(2) + "\n");
}

void require_out(const Options& o) {
    if (o.out.empty()) throw UsageError("--out is required");
}

// ---------------------------------------------------------------------------
// Subcommands

Json base_config(const char* command) {
    Json c;
    c["command"] = command;
    return c;
}

void gen_density(const Options& o) {
    require_out(o);
    const auto [nx, ny] = parse_grid(o.grid);
    const int sources = (o.has("checkerboard") ? 1 : 0) + (o.has("constant") ? 1 : 0) +
                        (o.has("ramp") ? 1 : 0);
    if (sources != 1) throw UsageError("give exactly one of --checkerboard, --constant, --ramp");
    Json config = base_config("gen-density");
    config["grid"] = {nx, ny};
    std::optional<DensityField> field;
    if (o.has("checkerboard")) {
        const auto spec = parse_checkerboard(o.checkerboard);
        field = o.embedded ? embedded_checkerboard(spec, nx, ny) : make_checkerboard(spec, nx, ny);
        config["checkerboard"] = {{"N", spec.cells()}, {"c", spec.amplitude()}};
        config["embedded"] = o.embedded;
    } else if (o.has("constant")) {
        field = DensityField::constant(Rect::unit(), nx, ny, o.constant);
        config["constant"] = o.constant;
    } else {
        const auto ab = number_list(o.ramp, "--ramp");
        if (ab.size() != 2) throw UsageError("--ramp expects a,b");
        const double a = ab[0], b = ab[1];
        if (!(b > a)) throw Error("--ramp needs a < b");
        field = DensityField::sample(
            Rect::unit(), nx, ny, [&](const Point& p) { return a + (b - a) * p.x(); },
            ValueRange{a, b});
        config["ramp"] = {a, b};
    }
    Json j = to_json(*field);
    j["integral"] = integrate(*field, field->grid_mask(true));
    if (!o.csv.empty()) {
        write_file_atomic(o.csv, density_to_csv(*field));
        config["csv"] = o.csv;
    }
    emit(o.out, std::move(j), config, Timer{});
}

void solve(const Options& o) {
    require_out(o);
    if (o.rho.empty()) throw UsageError("--rho is required");
    Timer timer;
    const auto rho = density_from_json(read_json_file(o.rho));
    const auto initial = o.init.empty() ? identity_map(rho.nx(), rho.ny(), rho.rect())
                                         : map_from_json(read_json_file(o.init));
    const auto sc = solver_config(o);
    const auto report = realize_jacobian(rho, sc, initial);
    Json config = base_config("solve");
    config["rho"] = o.rho;
    config["init"] = o.init.empty() ? Json(nullptr) : Json(o.init);
    config["solver"] = to_json(sc);
    if (!o.trace_csv.empty()) {
        write_file_atomic(o.trace_csv, trace_to_csv(report.trace));
        config["trace_csv"] = o.trace_csv;
    }
    Json j = to_json(report, sc);
    j.erase("config");
    emit(o.out, std::move(j), config, timer);
}

SegmentSet segment_option(const Options& o) {
    if (o.has("segments")) return SegmentSet(parse_segments(o.segments));
    if (o.has("checkerboard")) return SegmentSet(strip_segments(parse_checkerboard(o.checkerboard)));
    throw UsageError("give --segments or --checkerboard");
}

void stretch(const Options& o) {
    require_out(o);
    Timer timer;
    const SegmentSet segments = segment_option(o);
    Json config = base_config("stretch");
    Json segs = Json::array();
    for (const auto& s : segments.segments()) segs.push_back(to_json(s));
    config["segments"] = segs;
    Json j;

    if (o.kappa_runs > 0) {
        if (o.rho.empty()) throw UsageError("--kappa-runs needs --rho");
        const auto rho = density_from_json(read_json_file(o.rho));
        const auto sc = solver_config(o);
        const auto est = estimate_kappa(rho, segments, sc, o.kappa_runs);
        config["rho"] = o.rho;
        config["kappa_runs"] = o.kappa_runs;
        config["solver"] = to_json(sc);
        j["kappa"] = est.kappa;
        j["max_ratios"] = est.max_ratios;
        emit(o.out, std::move(j), config, timer);
        return;
    }

    if (o.map.empty()) throw UsageError("--map is required");
    const auto map = map_from_json(read_json_file(o.map));
    config["map"] = o.map;
    if (!o.rho.empty()) {
        if (!o.has("delta")) throw UsageError("a certificate needs --delta");
        const auto rho = density_from_json(read_json_file(o.rho));
        const StretchCertificate cert(rho, segments, o.delta, o.kappa, o.level, o.L);
        config["rho"] = o.rho;
        config["delta"] = o.delta;
        config["kappa"] = o.kappa;
        config["level"] = o.level;
        config["L"] = o.L;
        config["tau"] = o.tau;
        j = to_json(evaluate_certificate(cert, map, o.tau));
    } else {
        const auto report = stretch_pairs(map, segments);
        Json pairs = Json::array();
        for (const auto& p : report.pairs) pairs.push_back({{"segment", to_json(p.segment)}, {"ratio", p.ratio}});
        j["pairs"] = std::move(pairs);
        j["min_ratio"] = report.min_ratio;
        j["max_ratio"] = report.max_ratio;
        j["argmax"] = report.argmax();
    }
    emit(o.out, std::move(j), config, timer);
}

void perturb(const Options& o) {
    require_out(o);
    if (o.rho.empty()) throw UsageError("--rho is required");
    if (!o.has("square")) throw UsageError("--square is required");
    Timer timer;
    const auto phi = density_from_json(read_json_file(o.rho));
    const auto g = glue_bad_patch(phi, o.eps, o.square, o.cells);
    Json config = base_config("perturb");
    config["rho"] = o.rho;
    config["eps"] = o.eps;
    config["square"] = o.square;
    config["cells"] = o.cells;
    Json j = to_json(g.result);
    j["component"] = to_json(g.component);
    j["square"] = rect_to_json(g.square);
    j["sup_difference"] = g.sup_difference;
    emit(o.out, std::move(j), config, timer);
}

void patch_linf(const Options& o) {
    require_out(o);
    if (o.rho.empty()) throw UsageError("--rho is required");
    Timer timer;
    const auto phi = density_from_json(read_json_file(o.rho));
    std::optional<double> a;
    if (o.has("a")) a = o.a;
    const auto p = patch_bad_square(phi, o.eps, a, o.theta, o.cells);
    Json config = base_config("patch-linf");
    config["rho"] = o.rho;
    config["eps"] = o.eps;
    config["a"] = a ? Json(*a) : Json(nullptr);
    config["theta"] = o.theta;
    config["cells"] = o.cells;
    Json j = to_json(p.result);
    j["band"] = {p.band.lo, p.band.hi};
    j["square"] = {{"rect", rect_to_json(p.square.square)},
                   {"side", p.square.side},
                   {"ratio", p.square.ratio}};
    j["sup_difference"] = p.sup_difference;
    emit(o.out, std::move(j), config, timer);
}

void refine(const Options& o) {
    require_out(o);
    if (!o.has("checkerboard")) throw UsageError("--checkerboard is required");
    if (o.levels < 0) throw UsageError("--levels must be nonnegative");
    Timer timer;
    const auto [nx, ny] = parse_grid(o.grid);
    const auto spec = parse_checkerboard(o.checkerboard);
    const CheckerboardSpec inner(o.inner_cells, spec.amplitude());
    const auto sc = solver_config(o);
    Json config = base_config("refine");
    config["grid"] = {nx, ny};
    config["checkerboard"] = {{"N", spec.cells()}, {"c", spec.amplitude()}};
    config["levels"] = o.levels;
    config["inner_cells"] = o.inner_cells;
    config["solver"] = to_json(sc);

    const std::filesystem::path dir(o.out);
    auto write_level = [&](const RefinementState& s) {
        Json j = to_json(s.density);
        j["level"] = s.level;
        emit((dir / ("level_" + std::to_string(s.level) + ".json")).string(), std::move(j), config,
             timer);
    };
    auto write_history = [&](const RefinementState& s, const std::string& status) {
        Json j;
        j["status"] = status;
        j["level"] = s.level;
        Json steps = Json::array();
        for (const auto& st : s.history) steps.push_back(to_json(st));
        j["history"] = std::move(steps);
        emit((dir / "history.json").string(), std::move(j), config, timer);
    };

    RefinementState state = start_refinement(spec, nx, ny);
    write_level(state);
    for (int k = 0; k < o.levels; ++k) {
        try {
            state = refine_checkerboard(state, sc, inner);
        } catch (const RefinementError& e) {
            write_history(e.partial(), std::string("failed: ") + e.what());
            throw;
        }
        write_level(state);
    }
    write_history(state, "complete");
}

void verify_lemma2(const Options& o) {
    require_out(o);
    if (!(o.eps > 0.0)) throw Error("eps must be positive");
    Timer timer;
    Json config = base_config("verify-lemma2");
    config["eps"] = o.eps;
    config["raster"] = o.raster;

    std::vector<PiecewiseAffineMap> sequence;
    std::optional<PiecewiseAffineMap> limit;
    if (o.has("sequence")) {
        for (const auto& path : split(o.sequence, ',')) sequence.push_back(map_from_json(read_json_file(path)));
        config["sequence"] = split(o.sequence, ',');
    } else if (o.dilation > 0) {
        // phi_k = (1 + 1/k) times the identity, centered on the unit square.
        const Point c{0.5, 0.5};
        for (int k = 1; k <= o.dilation; ++k) {
            const double s = 1.0 + 1.0 / k;
            sequence.push_back(PiecewiseAffineMap::from_function(
                o.map_grid, o.map_grid, [&](const Point& p) -> Point { return c + s * (p - c); }));
        }
        config["dilation"] = o.dilation;
        config["map_grid"] = o.map_grid;
    } else {
        throw UsageError("give --sequence or --dilation");
    }
    if (!o.limit.empty()) {
        limit = map_from_json(read_json_file(o.limit));
        config["limit"] = o.limit;
    } else {
        limit = identity_map(sequence.front().nx(), sequence.front().ny(), sequence.front().domain());
    }
    RasterMask region = [&] {
        if (!o.region.empty()) {
            config["region"] = o.region;
            return mask_from_json(read_json_file(o.region));
        }
        config["radius"] = o.radius;
        config["region_grid"] = o.region_grid;
        const Point c = limit->domain().center();
        return RasterMask::rasterize(limit->domain(), o.region_grid, o.region_grid,
                                     [&](const Point& p) { return (p - c).norm() < o.radius; });
    }();
    const auto report = verify_image_convergence(sequence, *limit, region, o.eps, o.raster);
    emit(o.out, to_json(report), config, timer);
}

struct SweepPoint {
    int n;
    double c, l;
};

struct SweepRow {
    double mismatch_area = 0.0, min_ratio = 0.0, max_ratio = 0.0, achieved_l = 0.0;
    int iterations = 0;
    std::string evidence;
};

void sweep(const Options& o) {
    require_out(o);
    if (!o.has("N")) throw UsageError("--N is required");
    Timer timer;
    const auto [nx, ny] = parse_grid(o.grid);
    std::vector<int> ns;
    for (double v : number_list(o.n_list, "--N")) {
        if (v != std::floor(v) || v < 2) throw UsageError("--N entries must be integers >= 2");
        ns.push_back(static_cast<int>(v));
    }
    const auto cs = number_list(o.c_list, "--c");
    const auto ls = o.l_list.empty() ? std::vector<double>{o.L} : number_list(o.l_list, "--L-list");
    const auto base = solver_config(o);

    std::vector<SweepPoint> points;
    for (int n : ns)
        for (double c : cs)
            for (double l : ls) points.push_back({n, c, l});

    Json config = base_config("sweep");
    config["grid"] = {nx, ny};
    config["N"] = ns;
    config["c"] = cs;
    config["L"] = ls;
    config["solver"] = to_json(base);

    std::vector<SweepRow> rows(points.size());
    std::vector<std::string> failures(points.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t k = next++; k < points.size(); k = next++) {
            const auto& pt = points[k];
            try {
                const CheckerboardSpec spec(pt.n, pt.c);
                const auto rho = embedded_checkerboard(spec, nx, ny);
                SolverConfig sc = base;
                sc.lipschitz_bound = pt.l;
                const auto report = realize_jacobian(rho, sc, identity_map(nx, ny));
                const auto st = stretch_pairs(report.map, SegmentSet(strip_segments(spec)));
                rows[k] = {report.mismatch_area, st.min_ratio, st.max_ratio,
                           report.achieved_lipschitz, report.iterations, to_string(report.evidence)};
            } catch (const std::exception& e) {
                failures[k] = e.what();
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers =
        std::min<std::size_t>(o.workers > 0 ? static_cast<std::size_t>(o.workers) : hw, points.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (std::size_t k = 0; k < points.size(); ++k)
        if (!failures[k].empty())
            throw Error("sweep point N=" + std::to_string(points[k].n) + " failed: " + failures[k]);

    std::ostringstream csv;
    csv.precision(17);
    csv << "N,c,L,tau,mismatch_area,min_stretch_ratio,max_stretch_ratio,achieved_L,iterations,evidence\n";
    Json table = Json::array();
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& p = points[k];
        const auto& r = rows[k];
        csv << p.n << ',' << p.c << ',' << p.l << ',' << base.tau << ',' << r.mismatch_area << ','
            << r.min_ratio << ',' << r.max_ratio << ',' << r.achieved_l << ',' << r.iterations << ','
            << r.evidence << '\n';
        table.push_back({{"N", p.n},
                         {"c", p.c},
                         {"L", p.l},
                         {"mismatch_area", r.mismatch_area},
                         {"min_stretch_ratio", r.min_ratio},
                         {"max_stretch_ratio", r.max_ratio},
                         {"achieved_L", r.achieved_l},
                         {"iterations", r.iterations},
                         {"evidence", r.evidence}});
    }
    write_file_atomic(o.out, csv.str());
    std::filesystem::path sibling(o.out);
    sibling.replace_extension(".json");
    config["workers"] = workers;
    Json j;
    j["rows"] = std::move(table);
    j["csv"] = o.out;
    emit(sibling.string(), std::move(j), config, timer);
}

// ---------------------------------------------------------------------------

// Turns a config-file entry into flag arguments for `sub`.
std::vector<std::string> config_arguments(const Json& config, CLI::App* sub, Options& o) {
    std::vector<std::string> out;
    if (!config.is_object()) throw FormatError("config file must hold a JSON object");
    for (const auto& [key, v] : config.items()) {
        if (key == "solver") {
            solver_config_from_json(v); // validates field names and types
            o.solver_overrides = v;
            continue;
        }
        if (key == "config") throw FormatError("config field 'config' is not allowed");
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (!opt) throw FormatError("unknown config field '" + key + "'");
        if (v.is_boolean()) {
            if (v.get<bool>()) out.push_back("--" + key);
            continue;
        }
        std::string value;
        if (v.is_string()) {
            value = v.get<std::string>();
        } else if (v.is_number()) {
            value = v.dump();
        } else if (v.is_array()) {
            for (std::size_t k = 0; k < v.size(); ++k) {
                if (!v[k].is_number() && !v[k].is_string())
                    throw FormatError("config field '" + key + "' must hold scalars");
                value += (k ? "," : "") + (v[k].is_string() ? v[k].get<std::string>() : v[k].dump());
            }
        } else {
            throw FormatError("config field '" + key + "' has an unsupported type");
        }
        out.push_back("--" + key);
        out.push_back(value);
    }
    return out;
}

std::string find_config_path(const std::vector<std::string>& args) {
    for (std::size_t k = 2; k < args.size(); ++k) {
        if (args[k] == "--config" && k + 1 < args.size()) return args[k + 1];
        if (args[k].rfind("--config=", 0) == 0) return args[k].substr(9);
    }
    return {};
}

void error_json(std::ostream& err, const char* kind, const std::string& message) {
    Json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    err << j.dump() << std::endl;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Bad densities and prescribed-Jacobian experiments", "jacprobe"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    auto common = [&](CLI::App* s) {
        s->add_option("--config", o.config_path, "JSON file of flag values; flags win");
        s->add_option("-o,--out", o.out, "output path");
        s->add_option("--seed", o.seed, "random seed");
    };
    auto solver_flags = [&](CLI::App* s) {
        s->add_option("--L", o.L, "bi-Lipschitz bound");
        s->add_option("--tau", o.tau, "pointwise Jacobian mismatch tolerance");
        s->add_option("--restarts", o.restarts, "randomized restarts");
        s->add_option("--max-iterations", o.max_iterations, "descent steps per run");
    };

    auto* gen = app.add_subcommand("gen-density", "write a density field");
    common(gen);
    gen->add_option("--grid", o.grid, "sample grid WxH");
    gen->add_option("--checkerboard", o.checkerboard, "N=..,c=..");
    gen->add_option("--constant", o.constant, "constant value on the unit square");
    gen->add_option("--ramp", o.ramp, "a,b: a + (b-a) x on the unit square");
    gen->add_flag("--embedded", o.embedded, "place the checkerboard strip inside the unit square");
    gen->add_option("--csv", o.csv, "also write a CSV export");

    auto* sol = app.add_subcommand("solve", "search for a bi-Lipschitz map with the given Jacobian");
    common(sol);
    solver_flags(sol);
    sol->add_option("--rho", o.rho, "density JSON");
    sol->add_option("--init", o.init, "initial map JSON (default identity)");
    sol->add_option("--trace-csv", o.trace_csv, "objective trace CSV");

    auto* str = app.add_subcommand("stretch", "stretch ratios, certificates and kappa estimates");
    common(str);
    solver_flags(str);
    str->add_option("--map", o.map, "map JSON");
    str->add_option("--segments", o.segments, "x0,y0,x1,y1;...");
    str->add_option("--checkerboard", o.checkerboard, "use the mid-cell segments of N=..,c=..");
    str->add_option("--rho", o.rho, "density for a certificate or kappa estimate");
    str->add_option("--delta", o.delta, "mismatch-area budget");
    str->add_option("--kappa", o.kappa, "excess stretch per level");
    str->add_option("--level", o.level, "certificate level");
    str->add_option("--kappa-runs", o.kappa_runs, "estimate kappa from this many solves");

    auto* per = app.add_subcommand("perturb", "glue a checkerboard patch into a band component");
    common(per);
    per->add_option("--rho", o.rho, "density JSON");
    per->add_option("--eps", o.eps, "band width");
    per->add_option("--square", o.square, "side of the patched square");
    per->add_option("--cells", o.cells, "patch checkerboard columns");

    auto* pl = app.add_subcommand("patch-linf", "truncate and patch a density square");
    common(pl);
    pl->add_option("--rho", o.rho, "density JSON");
    pl->add_option("--eps", o.eps, "truncation level and band width");
    pl->add_option("--a", o.a, "lower end of the band");
    pl->add_option("--theta", o.theta, "band occupancy threshold");
    pl->add_option("--cells", o.cells, "patch checkerboard columns");

    auto* ref = app.add_subcommand("refine", "recursive checkerboard refinement");
    common(ref);
    solver_flags(ref);
    ref->add_option("--grid", o.grid, "sample grid WxH");
    ref->add_option("--checkerboard", o.checkerboard, "N=..,c=..");
    ref->add_option("--levels", o.levels, "refinement steps");
    ref->add_option("--inner-cells", o.inner_cells, "columns of each inserted checkerboard");

    auto* ver = app.add_subcommand("verify-lemma2", "check image convergence phi_k(U) -> phi(U)");
    common(ver);
    ver->add_option("--eps", o.eps, "neighborhood radius");
    ver->add_option("--sequence", o.sequence, "comma-separated map JSON files");
    ver->add_option("--limit", o.limit, "limit map JSON (default identity)");
    ver->add_option("--region", o.region, "mask JSON for U (default centered disk)");
    ver->add_option("--dilation", o.dilation, "use phi_k = (1+1/k) identity for k = 1..K");
    ver->add_option("--radius", o.radius, "radius of the default disk");
    ver->add_option("--map-grid", o.map_grid, "cells per side of generated maps");
    ver->add_option("--region-grid", o.region_grid, "pixels per side of the default disk");
    ver->add_option("--raster", o.raster, "image raster pixels along the longer side");

    auto* sw = app.add_subcommand("sweep", "solve embedded checkerboards over N, c and L");
    common(sw);
    solver_flags(sw);
    sw->add_option("--grid", o.grid, "sample grid WxH");
    sw->add_option("--N", o.n_list, "comma-separated cell counts");
    sw->add_option("--c", o.c_list, "comma-separated amplitudes");
    sw->add_option("--L-list", o.l_list, "comma-separated bounds (default --L)");
    sw->add_option("--workers", o.workers, "parallel sweep points (default: processors)");

    try {
        std::vector<std::string> argv(args.begin() + (args.empty() ? 0 : 1), args.end());
        const std::string config_path = find_config_path(args);
        if (!config_path.empty() && !argv.empty()) {
            CLI::App* sub = nullptr;
            for (auto* s : app.get_subcommands({}))
                if (s->get_name() == argv.front()) sub = s;
            if (sub) {
                const auto extra = config_arguments(read_json_file(config_path), sub, o);
                argv.insert(argv.begin() + 1, extra.begin(), extra.end());
            }
        }
        std::reverse(argv.begin(), argv.end());
        try {
            app.parse(argv);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? 0 : 2;
        }

        CLI::App* chosen = app.get_subcommands().front();
        for (const auto* opt : chosen->get_options())
            if (opt->count() > 0)
                for (const auto& name : opt->get_lnames()) o.given.insert(name);

        const std::string name = chosen->get_name();
        if (name == "gen-density") gen_density(o);
        else if (name == "solve") solve(o);
        else if (name == "stretch") stretch(o);
        else if (name == "perturb") perturb(o);
        else if (name == "patch-linf") patch_linf(o);
        else if (name == "refine") refine(o);
        else if (name == "verify-lemma2") verify_lemma2(o);
        else if (name == "sweep") sweep(o);
        return 0;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        error_json(err, "format", e.what());
        return 1;
    } catch (const Error& e) {
        error_json(err, "domain", e.what());
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        error_json(err, "io", e.what());
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

} // namespace jacprobe::cli
