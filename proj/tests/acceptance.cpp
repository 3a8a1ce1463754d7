// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>

#include "jacprobe/certify.hpp"
#include "jacprobe/cli.hpp"
#include "jacprobe/serialize.hpp"
#include "support.hpp"

using namespace jacprobe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

fs::path scratch() {
    const auto p = fs::temp_directory_path() / "jacprobe_acceptance";
    fs::create_directories(p);
    return p;
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "jacprobe");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
    return code;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

Outcome constant_density() {
    SolverConfig config;
    config.lipschitz_bound = 2.5;
    const auto rho = DensityField::constant(Rect::unit(), 32, 32, 4.0);
    const auto t = std::chrono::steady_clock::now();
    const auto r = realize_jacobian(rho, config, identity_map(32, 32));
    const double s = seconds_since(t);
    return {r.mismatch_area < 1e-3 && r.achieved_lipschitz <= 2.0 + 1e-3 && s < 60.0,
            fmt("mismatch_area=%.3g achieved_L=%.6f time=%.2fs", r.mismatch_area, r.achieved_lipschitz, s)};
}

Outcome checkerboard_integrals() {
    const auto r4 = make_checkerboard({4, 1.0}, 64, 16);
    bool ok = integrate(r4, r4.grid_mask(true)) == 0.375;
    double worst = 0.0;
    for (int n : {2, 4, 8, 16})
        for (double c : {0.5, 1.0}) {
            const auto rho = make_checkerboard({n, c}, 64, 64 / n);
            double cells = 0.0;
            for (int i = 1; i <= n; ++i) cells += (i % 2 ? 1.0 + c : 1.0) / (double(n) * n);
            const double closed = 1.0 / n + c * ((n + 1) / 2) / (double(n) * n);
            const double got = integrate(rho, rho.grid_mask(true));
            worst = std::max({worst, std::abs(got - cells), std::abs(got - closed)});
        }
    ok = ok && worst == 0.0;
    return {ok, fmt("integral(rho_4,1)=%.17g max deviation over 8 cases=%.3g",
                    integrate(r4, r4.grid_mask(true)), worst)};
}

Outcome jacobian_correctness() {
    std::mt19937_64 rng(101);
    const double h = 1e-5;
    double worst_det = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto m = testing::random_map(16, 16, 0.3, rng);
        const auto jac = triangle_jacobians(m);
        for (std::size_t t = 0; t < m.triangle_count(); ++t) {
            const auto tri = m.triangle(t);
            Point b = Point::Zero();
            for (auto v : tri) b += m.domain_vertex(int(v % 17), int(v / 17)) / 3.0;
            const Point dx = (m.evaluate(b + Point(h, 0)) - m.evaluate(b - Point(h, 0))) / (2 * h);
            const Point dy = (m.evaluate(b + Point(0, h)) - m.evaluate(b - Point(0, h))) / (2 * h);
            worst_det = std::max(worst_det, std::abs(dx.x() * dy.y() - dx.y() * dy.x() - jac[t]));
        }
    }

    SolverConfig config;
    config.lipschitz_bound = 2.0;
    config.barrier_weight = 1e-2;
    std::uniform_real_distribution<double> u(0.7, 1.5);
    const auto rho = DensityField::sample(Rect::unit(), 8, 8, [&](const Point&) { return u(rng); });
    auto map = testing::random_map(8, 8, 0.2, rng);
    for (int draw = 0; draw < 100; ++draw) {
        const JacobianObjective probe(rho, map, config);
        if (probe.feasible(probe.flatten(map))) break;
        map = testing::random_map(8, 8, 0.2, rng);
    }
    const JacobianObjective objective(rho, map, config);
    const Eigen::VectorXd x = objective.flatten(map);
    Eigen::VectorXd g;
    objective.value_and_gradient(x, g);
    std::uniform_int_distribution<int> pick(1, static_cast<int>(map.vertices().size()) - 1);
    double worst_grad = 0.0;
    const double step = 1e-6;
    for (int k = 0; k < 20; ++k) {
        const int v = pick(rng);
        for (int c = 0; c < 2; ++c) {
            Eigen::VectorXd xp = x, xm = x;
            xp[2 * v + c] += step;
            xm[2 * v + c] -= step;
            const double fd = (objective.value(xp) - objective.value(xm)) / (2 * step);
            const double err = std::abs(fd - g[2 * v + c]) / std::max(std::abs(g[2 * v + c]), 1e-3);
            worst_grad = std::isfinite(err) ? std::max(worst_grad, err) : std::numeric_limits<double>::infinity();
        }
    }
    const bool feasible = objective.feasible(x);
    return {worst_det <= 1e-10 && feasible && worst_grad <= 1e-5,
            fmt("max |det error|=%.3g over 50 maps, feasible start: %s, max relative gradient error=%.3g",
                worst_det, feasible ? "yes" : "no", worst_grad)};
}

Outcome bilipschitz_estimator() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> angle(0.0, 2 * M_PI), big(1.0, 3.0), frac(0.1, 1.0), shift(-3, 3);
    double worst = 0.0, worst_rigid = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const double s1 = big(rng), s2 = s1 * frac(rng);
        const Mat2 d = testing::rotation(angle(rng)) * Eigen::Vector2d(s1, s2).asDiagonal() *
                       testing::rotation(angle(rng));
        const auto m = PiecewiseAffineMap::from_function(4, 4, [&](const Point& p) -> Point { return d * p; });
        worst = std::max(worst, std::abs(bilipschitz_constant(m) - std::max(s1, 1.0 / s2)));
    }
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = testing::random_map(10, 10, 0.3, rng);
        const auto moved = m.transformed(testing::rotation(angle(rng)), Point(shift(rng), shift(rng)));
        worst_rigid = std::max(worst_rigid, std::abs(bilipschitz_constant(moved) - bilipschitz_constant(m)));
        worst_rigid = std::max(worst_rigid, testing::sup_diff(jacobian_field(m), jacobian_field(moved)));
    }
    return {worst <= 1e-9 && worst_rigid <= 1e-12,
            fmt("max error on 100 affine maps=%.3g, rigid-motion drift=%.3g", worst, worst_rigid)};
}

Outcome band_gluing() {
    std::mt19937_64 rng(303);
    bool ok = true;
    double worst_ratio = 0.0;
    int cases = 0;
    for (int field = 0; field < 20; ++field) {
        const std::uint64_t seed = rng();
        for (double eps : {0.01, 0.05}) {
            std::mt19937_64 local(seed);
            const auto phi = testing::basin_field(64, eps, local);
            const auto g = glue_bad_patch(phi, eps, 0.0625, 2);
            const auto s = aligned_block(phi, g.square);
            double sup = 0.0;
            for (int j = 0; j < phi.ny(); ++j)
                for (int i = 0; i < phi.nx(); ++i) {
                    const auto k = phi.index(i, j);
                    sup = std::max(sup, std::abs(g.result.values()[k] - phi.values()[k]));
                    if (!g.component[k] && g.result.values()[k] != phi.values()[k]) ok = false;
                    if (s.contains(i, j) && g.result.at(i, j) != g.patch.at(i - s.i0, j - s.j0)) ok = false;
                }
            ok = ok && sup < eps;
            worst_ratio = std::max(worst_ratio, sup / eps);
            ++cases;
        }
    }
    return {ok, fmt("%d cases, max sup|rho-phi|/eps=%.4f, exact outside C and on S", cases, worst_ratio)};
}

Outcome linf_patching() {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool ok = true;
    double worst_ratio = 0.0, lowest = 1e300;
    for (int field = 0; field < 20; ++field) {
        const double eps = 0.02 + 0.08 * u(rng);
        const auto phi = testing::rough_field(48, eps, rng);
        std::size_t below = 0;
        for (double v : phi.values()) below += v < eps;
        const auto out = patch_bad_square(phi, eps, std::nullopt, kDefaultDensityThreshold, 2);
        const double sup = testing::sup_diff(out.result, phi);
        const double floor = std::min(eps, out.band.lo);
        ok = ok && sup <= 2 * eps && out.result.min_value() >= floor && floor > 0.0 &&
             below >= phi.values().size() * 29 / 100;
        worst_ratio = std::max(worst_ratio, sup / eps);
        lowest = std::min(lowest, out.result.min_value() / floor);
    }
    return {ok, fmt("20 fields, max sup|rho-phi|/eps=%.4f, min output/min(eps,a)=%.4f", worst_ratio, lowest)};
}

Outcome image_convergence() {
    const auto dilation = [](double s) {
        return PiecewiseAffineMap::from_function(32, 32, [s](const Point& p) -> Point {
            const Point c(0.5, 0.5);
            return c + s * (p - c);
        });
    };
    std::vector<PiecewiseAffineMap> seq;
    for (int k = 1; k <= 8; ++k) seq.push_back(dilation(1.0 + 1.0 / k));
    const auto disk = RasterMask::rasterize(Rect::unit(), 512, 512, [](const Point& p) {
        return (p - Point(0.5, 0.5)).norm() < 0.3;
    });
    const auto r = verify_image_convergence(seq, identity_map(32, 32), disk, 0.1, 512);
    bool ok = r.k0.has_value() && *r.k0 <= 4;
    double worst = 0.0;
    for (const auto& s : r.steps) {
        if (r.k0 && s.k >= *r.k0) ok = ok && s.exterior_inclusion && s.interior_inclusion;
        ok = ok && s.discrepancy <= s.budget;
        worst = std::max(worst, s.discrepancy / s.budget);
    }
    return {ok, fmt("k0=%s over 8 maps, max discrepancy/budget=%.3f",
                    r.k0 ? std::to_string(*r.k0).c_str() : "NOT_FOUND", worst)};
}

Outcome hardness_trend() {
    const Json base = read_json_file(std::string(JACPROBE_FIXTURES) + "/trend_baseline.json");
    const auto dir = scratch();
    const auto csv = (dir / "trend.csv").string();
    const auto t = std::chrono::steady_clock::now();
    const int code = cli({"sweep", "--N", "2,4,8", "--c", "1", "--L", "1.05", "--tau", "0.5", "--restarts", "5",
                          "--grid", "64x64", "--seed", std::to_string(base["seed"].get<int>()), "-o", csv});
    const double s = seconds_since(t);
    if (code != 0) return {false, "sweep failed"};
    const auto rows = read_csv(csv);
    std::vector<double> area;
    for (std::size_t k = 1; k < rows.size(); ++k) area.push_back(std::stod(rows[k][4]));
    if (area.size() != 3) return {false, "sweep did not produce three rows"};

    bool reproduces = true;
    for (std::size_t k = 0; k < 3; ++k)
        reproduces = reproduces && std::abs(area[k] - base["mismatch_area"][k].get<double>()) <= 1e-12;
    bool monotone = true;
    for (std::size_t k = 1; k < 3; ++k) monotone = monotone && area[k] >= 0.9 * area[k - 1];
    const bool doubling = area[2] >= 2.0 * area[0];
    return {monotone && doubling && s < 600.0,
            fmt("mismatch N=2,4,8: %.6g %.6g %.6g (%s frozen baseline); non-decreasing within 10%%: %s; "
                "N=8 >= 2x N=2: %s; time=%.1fs",
                area[0], area[1], area[2], reproduces ? "matches" : "differs from", monotone ? "yes" : "no",
                doubling ? "yes" : "no", s)};
}

Outcome certificate_logic() {
    std::mt19937_64 rng(505);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int vacuous = 0, fuzzed = 0;
    while (fuzzed < 200) {
        const int n = 4 + fuzzed % 5;
        const auto map = testing::random_map(n, n, 0.4, rng);
        const auto rho = DensityField::sample(Rect::unit(), n, n, [&](const Point&) { return 0.3 + 3 * u(rng); });
        const double tau = 0.01 + 0.2 * u(rng);
        const double area = mismatch_area(map, rho, tau);
        if (area == 0.0) continue;
        const double delta = fuzzed % 3 == 0 ? area : area * (0.01 + 0.99 * u(rng));
        const StretchCertificate c(rho, SegmentSet({Segment({u(rng), u(rng)}, {u(rng), u(rng)})}), delta, u(rng),
                                   fuzzed % 4, 1.0 + u(rng));
        vacuous += evaluate_certificate(c, map, tau).verdict == Verdict::not_applicable;
        ++fuzzed;
    }

    const auto one = DensityField::constant(Rect::unit(), 16, 16, 1.0);
    const StretchCertificate trivial(one, SegmentSet({Segment({0.1, 0.5}, {0.9, 0.5})}), 0.01, 0.0, 3, 1.5);
    const bool holds = evaluate_certificate(trivial, identity_map(16, 16), 0.05).verdict == Verdict::holds;

    SolverConfig config;
    config.lipschitz_bound = 1.3;
    config.tau = 0.1;
    config.max_iterations = 40;
    auto state = start_refinement({8, 1.0}, 128, 128);
    bool confined = true, nested = true, ranged = true;
    for (int level = 1; level <= 3; ++level) {
        const auto next = refine_checkerboard(state, config, CheckerboardSpec(2, 1.0));
        const Rect& region = next.history.back().region;
        for (int j = 0; j < 128; ++j)
            for (int i = 0; i < 128; ++i) {
                if (next.density.at(i, j) != state.density.at(i, j) &&
                    !region.contains(state.density.pixel_center(i, j)))
                    confined = false;
                if (next.density.at(i, j) < 1.0 || next.density.at(i, j) > 2.0) ranged = false;
            }
        if (level > 1 && !next.history[level - 2].region.contains(region)) nested = false;
        state = next;
    }
    return {vacuous == 200 && holds && confined && nested && ranged,
            fmt("NOT_APPLICABLE %d/200; identity HOLDS: %s; 3 refinements confined: %s, nested: %s, in [1,2]: %s",
                vacuous, holds ? "yes" : "no", confined ? "yes" : "no", nested ? "yes" : "no",
                ranged ? "yes" : "no")};
}

Outcome sweep_determinism() {
    const auto dir = scratch();
    std::string reports[2], tables[2];
    for (int k = 0; k < 2; ++k) {
        const auto csv = (dir / ("det_" + std::to_string(k) + ".csv")).string();
        if (cli({"sweep", "--N", "2,4", "--c", "0.5,1", "--L", "1.2", "--tau", "0.2", "--restarts", "2", "--grid",
                 "32x32", "--max-iterations", "200", "--seed", "11", "-o", csv}) != 0)
            return {false, "sweep failed"};
        Json j = read_json_file((dir / ("det_" + std::to_string(k) + ".json")).string());
        j.erase("metadata");
        j.erase("csv");
        reports[k] = j.dump();
        std::ifstream in(csv);
        std::stringstream ss;
        ss << in.rdbuf();
        tables[k] = ss.str();
    }
    return {reports[0] == reports[1] && tables[0] == tables[1],
            fmt("report JSON identical without metadata: %s; CSV identical: %s",
                reports[0] == reports[1] ? "yes" : "no", tables[0] == tables[1] ? "yes" : "no")};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"constant density realization", constant_density},
        {"checkerboard integrals", checkerboard_integrals},
        {"jacobian and gradient correctness", jacobian_correctness},
        {"bi-Lipschitz estimator", bilipschitz_estimator},
        {"band gluing perturbation", band_gluing},
        {"truncation and L-infinity patching", linf_patching},
        {"image convergence verifier", image_convergence},
        {"hardness trend in N", hardness_trend},
        {"certificate logic and refinement support", certificate_logic},
        {"sweep determinism", sweep_determinism},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome r;
        try {
            r = criteria[k].second();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        failed += !r.pass;
        std::printf("criterion %zu %s: %s (%s)\n", k + 1, r.pass ? "PASS" : "FAIL", criteria[k].first,
                    r.detail.c_str());
        std::fflush(stdout);
    }
    fs::remove_all(scratch());
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
