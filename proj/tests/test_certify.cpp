#include "doctest.h"

#include "jacprobe/certify.hpp"
#include "support.hpp"

using namespace jacprobe;

namespace {

SegmentSet one_segment() { return SegmentSet({Segment({0.2, 0.3}, {0.7, 0.3})}); }

PiecewiseAffineMap dilation(int n, double s) {
    return PiecewiseAffineMap::from_function(n, n, [s](const Point& p) -> Point {
        const Point c(0.5, 0.5);
        return c + s * (p - c);
    });
}

RasterMask centered_disk(int n, double r) {
    return RasterMask::rasterize(Rect::unit(), n, n, [r](const Point& p) { return (p - Point(0.5, 0.5)).norm() < r; });
}

} // namespace

TEST_CASE("certificate thresholds") {
    const auto rho = DensityField::constant(Rect::unit(), 4, 4, 1.0);
    const StretchCertificate c(rho, one_segment(), 0.1, 0.5, 2, 1.5);
    CHECK(c.threshold() == doctest::Approx(2.25 / 1.5));
    CHECK_THROWS_AS(StretchCertificate(rho, SegmentSet(), 0.1, 0.5, 1, 1.5), Error);
    CHECK_THROWS_AS(StretchCertificate(rho, one_segment(), 0.0, 0.5, 1, 1.5), Error);
    CHECK_THROWS_AS(StretchCertificate(rho, one_segment(), 0.1, 0.5, -1, 1.5), Error);
    CHECK_THROWS_AS(StretchCertificate(rho, one_segment(), 0.1, 0.5, 1, 0.9), Error);
    CHECK_THROWS_AS(StretchCertificate(rho, one_segment(), 0.1, -1.0, 1, 1.5), Error);
}

TEST_CASE("identity within budget holds when the threshold is at most one") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto id = identity_map(8, 8);
    const auto rho = DensityField::constant(Rect::unit(), 8, 8, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double l = 1.0 + 2.0 * u(rng);
        const int level = trial % 4;
        // (1+kappa)^level <= L keeps the threshold at most one.
        const double kappa = level == 0 ? u(rng) : std::pow(l, 1.0 / level) * u(rng) - 1.0 + 1e-9;
        const StretchCertificate c(rho, SegmentSet({Segment({0.9 * u(rng), 0.25}, {0.9 * u(rng) + 0.05, 0.75})}),
                                   0.01 + u(rng), std::max(kappa, 0.0), level, l);
        if (c.threshold() > 1.0) continue;
        const auto r = evaluate_certificate(c, id, 0.05);
        CHECK(r.verdict == Verdict::holds);
        REQUIRE(r.witness.has_value());
        CHECK(r.witness_ratio == doctest::Approx(1.0));
    }
}

TEST_CASE("identity violates a threshold above one") {
    const auto rho = DensityField::constant(Rect::unit(), 8, 8, 1.0);
    const StretchCertificate c(rho, one_segment(), 0.1, 0.5, 2, 1.1);
    const auto r = evaluate_certificate(c, identity_map(8, 8), 0.05);
    CHECK(r.verdict == Verdict::violated);
    CHECK_FALSE(r.witness.has_value());
    CHECK(std::string(to_string(r.verdict)) == "VIOLATED");
    CHECK(r.absolute_threshold == doctest::Approx(2.25));
    CHECK_FALSE(r.absolute_holds);
}

TEST_CASE("certificates are vacuous once the mismatch reaches the budget") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 4 + trial % 5;
        const auto map = testing::random_map(n, n, 0.4, rng);
        const auto rho = DensityField::sample(Rect::unit(), n, n, [&](const Point&) { return 0.3 + 3 * u(rng); });
        const double tau = 0.01 + 0.2 * u(rng);
        const double area = mismatch_area(map, rho, tau);
        if (area == 0.0) continue;
        const double delta = trial % 3 == 0 ? area : area * (0.01 + 0.99 * u(rng));
        const StretchCertificate c(rho, SegmentSet({Segment({u(rng), u(rng)}, {u(rng), u(rng)})}), delta,
                                   u(rng), trial % 4, 1.0 + u(rng));
        const auto r = evaluate_certificate(c, map, tau);
        CHECK(r.verdict == Verdict::not_applicable);
        CHECK(r.mismatch_area == area);
        ++checked;
    }
    CHECK(checked >= 190);
}

TEST_CASE("kappa estimate") {
    SolverConfig config;
    config.lipschitz_bound = 1.2;
    config.max_iterations = 20;
    const auto rho = DensityField::constant(Rect::unit(), 8, 8, 1.0);
    const auto est = estimate_kappa(rho, one_segment(), config, 3);
    REQUIRE(est.max_ratios.size() == 3);
    CHECK(est.max_ratios[0] == doctest::Approx(1.0));
    double expected = 1e300;
    for (double r : est.max_ratios) expected = std::min(expected, 1.2 * r - 1.0);
    CHECK(est.kappa == expected);
    CHECK_THROWS_AS(estimate_kappa(rho, one_segment(), config, 0), Error);
}

TEST_CASE("refinement start") {
    const auto s = start_refinement({8, 1.0}, 64, 64);
    CHECK(s.level == 0);
    CHECK(s.history.empty());
    CHECK(s.active == Rect(0, 0, 1, 0.125));
    CHECK(s.density.values() == embedded_checkerboard({8, 1.0}, 64, 64).values());
    const auto segs = mid_cell_segments(s);
    REQUIRE(segs.size() == 7);
    CHECK(segs[0].p().isApprox(Point(1.0 / 16, 1.0 / 16)));
    CHECK(segs[0].q().isApprox(Point(3.0 / 16, 1.0 / 16)));
}

TEST_CASE("refinement changes the density only inside the chosen rectangle") {
    SolverConfig config;
    config.lipschitz_bound = 1.3;
    config.tau = 0.1;
    config.max_iterations = 40;
    const CheckerboardSpec inner(2, 1.0);
    auto state = start_refinement({8, 1.0}, 64, 64);
    for (int level = 1; level <= 3; ++level) {
        const auto next = refine_checkerboard(state, config, inner);
        REQUIRE(next.level == level);
        REQUIRE(next.history.size() == static_cast<std::size_t>(level));
        const Rect u = next.history.back().region;
        CHECK(next.active == u);
        int changed = 0;
        for (int j = 0; j < 64; ++j)
            for (int i = 0; i < 64; ++i) {
                const double before = state.density.at(i, j), after = next.density.at(i, j);
                if (before != after) {
                    ++changed;
                    CHECK(u.contains(state.density.pixel_center(i, j)));
                }
                CHECK(after >= 1.0);
                CHECK(after <= 2.0);
            }
        CHECK(changed > 0);
        CHECK(next.density.declared_range() == ValueRange{1.0, 2.0});
        if (level > 1) CHECK(next.history[level - 2].region.contains(u));
        state = next;
    }
}

TEST_CASE("refinement reports solver failures with the partial state") {
    SolverConfig config;
    config.lipschitz_bound = 0.5; // invalid, the solver rejects it
    const auto state = start_refinement({4, 1.0}, 16, 16);
    try {
        refine_checkerboard(state, config, CheckerboardSpec(2, 1.0));
        FAIL("expected a refinement error");
    } catch (const RefinementError& e) {
        CHECK(std::string(e.what()).rfind("solver failed: ", 0) == 0);
        CHECK(e.partial().level == 0);
    }
}

TEST_CASE("image rasterization") {
    const auto id = identity_map(16, 16);
    const auto disk = centered_disk(64, 0.3);
    CHECK(rasterize_image(id, disk, Rect::unit(), 64, 64) == disk);
    const auto half = dilation(16, 0.5);
    const auto img = rasterize_image(half, RasterMask(Rect::unit(), 64, 64, true), Rect::unit(), 64, 64);
    CHECK(img.measure() == doctest::Approx(0.25));
}

TEST_CASE("constant sequences converge at once") {
    const auto id = identity_map(16, 16);
    const auto disk = centered_disk(128, 0.3);
    const auto r = verify_image_convergence({id, id, id}, id, disk, 0.05, 256);
    REQUIRE(r.k0.has_value());
    CHECK(*r.k0 == 1);
    for (const auto& s : r.steps) {
        CHECK(s.exterior_inclusion);
        CHECK(s.interior_inclusion);
        CHECK(s.discrepancy <= s.budget);
    }
}

TEST_CASE("dilations converge to the identity") {
    std::vector<PiecewiseAffineMap> seq;
    for (int k = 1; k <= 8; ++k) seq.push_back(dilation(32, 1.0 + 1.0 / k));
    const auto disk = centered_disk(256, 0.3);
    const auto r = verify_image_convergence(seq, identity_map(32, 32), disk, 0.1, 512);
    REQUIRE(r.k0.has_value());
    CHECK(*r.k0 <= 4);
    for (const auto& s : r.steps) {
        if (s.k >= *r.k0) {
            CHECK(s.exterior_inclusion);
            CHECK(s.interior_inclusion);
        }
        CHECK(s.discrepancy <= s.budget);
    }
    // Once both inclusions hold they keep holding along a sequence that
    // approaches the limit monotonically.
    bool held = false;
    for (const auto& s : r.steps) {
        const bool both = s.exterior_inclusion && s.interior_inclusion;
        if (held) CHECK(both);
        held = held || both;
    }
    CHECK_FALSE(r.steps.front().exterior_inclusion);
}

TEST_CASE("shrinking sequences and a diverging tail") {
    std::vector<PiecewiseAffineMap> seq;
    for (int k = 1; k <= 6; ++k) seq.push_back(dilation(16, 1.0 - 0.5 / (k + 1)));
    const auto disk = centered_disk(128, 0.3);
    const auto r = verify_image_convergence(seq, identity_map(16, 16), disk, 0.06, 256);
    REQUIRE(r.k0.has_value());
    bool held = false;
    for (const auto& s : r.steps) {
        const bool both = s.exterior_inclusion && s.interior_inclusion;
        if (held) CHECK(both);
        held = held || both;
    }
    seq.push_back(dilation(16, 2.0));
    CHECK_FALSE(verify_image_convergence(seq, identity_map(16, 16), disk, 0.06, 256).k0.has_value());
}

TEST_CASE("image convergence errors") {
    const auto id = identity_map(4, 4);
    const auto disk = centered_disk(32, 0.3);
    CHECK_THROWS_WITH_AS(verify_image_convergence({id}, id, disk, 0.0), "eps must be positive", Error);
    CHECK_THROWS_WITH_AS(verify_image_convergence({}, id, disk, 0.1), "map sequence is empty", Error);
    CHECK_THROWS_WITH_AS(verify_image_convergence({id}, id, RasterMask(Rect::unit(), 8, 8), 0.1), "region is empty",
                         Error);
}
