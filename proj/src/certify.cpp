#include "jacprobe/certify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace jacprobe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Unit right singular vector for the largest singular value of d.
Point top_direction(const Mat2& d) {
    Eigen::SelfAdjointEigenSolver<Mat2> es(d.transpose() * d);
    return es.eigenvectors().col(1).normalized();
}

int checkerboard_rows(const Rect& r, int cells) {
    return std::max(1, static_cast<int>(std::lround(cells * r.height() / r.width())));
}

// Segment of one active cell width through the barycenter of the triangle
// with the largest top singular value (among those centered in the active
// region), along its most stretched direction. Halved at most twice to fit,
// otherwise dropped.
std::optional<Segment> max_stretch_segment(const PiecewiseAffineMap& map,
                                           const RefinementState& state) {
    double best = -1.0;
    std::size_t best_t = 0;
    Point best_center;
    for (std::size_t t = 0; t < map.triangle_count(); ++t) {
        const auto tri = map.triangle(t);
        Point c = Point::Zero();
        for (auto v : tri) {
            const int i = static_cast<int>(v % static_cast<std::size_t>(map.nx() + 1));
            const int j = static_cast<int>(v / static_cast<std::size_t>(map.nx() + 1));
            c += map.domain_vertex(i, j) / 3.0;
        }
        if (!state.active.contains(c)) continue;
        const double s = singular_values(map.differential(t)).max;
        if (s > best) {
            best = s;
            best_t = t;
            best_center = c;
        }
    }
    if (best < 0.0) return std::nullopt;
    const Point dir = top_direction(map.differential(best_t));
    double half = 0.5 * state.active.width() / state.active_cells;
    for (int k = 0; k < 3; ++k, half *= 0.5) {
        const Point p = best_center - half * dir, q = best_center + half * dir;
        if (state.active.contains(p) && state.active.contains(q)) return Segment(p, q);
    }
    return std::nullopt;
}

} // namespace

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

StretchCertificate::StretchCertificate(DensityField density, SegmentSet segments, double delta,
                                       double kappa, int level, double lipschitz_bound)
    : density_(std::move(density)),
      segments_(std::move(segments)),
      delta_(delta),
      kappa_(kappa),
      level_(level),
      lipschitz_(lipschitz_bound) {
    if (segments_.empty()) throw Error("certificate needs at least one segment");
    if (!(delta_ > 0.0)) throw Error("certificate delta must be positive");
    if (level_ < 0) throw Error("certificate level must be nonnegative");
    if (!(lipschitz_ >= 1.0)) throw Error("lipschitz bound L must be >= 1");
    threshold_ = std::pow(1.0 + kappa_, level_) / lipschitz_;
    if (!(threshold_ > 0.0) || !std::isfinite(threshold_))
        throw Error("certificate threshold must be positive");
}

const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::holds:
        return "HOLDS";
    case Verdict::violated:
        return "VIOLATED";
    case Verdict::not_applicable:
        return "NOT_APPLICABLE";
    }
    return "unknown";
}

CertificateResult evaluate_certificate(const StretchCertificate& cert, const PiecewiseAffineMap& map,
                                       double tau) {
    CertificateResult r;
    r.mismatch_area = mismatch_area(map, cert.density(), tau);
    r.threshold = cert.threshold();
    r.stretch = stretch_pairs(map, cert.segments());

    const auto& dom = map.domain();
    const double edge = (map.evaluate({dom.x1(), dom.y0()}) - map.evaluate({dom.x0(), dom.y0()})).norm();
    r.absolute_threshold = std::pow(1.0 + cert.kappa(), cert.level()) * edge;
    r.absolute_holds = r.stretch.max_ratio >= r.absolute_threshold;

    if (r.mismatch_area >= cert.delta()) {
        r.verdict = Verdict::not_applicable;
        return r;
    }
    const std::size_t k = r.stretch.argmax();
    if (r.stretch.pairs[k].ratio >= r.threshold) {
        r.verdict = Verdict::holds;
        r.witness = k;
        r.witness_ratio = r.stretch.pairs[k].ratio;
    } else {
        r.verdict = Verdict::violated;
    }
    return r;
}

KappaEstimate estimate_kappa(const DensityField& density, const SegmentSet& segments,
                             const SolverConfig& config, int runs) {
    if (runs < 1) throw Error("kappa estimate needs at least one run");
    if (segments.empty()) throw Error("kappa estimate needs at least one segment");
    SolverConfig single = config;
    single.restarts = 0;
    const auto identity = identity_map(density.nx(), density.ny(), density.rect());
    KappaEstimate est{kInf, {}};
    for (int run = 0; run < runs; ++run) {
        const auto start =
            run == 0 ? identity
                     : jittered_map(identity, config.lipschitz_bound, config.restart_jitter,
                                    config.seed, run);
        const auto report = realize_jacobian(density, single, start);
        const double ratio = stretch_pairs(report.map, segments).max_ratio;
        est.max_ratios.push_back(ratio);
        est.kappa = std::min(est.kappa, config.lipschitz_bound * ratio - 1.0);
    }
    return est;
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

RefinementState start_refinement(const CheckerboardSpec& spec, int nx, int ny) {
    return {embedded_checkerboard(spec, nx, ny), 0, {}, spec.strip(), spec.cells()};
}

std::vector<Segment> mid_cell_segments(const RefinementState& state) {
    const Rect& r = state.active;
    const int cells = state.active_cells;
    const int rows = checkerboard_rows(r, cells);
    const double cw = r.width() / cells, ch = r.height() / rows;
    std::vector<Segment> out;
    for (int row = 0; row < rows; ++row)
        for (int c = 0; c + 1 < cells; ++c) {
            const Point p{r.x0() + (c + 0.5) * cw, r.y0() + (row + 0.5) * ch};
            out.emplace_back(p, p + Point{cw, 0.0});
        }
    return out;
}

RefinementState refine_checkerboard(const RefinementState& state, const SolverConfig& config,
                                    const CheckerboardSpec& inner) {
    const DensityField& rho = state.density;
    SolveReport solved = [&] {
        try {
            return realize_jacobian(rho, config, identity_map(rho.nx(), rho.ny(), rho.rect()));
        } catch (const Error& e) {
            throw RefinementError(std::string("solver failed: ") + e.what(), state);
        }
    }();
    try {
        require_nondegenerate(solved.map);
    } catch (const Error& e) {
        throw RefinementError(std::string("solver failed: ") + e.what(), state);
    }

    std::vector<Segment> candidates = mid_cell_segments(state);
    if (auto extra = max_stretch_segment(solved.map, state)) {
        const bool crosses = std::any_of(candidates.begin(), candidates.end(), [&](const Segment& s) {
            return interiors_intersect(s, *extra);
        });
        if (!crosses) candidates.push_back(*extra);
    }
    if (candidates.empty())
        throw RefinementError("no candidate segments in the active region", state);
    const auto stretch = stretch_pairs(solved.map, SegmentSet(std::move(candidates)));
    const StretchPair& chosen = stretch.pairs[stretch.argmax()];

    const Segment& seg = chosen.segment;
    const double pad = 0.25 * seg.length();
    const Rect around(std::min(seg.p().x(), seg.q().x()) - pad, std::min(seg.p().y(), seg.q().y()) - pad,
                      std::max(seg.p().x(), seg.q().x()) + pad, std::max(seg.p().y(), seg.q().y()) + pad);
    const Rect region = [&] {
        try {
            return around.clipped_to(rho.rect()).clipped_to(state.active);
        } catch (const Error&) {
            throw RefinementError("refinement rectangle is empty", state);
        }
    }();

    std::vector<std::size_t> inside;
    double lo = kInf, hi = -kInf;
    for (int j = 0; j < rho.ny(); ++j)
        for (int i = 0; i < rho.nx(); ++i)
            if (region.contains(rho.pixel_center(i, j))) {
                inside.push_back(rho.index(i, j));
                lo = std::min(lo, rho.at(i, j));
                hi = std::max(hi, rho.at(i, j));
            }
    if (inside.empty()) throw RefinementError("refinement rectangle holds no pixels", state);
    if (hi - lo < 1e-12) {
        lo = rho.declared_range().lo;
        hi = rho.declared_range().hi;
    }

    // the segment carries inner.cells() columns, so U holds a few more
    const int cols = std::max(inner.cells() + 1,
                              static_cast<int>(std::lround(region.width() * inner.cells() / seg.length())));
    std::vector<double> values = rho.values();
    for (std::size_t k : inside) {
        const int i = static_cast<int>(k % static_cast<std::size_t>(rho.nx()));
        const int j = static_cast<int>(k / static_cast<std::size_t>(rho.nx()));
        values[k] = checkerboard_value(region, cols, rho.pixel_center(i, j), hi, lo);
    }

    RefinementState next{DensityField(rho.rect(), rho.nx(), rho.ny(), std::move(values),
                                      rho.declared_range()),
                         state.level + 1, state.history, region, cols};
    next.history.push_back({seg, chosen.ratio, region, region.width() / state.active.width(),
                            cols, ValueRange{lo, hi}, solved.mismatch_area});
    return next;
}

// ---------------------------------------------------------------------------
// Image convergence
// ---------------------------------------------------------------------------

RasterMask rasterize_image(const PiecewiseAffineMap& map, const RasterMask& region,
                           const Rect& rect, int nx, int ny) {
    RasterMask out(rect, nx, ny);
    const double hx = out.pixel_width(), hy = out.pixel_height();
    const auto& rr = region.rect();
    for (std::size_t t = 0; t < map.triangle_count(); ++t) {
        const auto tri = map.triangle(t);
        std::array<Point, 3> img, dom;
        for (int m = 0; m < 3; ++m) {
            img[m] = map.vertices()[tri[m]];
            const int i = static_cast<int>(tri[m] % static_cast<std::size_t>(map.nx() + 1));
            const int j = static_cast<int>(tri[m] / static_cast<std::size_t>(map.nx() + 1));
            dom[m] = map.domain_vertex(i, j);
        }
        Mat2 e;
        e.col(0) = img[1] - img[0];
        e.col(1) = img[2] - img[0];
        const double det = e.determinant();
        if (std::abs(det) < kDegenerateArea) continue;
        const Mat2 inv = e.inverse();

        double bx0 = kInf, by0 = kInf, bx1 = -kInf, by1 = -kInf;
        for (const auto& p : img) {
            bx0 = std::min(bx0, p.x());
            bx1 = std::max(bx1, p.x());
            by0 = std::min(by0, p.y());
            by1 = std::max(by1, p.y());
        }
        const int i0 = std::max(0, static_cast<int>(std::floor((bx0 - rect.x0()) / hx - 0.5)));
        const int i1 = std::min(nx - 1, static_cast<int>(std::ceil((bx1 - rect.x0()) / hx - 0.5)));
        const int j0 = std::max(0, static_cast<int>(std::floor((by0 - rect.y0()) / hy - 0.5)));
        const int j1 = std::min(ny - 1, static_cast<int>(std::ceil((by1 - rect.y0()) / hy - 0.5)));
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) {
                if (out.at(i, j)) continue;
                const Point c = out.pixel_center(i, j);
                const Point l = inv * (c - img[0]);
                constexpr double tol = 1e-12;
                if (l.x() < -tol || l.y() < -tol || l.x() + l.y() > 1.0 + tol) continue;
                const Point x = dom[0] + l.x() * (dom[1] - dom[0]) + l.y() * (dom[2] - dom[0]);
                if (!rr.contains(x)) continue;
                const auto [pi, pj] = region.pixel_of(x);
                if (region.at(pi, pj)) out.set(i, j);
            }
    }
    return out;
}

namespace {

double boundary_band_area(const RasterMask& m) {
    std::size_t n = 0;
    for (int j = 0; j < m.ny(); ++j)
        for (int i = 0; i < m.nx(); ++i) {
            if (!m.at(i, j)) continue;
            const bool edge = i == 0 || j == 0 || i == m.nx() - 1 || j == m.ny() - 1 ||
                              !m.at(i - 1, j) || !m.at(i + 1, j) || !m.at(i, j - 1) ||
                              !m.at(i, j + 1);
            if (edge) ++n;
        }
    return static_cast<double>(n) * m.cell_area();
}

} // namespace

ImageConvergenceReport verify_image_convergence(const std::vector<PiecewiseAffineMap>& sequence,
                                                const PiecewiseAffineMap& limit,
                                                const RasterMask& region, double eps, int raster) {
    if (!(eps > 0.0)) throw Error("eps must be positive");
    if (sequence.empty()) throw Error("map sequence is empty");
    if (raster < 8) throw Error("raster resolution too small");
    if (region.empty()) throw Error("region is empty");
    require_nondegenerate(limit);
    for (const auto& m : sequence) {
        require_nondegenerate(m);
        if (!(m.domain() == limit.domain())) throw Error("maps have different domains");
    }
    if (!limit.domain().contains(region.rect(), 1e-12))
        throw Error("region extends outside the map domain");

    // Bounding box of every image of the region's pixel centers.
    double bx0 = kInf, by0 = kInf, bx1 = -kInf, by1 = -kInf;
    auto extend = [&](const PiecewiseAffineMap& m) {
        for (int j = 0; j < region.ny(); ++j)
            for (int i = 0; i < region.nx(); ++i) {
                if (!region.at(i, j)) continue;
                const Point p = m.evaluate(region.pixel_center(i, j));
                bx0 = std::min(bx0, p.x());
                bx1 = std::max(bx1, p.x());
                by0 = std::min(by0, p.y());
                by1 = std::max(by1, p.y());
            }
    };
    extend(limit);
    for (const auto& m : sequence) extend(m);
    const double pixel = std::max({bx1 - bx0, by1 - by0, 1e-9}) / raster;
    // Images of whole pixels reach past the images of their centers.
    const double pad = eps + 4.0 * pixel + 2.0 * std::hypot(region.pixel_width(), region.pixel_height());
    const int nx = static_cast<int>(std::ceil((bx1 - bx0 + 2 * pad) / pixel));
    const int ny = static_cast<int>(std::ceil((by1 - by0 + 2 * pad) / pixel));
    const Rect rect(bx0 - pad, by0 - pad, bx0 - pad + nx * pixel, by0 - pad + ny * pixel);

    ImageConvergenceReport report;
    report.raster_rect = rect;
    report.raster_nx = nx;
    report.raster_ny = ny;
    report.eps = eps;

    const RasterMask target = rasterize_image(limit, region, rect, nx, ny);
    const Neighborhoods hood = neighborhoods(target, eps);

    for (std::size_t k = 0; k < sequence.size(); ++k) {
        const auto& m = sequence[k];
        const RasterMask image = rasterize_image(m, region, rect, nx, ny);
        double integral = 0.0;
        for (int j = 0; j < region.ny(); ++j)
            for (int i = 0; i < region.nx(); ++i)
                if (region.at(i, j)) integral += jacobian_at(m, region.pixel_center(i, j));
        integral *= region.cell_area();
        ImageStep step;
        step.k = static_cast<int>(k) + 1;
        step.exterior_inclusion = image.subset_of(hood.exterior);
        step.interior_inclusion = hood.interior.subset_of(image);
        step.image_area = image.measure();
        step.jacobian_integral = integral;
        step.discrepancy = std::abs(step.image_area - integral);
        step.budget = 2.0 * boundary_band_area(image);
        report.steps.push_back(step);
    }

    std::size_t first = report.steps.size();
    while (first > 0 && report.steps[first - 1].exterior_inclusion &&
           report.steps[first - 1].interior_inclusion)
        --first;
    if (first < report.steps.size()) report.k0 = static_cast<int>(first) + 1;
    return report;
}

} // namespace jacprobe
