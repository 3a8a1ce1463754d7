#include "jacprobe/plmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jacprobe/error.hpp"

namespace jacprobe {

namespace {

double cross2(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

double orient(const Point& a, const Point& b, const Point& c) { return cross2(b - a, c - a); }

bool on_segment(const Point& a, const Point& b, const Point& p) {
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
           std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
}

// Closed segments share at least one point.
bool closed_segments_meet(const Point& a, const Point& b, const Point& c, const Point& d) {
    const double o1 = orient(a, b, c), o2 = orient(a, b, d);
    const double o3 = orient(c, d, a), o4 = orient(c, d, b);
    if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0)))
        return true;
    return (o1 == 0 && on_segment(a, b, c)) || (o2 == 0 && on_segment(a, b, d)) ||
           (o3 == 0 && on_segment(c, d, a)) || (o4 == 0 && on_segment(c, d, b));
}

} // namespace

// ---------------------------------------------------------------------------

PiecewiseAffineMap::PiecewiseAffineMap(int nx, int ny, std::vector<Point> vertices,
                                       const Rect& domain)
    : nx_(nx), ny_(ny), domain_(domain), vertices_(std::move(vertices)) {
    if (nx < 1 || ny < 1) throw Error("map grid dimensions must be positive");
    if (vertices_.size() != static_cast<std::size_t>(nx + 1) * static_cast<std::size_t>(ny + 1))
        throw Error("vertex count must equal (nx+1)(ny+1)");
    for (const auto& v : vertices_)
        if (!v.allFinite()) throw Error("vertex coordinates must be finite");
}

PiecewiseAffineMap PiecewiseAffineMap::from_function(int nx, int ny,
                                                     const std::function<Point(const Point&)>& f,
                                                     const Rect& domain) {
    if (nx < 1 || ny < 1) throw Error("map grid dimensions must be positive");
    std::vector<Point> v;
    v.reserve(static_cast<std::size_t>(nx + 1) * (ny + 1));
    const double hx = domain.width() / nx, hy = domain.height() / ny;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            // Exact edge coordinates on the last row/column.
            const double x = i == nx ? domain.x1() : domain.x0() + i * hx;
            const double y = j == ny ? domain.y1() : domain.y0() + j * hy;
            v.push_back(f(Point{x, y}));
        }
    return {nx, ny, std::move(v), domain};
}

Point PiecewiseAffineMap::domain_vertex(int i, int j) const {
    const double x = i == nx_ ? domain_.x1() : domain_.x0() + i * cell_width();
    const double y = j == ny_ ? domain_.y1() : domain_.y0() + j * cell_height();
    return {x, y};
}

std::array<std::size_t, 3> PiecewiseAffineMap::triangle(std::size_t t) const {
    const std::size_t c = t / 2;
    const int i = static_cast<int>(c % static_cast<std::size_t>(nx_));
    const int j = static_cast<int>(c / static_cast<std::size_t>(nx_));
    const auto sw = vertex_index(i, j), se = vertex_index(i + 1, j);
    const auto ne = vertex_index(i + 1, j + 1), nw = vertex_index(i, j + 1);
    if (t % 2 == 0) return {sw, se, ne};
    return {sw, ne, nw};
}

Mat2 PiecewiseAffineMap::domain_edge_inverse(std::size_t t) const {
    const double hx = cell_width(), hy = cell_height();
    Mat2 inv;
    if (t % 2 == 0) {
        // edges (hx, 0), (hx, hy)
        inv << 1.0 / hx, -1.0 / hy, 0.0, 1.0 / hy;
    } else {
        // edges (hx, hy), (0, hy)
        inv << 1.0 / hx, 0.0, -1.0 / hx, 1.0 / hy;
    }
    return inv;
}

Mat2 PiecewiseAffineMap::differential(std::size_t t) const {
    const auto tri = triangle(t);
    Mat2 y;
    y.col(0) = vertices_[tri[1]] - vertices_[tri[0]];
    y.col(1) = vertices_[tri[2]] - vertices_[tri[0]];
    return y * domain_edge_inverse(t);
}

double PiecewiseAffineMap::signed_image_area(std::size_t t) const {
    const auto tri = triangle(t);
    return 0.5 * orient(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
}

std::size_t PiecewiseAffineMap::locate(const Point& p) const {
    if (!domain_.contains(p, 1e-12)) throw Error("point outside the map domain");
    const double fx = (p.x() - domain_.x0()) / cell_width();
    const double fy = (p.y() - domain_.y0()) / cell_height();
    const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, nx_ - 1);
    const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, ny_ - 1);
    const double u = fx - i, v = fy - j;
    const std::size_t c = static_cast<std::size_t>(j) * nx_ + i;
    return v <= u ? 2 * c : 2 * c + 1;
}

Point PiecewiseAffineMap::evaluate(const Point& p) const {
    const std::size_t t = locate(p);
    const std::size_t c = t / 2;
    const int i = static_cast<int>(c % static_cast<std::size_t>(nx_));
    const int j = static_cast<int>(c / static_cast<std::size_t>(nx_));
    const double u = (p.x() - domain_.x0()) / cell_width() - i;
    const double v = (p.y() - domain_.y0()) / cell_height() - j;
    const Point& sw = vertex(i, j);
    const Point& ne = vertex(i + 1, j + 1);
    if (t % 2 == 0) return sw + (u - v) * (vertex(i + 1, j) - sw) + v * (ne - sw);
    return sw + u * (ne - sw) + (v - u) * (vertex(i, j + 1) - sw);
}

PiecewiseAffineMap PiecewiseAffineMap::transformed(const Mat2& a, const Point& b) const {
    std::vector<Point> v;
    v.reserve(vertices_.size());
    for (const auto& p : vertices_) v.push_back(a * p + b);
    return {nx_, ny_, std::move(v), domain_};
}

PiecewiseAffineMap identity_map(int nx, int ny, const Rect& domain) {
    return PiecewiseAffineMap::from_function(nx, ny, [](const Point& p) { return p; }, domain);
}

// ---------------------------------------------------------------------------

void require_nondegenerate(const PiecewiseAffineMap& map) {
    for (std::size_t t = 0; t < map.triangle_count(); ++t)
        if (!(map.signed_image_area(t) >= kDegenerateArea))
            throw Error("map not a local homeomorphism");
}

std::vector<double> triangle_jacobians(const PiecewiseAffineMap& map) {
    require_nondegenerate(map);
    std::vector<double> j(map.triangle_count());
    for (std::size_t t = 0; t < j.size(); ++t) j[t] = map.differential(t).determinant();
    return j;
}

DensityField jacobian_field(const PiecewiseAffineMap& map) {
    require_nondegenerate(map);
    const double cell = map.cell_width() * map.cell_height();
    std::vector<double> v(static_cast<std::size_t>(map.nx()) * map.ny());
    for (std::size_t c = 0; c < v.size(); ++c)
        v[c] = (map.signed_image_area(2 * c) + map.signed_image_area(2 * c + 1)) / cell;
    return {map.domain(), map.nx(), map.ny(), std::move(v)};
}

double jacobian_at(const PiecewiseAffineMap& map, const Point& p) {
    const std::size_t t = map.locate(p);
    if (!(map.signed_image_area(t) >= kDegenerateArea))
        throw Error("map not a local homeomorphism");
    return map.differential(t).determinant();
}

SingularValues singular_values(const Mat2& m) {
    const double e = 0.5 * (m(0, 0) + m(1, 1));
    const double f = 0.5 * (m(0, 0) - m(1, 1));
    const double g = 0.5 * (m(1, 0) + m(0, 1));
    const double h = 0.5 * (m(1, 0) - m(0, 1));
    const double q = std::hypot(e, h);
    const double r = std::hypot(f, g);
    return {q + r, std::abs(q - r)};
}

bool globally_injective(const PiecewiseAffineMap& map) {
    for (std::size_t t = 0; t < map.triangle_count(); ++t)
        if (!(map.signed_image_area(t) >= kDegenerateArea)) return false;

    // Counter-clockwise boundary loop.
    std::vector<Point> loop;
    for (int i = 0; i < map.nx(); ++i) loop.push_back(map.vertex(i, 0));
    for (int j = 0; j < map.ny(); ++j) loop.push_back(map.vertex(map.nx(), j));
    for (int i = map.nx(); i > 0; --i) loop.push_back(map.vertex(i, map.ny()));
    for (int j = map.ny(); j > 0; --j) loop.push_back(map.vertex(0, j));

    const std::size_t n = loop.size();
    for (std::size_t a = 0; a < n; ++a) {
        const Point& p0 = loop[a];
        const Point& p1 = loop[(a + 1) % n];
        for (std::size_t b = a + 1; b < n; ++b) {
            const Point& q0 = loop[b];
            const Point& q1 = loop[(b + 1) % n];
            const bool adjacent = b == a + 1 || (a == 0 && b == n - 1);
            if (adjacent) {
                // Sharing one endpoint is fine; folding back onto each other is not.
                const Point& shared = b == a + 1 ? p1 : p0;
                const Point& u = b == a + 1 ? p0 : p1;
                const Point& w = b == a + 1 ? q1 : q0;
                if (orient(shared, u, w) == 0.0 && (u - shared).dot(w - shared) > 0.0) return false;
                continue;
            }
            if (closed_segments_meet(p0, p1, q0, q1)) return false;
        }
    }
    return true;
}

BiLipschitzEstimate estimate_bilipschitz(const PiecewiseAffineMap& map) {
    return {bilipschitz_constant(map), globally_injective(map)};
}

double bilipschitz_constant(const PiecewiseAffineMap& map) {
    require_nondegenerate(map);
    double l = 1.0;
    for (std::size_t t = 0; t < map.triangle_count(); ++t) {
        const auto s = singular_values(map.differential(t));
        l = std::max({l, s.max, 1.0 / s.min});
    }
    return l;
}

std::size_t StretchReport::argmax() const {
    if (pairs.empty()) throw Error("empty stretch report");
    std::size_t best = 0;
    for (std::size_t k = 1; k < pairs.size(); ++k)
        if (pairs[k].ratio > pairs[best].ratio) best = k;
    return best;
}

StretchReport stretch_pairs(const PiecewiseAffineMap& map, const SegmentSet& segments) {
    StretchReport report;
    report.min_ratio = std::numeric_limits<double>::infinity();
    report.max_ratio = 0.0;
    for (const auto& s : segments.segments()) {
        if (!map.domain().contains(s.p(), 1e-12) || !map.domain().contains(s.q(), 1e-12))
            throw Error("segment endpoint outside the map domain");
        const double ratio = (map.evaluate(s.q()) - map.evaluate(s.p())).norm() / s.length();
        report.pairs.push_back({s, ratio});
        report.min_ratio = std::min(report.min_ratio, ratio);
        report.max_ratio = std::max(report.max_ratio, ratio);
    }
    if (report.pairs.empty()) report.min_ratio = 0.0;
    return report;
}

} // namespace jacprobe
