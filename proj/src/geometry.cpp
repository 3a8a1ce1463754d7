#include "jacprobe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "jacprobe/error.hpp"

namespace jacprobe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double cross(const Point& a, const Point& b, const Point& c) {
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

// One-dimensional squared distance transform (Felzenszwalb-Huttenlocher)
// with sample spacing `h`: out[p] = min_q h^2 (p-q)^2 + f[q]. Infinite f[q]
// entries are not sources.
void distance_transform_1d(const std::vector<double>& f, double h, std::vector<double>& out,
                           std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    const double w = h * h;
    auto meet = [&](int q, int r) {
        return ((f[q] + w * q * q) - (f[r] + w * r * r)) / (2.0 * w * (q - r));
    };
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (!std::isfinite(f[q])) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s = meet(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = meet(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        std::fill(out.begin(), out.end(), kInf);
        return;
    }
    int j = 0;
    for (int p = 0; p < n; ++p) {
        while (z[j + 1] < p) ++j;
        const double d = p - v[j];
        out[p] = w * d * d + f[v[j]];
    }
}

} // namespace

// ---------------------------------------------------------------------------

Rect::Rect(double x0, double y0, double x1, double y1) : x0_(x0), y0_(y0), x1_(x1), y1_(y1) {
    if (!(std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) && std::isfinite(y1)))
        throw Error("rect coordinates must be finite");
    if (!(x0 < x1 && y0 < y1))
        throw Error("rect must satisfy x0 < x1 and y0 < y1");
}

bool Rect::contains(const Point& p, double tol) const noexcept {
    return p.x() >= x0_ - tol && p.x() <= x1_ + tol && p.y() >= y0_ - tol && p.y() <= y1_ + tol;
}

bool Rect::contains(const Rect& r, double tol) const noexcept {
    return r.x0_ >= x0_ - tol && r.x1_ <= x1_ + tol && r.y0_ >= y0_ - tol && r.y1_ <= y1_ + tol;
}

Rect Rect::clipped_to(const Rect& other) const {
    const double ax = std::max(x0_, other.x0_), bx = std::min(x1_, other.x1_);
    const double ay = std::max(y0_, other.y0_), by = std::min(y1_, other.y1_);
    if (!(ax < bx && ay < by)) throw Error("rectangles do not overlap");
    return {ax, ay, bx, by};
}

// ---------------------------------------------------------------------------

Segment::Segment(Point p, Point q) : p_(std::move(p)), q_(std::move(q)) {
    if (!p_.allFinite() || !q_.allFinite()) throw Error("segment endpoints must be finite");
    if (p_ == q_) throw Error("segment endpoints coincide");
}

bool interiors_intersect(const Segment& a, const Segment& b) {
    const int o1 = sign(cross(a.p(), a.q(), b.p()));
    const int o2 = sign(cross(a.p(), a.q(), b.q()));
    const int o3 = sign(cross(b.p(), b.q(), a.p()));
    const int o4 = sign(cross(b.p(), b.q(), a.q()));
    if (o1 == 0 && o2 == 0) {
        // Collinear: overlap of the parameter intervals along a's direction.
        const Point d = a.q() - a.p();
        const double len2 = d.squaredNorm();
        const double t0 = (b.p() - a.p()).dot(d) / len2;
        const double t1 = (b.q() - a.p()).dot(d) / len2;
        const double lo = std::max(0.0, std::min(t0, t1));
        const double hi = std::min(1.0, std::max(t0, t1));
        return hi > lo;
    }
    return o1 * o2 < 0 && o3 * o4 < 0;
}

SegmentSet::SegmentSet(std::vector<Segment> segments) : segments_(std::move(segments)) {
    for (std::size_t i = 0; i < segments_.size(); ++i)
        for (std::size_t j = i + 1; j < segments_.size(); ++j)
            if (interiors_intersect(segments_[i], segments_[j]))
                throw Error("segments " + std::to_string(i) + " and " + std::to_string(j) +
                            " intersect");
}

// ---------------------------------------------------------------------------

RasterMask::RasterMask(const Rect& rect, int nx, int ny, bool value)
    : rect_(rect), nx_(nx), ny_(ny) {
    if (nx < 1 || ny < 1) throw Error("raster dimensions must be positive");
    bits_.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), value ? 1 : 0);
}

RasterMask::RasterMask(const Rect& rect, int nx, int ny, std::vector<std::uint8_t> bits)
    : rect_(rect), nx_(nx), ny_(ny), bits_(std::move(bits)) {
    if (nx < 1 || ny < 1) throw Error("raster dimensions must be positive");
    if (bits_.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny))
        throw Error("raster bit count does not match nx*ny");
    for (auto& b : bits_) b = b ? 1 : 0;
}

RasterMask RasterMask::rasterize(const Rect& rect, int nx, int ny,
                                 const std::function<bool(const Point&)>& inside) {
    RasterMask m(rect, nx, ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (inside(m.pixel_center(i, j))) m.set(i, j);
    return m;
}

Point RasterMask::pixel_center(int i, int j) const {
    return {rect_.x0() + (i + 0.5) * pixel_width(), rect_.y0() + (j + 0.5) * pixel_height()};
}

std::pair<int, int> RasterMask::pixel_of(const Point& p) const {
    int i = static_cast<int>(std::floor((p.x() - rect_.x0()) / pixel_width()));
    int j = static_cast<int>(std::floor((p.y() - rect_.y0()) / pixel_height()));
    return {std::clamp(i, 0, nx_ - 1), std::clamp(j, 0, ny_ - 1)};
}

std::size_t RasterMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

bool RasterMask::same_grid(const RasterMask& other) const noexcept {
    return nx_ == other.nx_ && ny_ == other.ny_ && rect_ == other.rect_;
}

bool RasterMask::subset_of(const RasterMask& other) const {
    if (!same_grid(other)) throw Error("raster grids differ");
    for (std::size_t k = 0; k < bits_.size(); ++k)
        if (bits_[k] && !other.bits_[k]) return false;
    return true;
}

RasterMask RasterMask::complement() const {
    RasterMask out = *this;
    for (auto& b : out.bits_) b = b ? 0 : 1;
    return out;
}

RasterMask RasterMask::operator&(const RasterMask& other) const {
    if (!same_grid(other)) throw Error("raster grids differ");
    RasterMask out = *this;
    for (std::size_t k = 0; k < bits_.size(); ++k) out.bits_[k] = bits_[k] & other.bits_[k];
    return out;
}

RasterMask RasterMask::operator|(const RasterMask& other) const {
    if (!same_grid(other)) throw Error("raster grids differ");
    RasterMask out = *this;
    for (std::size_t k = 0; k < bits_.size(); ++k) out.bits_[k] = bits_[k] | other.bits_[k];
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> squared_distance_to(const RasterMask& mask) {
    const int nx = mask.nx(), ny = mask.ny();
    const int n = std::max(nx, ny);
    std::vector<double> grid(mask.size(), kInf);
    std::vector<double> f(n), out(n), z(n + 1);
    std::vector<int> v(n);

    // Columns of the row transform use spacing hx.
    f.resize(nx);
    out.resize(nx);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) f[i] = mask.at(i, j) ? 0.0 : kInf;
        distance_transform_1d(f, mask.pixel_width(), out, v, z);
        for (int i = 0; i < nx; ++i) grid[mask.index(i, j)] = out[i];
    }
    f.resize(ny);
    out.resize(ny);
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) f[j] = grid[mask.index(i, j)];
        distance_transform_1d(f, mask.pixel_height(), out, v, z);
        for (int j = 0; j < ny; ++j) grid[mask.index(i, j)] = out[j];
    }
    return grid;
}

Neighborhoods neighborhoods(const RasterMask& image_mask, double eps) {
    if (!(eps > 0.0)) throw Error("eps must be positive");
    if (image_mask.empty()) throw Error("empty set has no neighborhoods");

    const int nx = image_mask.nx(), ny = image_mask.ny();
    const double hx = image_mask.pixel_width(), hy = image_mask.pixel_height();
    const double eps2 = eps * eps;

    RasterMask ext(image_mask.rect(), nx, ny);
    const auto d2 = squared_distance_to(image_mask);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (d2[image_mask.index(i, j)] < eps2) ext.set(i, j);

    // Center-to-closed-cell gap along one axis, offset d in pixels.
    auto gap2 = [](int d, double h) {
        if (d == 0) return 0.0;
        const double g = (std::abs(d) - 0.5) * h;
        return g * g;
    };
    const int rx = static_cast<int>(std::floor(eps / hx + 0.5)) + 1;
    const int ry = static_cast<int>(std::floor(eps / hy + 0.5)) + 1;

    // Row pass over unset cells (outside the rect counts as unset).
    std::vector<double> row_min(image_mask.size(), kInf);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            double best = kInf;
            for (int d = -rx; d <= rx; ++d) {
                const int ii = i + d;
                if (ii < 0 || ii >= nx || !image_mask.at(ii, j)) best = std::min(best, gap2(d, hx));
            }
            row_min[image_mask.index(i, j)] = best;
        }
    }
    RasterMask core(image_mask.rect(), nx, ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            if (!image_mask.at(i, j)) continue;
            double best = kInf;
            for (int e = -ry; e <= ry; ++e) {
                const int jj = j + e;
                const double across = (jj < 0 || jj >= ny) ? 0.0 : row_min[image_mask.index(i, jj)];
                best = std::min(best, across + gap2(e, hy));
            }
            if (best > eps2) core.set(i, j);
        }
    }
    return {std::move(ext), std::move(core)};
}

RasterMask connected_component(const RasterMask& mask, const Point& seed) {
    if (!mask.rect().contains(seed)) throw Error("seed outside set");
    const auto [si, sj] = mask.pixel_of(seed);
    if (!mask.at(si, sj)) throw Error("seed outside set");

    RasterMask out(mask.rect(), mask.nx(), mask.ny());
    std::vector<std::pair<int, int>> stack{{si, sj}};
    out.set(si, sj);
    while (!stack.empty()) {
        const auto [i, j] = stack.back();
        stack.pop_back();
        const std::pair<int, int> nbrs[4] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
        for (const auto& [a, b] : nbrs) {
            if (a < 0 || b < 0 || a >= mask.nx() || b >= mask.ny()) continue;
            if (mask.at(a, b) && !out.at(a, b)) {
                out.set(a, b);
                stack.emplace_back(a, b);
            }
        }
    }
    return out;
}

} // namespace jacprobe
