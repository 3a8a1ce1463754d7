#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "jacprobe/density.hpp"
#include "jacprobe/geometry.hpp"
#include "jacprobe/plmap.hpp"

namespace testing {

using namespace jacprobe;

inline RasterMask random_mask(const Rect& r, int nx, int ny, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution on(p);
    RasterMask m(r, nx, ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (on(rng)) m.set(i, j);
    return m;
}

// Identity grid with every vertex moved by up to `amp` cell sizes, redrawn
// until all triangles are positively oriented.
inline PiecewiseAffineMap random_map(int nx, int ny, double amp, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double hx = 1.0 / nx, hy = 1.0 / ny;
    for (;;) {
        std::vector<Point> v;
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i)
                v.emplace_back(i * hx + amp * hx * u(rng), j * hy + amp * hy * u(rng));
        PiecewiseAffineMap m(nx, ny, std::move(v));
        bool ok = true;
        for (std::size_t t = 0; t < m.triangle_count(); ++t) ok = ok && m.signed_image_area(t) > 1e-10;
        if (ok) return m;
    }
}

inline Eigen::Matrix2d rotation(double a) {
    Eigen::Matrix2d r;
    r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return r;
}

inline double sup_diff(const DensityField& a, const DensityField& b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.values().size(); ++k)
        d = std::max(d, std::abs(a.values()[k] - b.values()[k]));
    return d;
}

// 1 + eps/2 on a disk, rising quadratically outside it to a maximum of 2.
inline DensityField basin_field(int n, double eps, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Point c{0.3 + 0.4 * u(rng), 0.3 + 0.4 * u(rng)};
    const double r0 = 0.1 + 0.08 * u(rng);
    const double fx = 1 + 4 * u(rng), fy = 1 + 4 * u(rng), ph = 6.28 * u(rng);
    auto raw = [&](const Point& p) {
        const double d = std::max(0.0, (p - c).norm() - r0);
        return d * d * (1.5 + 0.5 * std::sin(fx * p.x() + fy * p.y() + ph));
    };
    double top = 0.0;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) top = std::max(top, raw({(i + 0.5) / n, (j + 0.5) / n}));
    return DensityField::sample(
        Rect::unit(), n, n, [&](const Point& p) { return 1.0 + eps / 2 + (1.0 - eps / 2) * raw(p) / top; },
        ValueRange{1.0, 2.0});
}

// Discontinuous field: below eps on the 30% of samples where a smooth random
// wave is lowest, noisy values of order one elsewhere.
inline DensityField rough_field(int n, double eps, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double fx = 1 + 3 * u(rng), fy = 1 + 3 * u(rng), px = 6.28 * u(rng), py = 6.28 * u(rng);
    std::vector<double> wave;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            wave.push_back(std::sin(fx * (i + 0.5) / n + px) + std::sin(fy * (j + 0.5) / n + py));
    std::vector<double> sorted = wave;
    const std::size_t cut = sorted.size() * 3 / 10;
    std::nth_element(sorted.begin(), sorted.begin() + cut, sorted.end());
    const double level = sorted[cut];
    const double base = 0.2 + u(rng);
    std::vector<double> v(wave.size());
    for (std::size_t k = 0; k < v.size(); ++k)
        v[k] = wave[k] < level ? eps * (1e-3 + 0.99 * u(rng)) : base + 0.5 * u(rng) + double(k / n) / n;
    return {Rect::unit(), n, n, std::move(v)};
}

} // namespace testing
