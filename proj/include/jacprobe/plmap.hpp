#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "jacprobe/density.hpp"
#include "jacprobe/geometry.hpp"

namespace jacprobe {

using Mat2 = Eigen::Matrix2d;

// A triangle whose signed image area falls below this is degenerate.
constexpr double kDegenerateArea = 1e-14;

// Continuous map affine on each triangle of an nx x ny cell grid over a
// rect. Every cell is split along its SW-NE diagonal: triangle 2c is
// (SW, SE, NE) and triangle 2c+1 is (SW, NE, NW) for cell c = j*nx + i.
// Vertices are stored row-major, (nx+1) per row.
class PiecewiseAffineMap {
public:
    PiecewiseAffineMap(int nx, int ny, std::vector<Point> vertices,
                       const Rect& domain = Rect::unit());

    static PiecewiseAffineMap from_function(int nx, int ny,
                                            const std::function<Point(const Point&)>& f,
                                            const Rect& domain = Rect::unit());

    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    const Rect& domain() const noexcept { return domain_; }
    const std::vector<Point>& vertices() const noexcept { return vertices_; }
    std::vector<Point>& mutable_vertices() noexcept { return vertices_; }

    std::size_t vertex_index(int i, int j) const noexcept {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_ + 1) +
               static_cast<std::size_t>(i);
    }
    const Point& vertex(int i, int j) const noexcept { return vertices_[vertex_index(i, j)]; }
    Point domain_vertex(int i, int j) const;

    double cell_width() const noexcept { return domain_.width() / nx_; }
    double cell_height() const noexcept { return domain_.height() / ny_; }
    std::size_t triangle_count() const noexcept {
        return 2 * static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_);
    }
    std::array<std::size_t, 3> triangle(std::size_t t) const;
    // Inverse of the domain edge matrix [p1-p0, p2-p0] of triangle t.
    Mat2 domain_edge_inverse(std::size_t t) const;
    double triangle_domain_area() const noexcept { return 0.5 * cell_width() * cell_height(); }

    Mat2 differential(std::size_t t) const;
    double signed_image_area(std::size_t t) const;

    // Barycentric evaluation; throws for points outside the domain.
    Point evaluate(const Point& p) const;
    // Triangle containing p (lower triangle on the diagonal).
    std::size_t locate(const Point& p) const;

    // x -> A x + b applied to every image vertex.
    PiecewiseAffineMap transformed(const Mat2& a, const Point& b) const;

private:
    int nx_, ny_;
    Rect domain_;
    std::vector<Point> vertices_;
};

PiecewiseAffineMap identity_map(int nx, int ny, const Rect& domain = Rect::unit());

// Throws "map not a local homeomorphism" if a triangle is degenerate or
// reversed.
void require_nondegenerate(const PiecewiseAffineMap& map);

std::vector<double> triangle_jacobians(const PiecewiseAffineMap& map);

// Per-cell Jacobian (mean of the cell's two triangle determinants) on the
// map's cell grid.
DensityField jacobian_field(const PiecewiseAffineMap& map);

// Determinant of the triangle containing p.
double jacobian_at(const PiecewiseAffineMap& map, const Point& p);

struct SingularValues {
    double max;
    double min;
};

// Closed-form singular values of a 2x2 matrix.
SingularValues singular_values(const Mat2& m);

struct BiLipschitzEstimate {
    double value;
    // False when global injectivity was not established; the value is then
    // only a lower bound for the pairwise constant.
    bool certified;
};

// Positive orientation everywhere plus a simple image boundary.
bool globally_injective(const PiecewiseAffineMap& map);

BiLipschitzEstimate estimate_bilipschitz(const PiecewiseAffineMap& map);

// max over triangles of max(sigma_max, 1/sigma_min).
double bilipschitz_constant(const PiecewiseAffineMap& map);

struct StretchPair {
    Segment segment;
    double ratio;
};

struct StretchReport {
    std::vector<StretchPair> pairs;
    double min_ratio = 0.0;
    double max_ratio = 0.0;

    bool stretched(std::size_t k, double a) const { return pairs.at(k).ratio >= a; }
    std::size_t argmax() const;
};

// ||f(p) - f(q)|| / ||p - q|| for each segment.
StretchReport stretch_pairs(const PiecewiseAffineMap& map, const SegmentSet& segments);

} // namespace jacprobe
