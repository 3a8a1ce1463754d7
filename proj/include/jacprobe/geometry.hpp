#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace jacprobe {

using Point = Eigen::Vector2d;

// ---------------------------------------------------------------------------
// Rect
// ---------------------------------------------------------------------------

// Closed axis-aligned rectangle [x0,x1] x [y0,y1] with positive area.
class Rect {
public:
    Rect(double x0, double y0, double x1, double y1);

    static Rect unit() { return {0.0, 0.0, 1.0, 1.0}; }

    double x0() const noexcept { return x0_; }
    double y0() const noexcept { return y0_; }
    double x1() const noexcept { return x1_; }
    double y1() const noexcept { return y1_; }
    double width() const noexcept { return x1_ - x0_; }
    double height() const noexcept { return y1_ - y0_; }
    double area() const noexcept { return width() * height(); }
    Point center() const { return {0.5 * (x0_ + x1_), 0.5 * (y0_ + y1_)}; }

    bool contains(const Point& p, double tol = 0.0) const noexcept;
    bool contains(const Rect& r, double tol = 0.0) const noexcept;

    // Intersection with another rect; throws if the overlap has no area.
    Rect clipped_to(const Rect& other) const;

    bool operator==(const Rect&) const = default;

private:
    double x0_, y0_, x1_, y1_;
};

// ---------------------------------------------------------------------------
// Segment / SegmentSet
// ---------------------------------------------------------------------------

class Segment {
public:
    Segment(Point p, Point q);

    const Point& p() const noexcept { return p_; }
    const Point& q() const noexcept { return q_; }
    double length() const { return (q_ - p_).norm(); }

private:
    Point p_, q_;
};

// True when the open segments share a point (proper crossings, collinear
// overlap). An endpoint touching the other segment, at its end or in its
// middle, does not count.
bool interiors_intersect(const Segment& a, const Segment& b);

// Ordered, pairwise non-intersecting collection of segments.
class SegmentSet {
public:
    SegmentSet() = default;
    explicit SegmentSet(std::vector<Segment> segments);

    const std::vector<Segment>& segments() const noexcept { return segments_; }
    std::size_t size() const noexcept { return segments_.size(); }
    bool empty() const noexcept { return segments_.empty(); }
    const Segment& operator[](std::size_t i) const { return segments_[i]; }

private:
    std::vector<Segment> segments_;
};

// ---------------------------------------------------------------------------
// RasterMask
// ---------------------------------------------------------------------------

// Row-major boolean grid over a Rect. Pixel (i, j) covers column i, row j,
// with row 0 at the bottom (y0) edge.
class RasterMask {
public:
    RasterMask(const Rect& rect, int nx, int ny, bool value = false);
    RasterMask(const Rect& rect, int nx, int ny, std::vector<std::uint8_t> bits);

    // Sets every pixel whose center satisfies `inside`.
    static RasterMask rasterize(const Rect& rect, int nx, int ny,
                                const std::function<bool(const Point&)>& inside);

    const Rect& rect() const noexcept { return rect_; }
    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    std::size_t size() const noexcept { return bits_.size(); }
    double pixel_width() const noexcept { return rect_.width() / nx_; }
    double pixel_height() const noexcept { return rect_.height() / ny_; }
    double cell_area() const noexcept { return pixel_width() * pixel_height(); }

    std::size_t index(int i, int j) const noexcept {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_) +
               static_cast<std::size_t>(i);
    }
    bool at(int i, int j) const noexcept { return bits_[index(i, j)] != 0; }
    bool operator[](std::size_t k) const noexcept { return bits_[k] != 0; }
    void set(int i, int j, bool v = true) noexcept { bits_[index(i, j)] = v ? 1 : 0; }

    Point pixel_center(int i, int j) const;
    // Pixel containing p; points on the far edges map to the last pixel.
    std::pair<int, int> pixel_of(const Point& p) const;

    std::size_t count() const noexcept;
    double measure() const noexcept { return static_cast<double>(count()) * cell_area(); }
    bool empty() const noexcept { return count() == 0; }

    bool same_grid(const RasterMask& other) const noexcept;
    bool subset_of(const RasterMask& other) const;

    RasterMask complement() const;
    RasterMask operator&(const RasterMask& other) const;
    RasterMask operator|(const RasterMask& other) const;

    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

    bool operator==(const RasterMask&) const = default;

private:
    Rect rect_;
    int nx_, ny_;
    std::vector<std::uint8_t> bits_;
};

// Squared Euclidean center-to-center distance from every pixel to the nearest
// set pixel of `mask` (exact, separable lower-envelope transform). Pixels of
// an empty mask get +infinity.
std::vector<double> squared_distance_to(const RasterMask& mask);

struct Neighborhoods {
    RasterMask exterior; // centers within eps of a set pixel center
    RasterMask interior; // set pixels farther than eps from the complement
};

// Outer eps-neighborhood and inner eps-core of a rasterized set.
//
// The exterior uses center-to-center distances. The interior treats the set
// as the union of its closed cells and keeps a set pixel when its center is
// farther than eps from every unset cell and from the outside of the rect,
// so a lone pixel has an empty core once eps reaches half a pixel.
Neighborhoods neighborhoods(const RasterMask& image_mask, double eps);

// Maximal 4-connected set of set pixels containing the pixel under `seed`.
RasterMask connected_component(const RasterMask& mask, const Point& seed);

} // namespace jacprobe
