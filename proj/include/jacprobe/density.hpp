#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "jacprobe/geometry.hpp"

namespace jacprobe {

// Closed interval [lo, hi] of density values.
struct ValueRange {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const noexcept { return v >= lo && v <= hi; }
    double width() const noexcept { return hi - lo; }
    bool operator==(const ValueRange&) const = default;
};

// Positive density sampled at the cell centers of an nx x ny grid over a
// rect, read as piecewise constant on the cells.
class DensityField {
public:
    // Declared range defaults to [min, max] of the samples.
    DensityField(const Rect& rect, int nx, int ny, std::vector<double> values,
                 std::optional<ValueRange> declared = std::nullopt);

    static DensityField constant(const Rect& rect, int nx, int ny, double value);
    static DensityField sample(const Rect& rect, int nx, int ny,
                               const std::function<double(const Point&)>& f,
                               std::optional<ValueRange> declared = std::nullopt);

    const Rect& rect() const noexcept { return rect_; }
    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    const std::vector<double>& values() const noexcept { return values_; }
    const ValueRange& declared_range() const noexcept { return declared_; }

    std::size_t index(int i, int j) const noexcept {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_) +
               static_cast<std::size_t>(i);
    }
    double at(int i, int j) const noexcept { return values_[index(i, j)]; }
    double pixel_width() const noexcept { return rect_.width() / nx_; }
    double pixel_height() const noexcept { return rect_.height() / ny_; }
    double cell_area() const noexcept { return pixel_width() * pixel_height(); }
    Point pixel_center(int i, int j) const;

    double min_value() const;
    double max_value() const;

    // Empty (or full) mask on this field's grid.
    RasterMask grid_mask(bool value = false) const { return {rect_, nx_, ny_, value}; }
    bool same_grid(const RasterMask& mask) const noexcept;
    bool same_grid(const DensityField& other) const noexcept;

    // Pixels whose value lies in the closed band.
    RasterMask preimage(const ValueRange& band) const;

private:
    Rect rect_;
    int nx_, ny_;
    std::vector<double> values_;
    ValueRange declared_;
};

// Half-open pixel index block [i0, i1) x [j0, j1).
struct PixelBlock {
    int i0 = 0, j0 = 0, i1 = 0, j1 = 0;
    int width() const noexcept { return i1 - i0; }
    int height() const noexcept { return j1 - j0; }
    bool contains(int i, int j) const noexcept { return i >= i0 && i < i1 && j >= j0 && j < j1; }
};

// Block of grid pixels exactly covering `sub`; throws if `sub` does not fall
// on pixel boundaries of the field's grid.
PixelBlock aligned_block(const DensityField& field, const Rect& sub);
Rect block_rect(const DensityField& field, const PixelBlock& block);

// ---------------------------------------------------------------------------
// Checkerboards
// ---------------------------------------------------------------------------

class CheckerboardSpec {
public:
    CheckerboardSpec(int cells, double amplitude);

    int cells() const noexcept { return cells_; }
    double amplitude() const noexcept { return amplitude_; }
    // The strip [0,1] x [0,1/N] carrying the N unit cells.
    Rect strip() const { return {0.0, 0.0, 1.0, 1.0 / cells_}; }

private:
    int cells_;
    double amplitude_;
};

// Samples the checkerboard on its strip: 1 on even cells, 1+c on odd cells
// (cells counted from 1 at x = 0). nx must be a multiple of N.
DensityField make_checkerboard(const CheckerboardSpec& spec, int nx, int ny);

// The checkerboard strip placed in the unit square at its native position,
// with the rest of the square at the even-cell value 1. nx and ny must both
// be multiples of N.
DensityField embedded_checkerboard(const CheckerboardSpec& spec, int nx, int ny);

// Value of the checkerboard of `cells` columns stretched over `rect` at p.
double checkerboard_value(const Rect& rect, int cells, const Point& p, double first,
                          double second);

// Checkerboard of `cells` columns stretched over `rect`, with as many rows as
// keep the cells closest to square; the first cell takes `first`, its
// neighbours `second`.
DensityField checkerboard_on(const Rect& rect, int nx, int ny, int cells, double first,
                             double second);

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

// Midpoint-rule integral of rho over the set pixels of `region`.
double integrate(const DensityField& rho, const RasterMask& region);

// ---------------------------------------------------------------------------
// Gluing a bad patch into a continuous-style field
// ---------------------------------------------------------------------------

// Two weights summing to one at every sample. w2 vanishes outside the
// component C and w1 vanishes on the core square S.
class PartitionWeights {
public:
    PartitionWeights(const Rect& rect, int nx, int ny, std::vector<double> w1,
                     std::vector<double> w2);

    const Rect& rect() const noexcept { return rect_; }
    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    const std::vector<double>& w1() const noexcept { return w1_; }
    const std::vector<double>& w2() const noexcept { return w2_; }

private:
    Rect rect_;
    int nx_, ny_;
    std::vector<double> w1_, w2_;
};

// Weights subordinate to the cover {outside S, C}: w2 = d_out / (d_out + d_S)
// with d_S the distance to the square and d_out the distance to the pixels
// outside the component.
PartitionWeights partition_weights(const RasterMask& component, const Rect& square);

// Continues a patch defined on the square S over the component C: the value
// at a pixel moves from the patch value at the nearest square pixel towards
// the patch maximum over one square side, and stays inside `band`. Pixels
// outside C carry the patch maximum.
DensityField extend_patch(const DensityField& patch, const RasterMask& component,
                          const ValueRange& band);

// rho = phi * w1 + extend(patch) * w2, with band [a, a+eps] where a is the
// lower end of phi's declared range. Requires eps < (b-a)/10, phi strictly
// inside (a, a+eps) on the component, and the patch inside the band.
DensityField perturb_glue(const DensityField& phi, const DensityField& bad_patch,
                          const RasterMask& component, const PartitionWeights& weights,
                          double eps);

struct GluedPerturbation {
    DensityField result;
    RasterMask component;
    Rect square;
    DensityField patch;
    double eps;
    double sup_difference; // max |result - phi| over samples
};

// Full gluing pipeline on phi: takes the largest 4-connected component of
// {a < phi < a+eps}, the most central aligned square of the requested side
// inside it, a checkerboard patch spanning [a, a+eps] with `cells` columns,
// and glues it in.
GluedPerturbation glue_bad_patch(const DensityField& phi, double eps, double square_side,
                                 int cells);

// ---------------------------------------------------------------------------
// L-infinity truncation and patching
// ---------------------------------------------------------------------------

// max(phi, eps) pointwise.
DensityField truncate_floor(const DensityField& phi, double eps);

struct DensitySquare {
    Rect square;
    Point center;
    double side;
    double ratio; // fraction of the square's pixels whose value lies in the band
};

constexpr double kDefaultDensityThreshold = 0.95;

// Side lengths halving from the extent of the band preimage down to four
// pixels.
std::vector<double> default_delta_schedule(const DensityField& phi, const ValueRange& band);

// First side length of the schedule admitting a pixel-aligned square with
// band occupancy >= theta; among those squares the highest ratio wins, ties
// broken by row-major position.
DensitySquare find_density_square(const DensityField& phi, const ValueRange& band,
                                  const std::vector<double>& delta_schedule,
                                  double theta = kDefaultDensityThreshold);

// Inside `square`, pixels whose value lies in `band` take the patch value
// (which must lie in the band too); every other pixel keeps phi_eps.
DensityField patch_linf(const DensityField& phi_eps, const Rect& square,
                        const DensityField& bad_patch, const ValueRange& band,
                        double theta = kDefaultDensityThreshold);

struct LinfPerturbation {
    DensityField truncated;
    ValueRange band;
    DensitySquare square;
    DensityField patch;
    DensityField result;
    double sup_difference; // max |result - phi| over samples
};

// Truncates at eps, picks the band [a, a+eps] (a defaults to the truncated
// minimum), finds a density square and patches a checkerboard spanning the
// band into it.
LinfPerturbation patch_bad_square(const DensityField& phi, double eps, std::optional<double> a,
                                  double theta, int cells);

} // namespace jacprobe
