#pragma once

#include <optional>
#include <vector>

#include "jacprobe/density.hpp"
#include "jacprobe/error.hpp"
#include "jacprobe/geometry.hpp"
#include "jacprobe/plmap.hpp"
#include "jacprobe/solver.hpp"

namespace jacprobe {

// ---------------------------------------------------------------------------
// Stretch certificates
// ---------------------------------------------------------------------------

// Any map matching `density` outside a set of area < delta should stretch
// some segment of `segments` by at least (1+kappa)^level / L.
class StretchCertificate {
public:
    StretchCertificate(DensityField density, SegmentSet segments, double delta, double kappa,
                       int level, double lipschitz_bound);

    const DensityField& density() const noexcept { return density_; }
    const SegmentSet& segments() const noexcept { return segments_; }
    double delta() const noexcept { return delta_; }
    double kappa() const noexcept { return kappa_; }
    int level() const noexcept { return level_; }
    double lipschitz_bound() const noexcept { return lipschitz_; }
    double threshold() const noexcept { return threshold_; }

private:
    DensityField density_;
    SegmentSet segments_;
    double delta_, kappa_;
    int level_;
    double lipschitz_, threshold_;
};

enum class Verdict { holds, violated, not_applicable };

const char* to_string(Verdict v);

struct CertificateResult {
    Verdict verdict = Verdict::not_applicable;
    double mismatch_area = 0.0;
    double threshold = 0.0;
    StretchReport stretch;
    std::optional<std::size_t> witness; // segment index, set when the verdict holds
    double witness_ratio = 0.0;
    // Absolute-length variant: (1+kappa)^level * |f(x0,y0) - f(x1,y0)| over the
    // bottom edge of the domain, compared with the largest segment ratio.
    // Reported only; the verdict uses the ratio form.
    double absolute_threshold = 0.0;
    bool absolute_holds = false;
};

CertificateResult evaluate_certificate(const StretchCertificate& cert, const PiecewiseAffineMap& map,
                                       double tau);

struct KappaEstimate {
    double kappa;                   // min over runs of (L * max ratio - 1)
    std::vector<double> max_ratios; // per run
};

// Solves `runs` times from jittered identity starts and reports the smallest
// excess stretch observed over `segments`.
KappaEstimate estimate_kappa(const DensityField& density, const SegmentSet& segments,
                             const SolverConfig& config, int runs);

// ---------------------------------------------------------------------------
// Refinement loop
// ---------------------------------------------------------------------------

struct RefinementStep {
    Segment segment;     // most stretched candidate
    double ratio;        // its stretch ratio under the solved map
    Rect region;         // rectangle U whose samples were replaced
    double scale;        // width of U over the width of the previous checkerboard region
    int cells;           // columns of the inserted checkerboard
    ValueRange values;   // local range the inserted checkerboard spans
    double mismatch_area; // of the solve that chose the segment
};

struct RefinementState {
    DensityField density;
    int level = 0;
    std::vector<RefinementStep> history;
    Rect active;         // region of the most recent checkerboard
    int active_cells = 0;
};

// Level-0 state: the checkerboard strip embedded in the unit square.
RefinementState start_refinement(const CheckerboardSpec& spec, int nx, int ny);

// Horizontal segments joining the centers of adjacent cells of the active
// checkerboard.
std::vector<Segment> mid_cell_segments(const RefinementState& state);

class RefinementError : public Error {
public:
    RefinementError(const std::string& what, RefinementState partial)
        : Error(what), partial_(std::move(partial)) {}
    const RefinementState& partial() const noexcept { return partial_; }

private:
    RefinementState partial_;
};

// One refinement step: solve on the current density from the identity, pick
// the most stretched candidate segment, and replace the samples inside a
// rectangle around it by a checkerboard spanning the local value range, with
// cells sized so that `inner.cells()` of them fit along the segment.
RefinementState refine_checkerboard(const RefinementState& state, const SolverConfig& config,
                                    const CheckerboardSpec& inner);

// ---------------------------------------------------------------------------
// Convergence of images
// ---------------------------------------------------------------------------

// Pixels of the raster whose centers lie in map(region), found by pulling
// each center back through the triangle that covers it.
RasterMask rasterize_image(const PiecewiseAffineMap& map, const RasterMask& region,
                           const Rect& rect, int nx, int ny);

struct ImageStep {
    int k;                  // 1-based position in the sequence
    bool exterior_inclusion; // phi_k(U) inside the eps-neighborhood of phi(U)
    bool interior_inclusion; // eps-core of phi(U) inside phi_k(U)
    double image_area;       // raster area of phi_k(U)
    double jacobian_integral; // integral of Jac(phi_k) over U
    double discrepancy;
    double budget;           // twice the area of the image's boundary pixels
};

struct ImageConvergenceReport {
    std::optional<int> k0; // empty when the last map already fails
    std::vector<ImageStep> steps;
    Rect raster_rect = Rect::unit();
    int raster_nx = 0, raster_ny = 0;
    double eps = 0.0;
};

constexpr int kDefaultImageRaster = 512;

ImageConvergenceReport verify_image_convergence(const std::vector<PiecewiseAffineMap>& sequence,
                                                const PiecewiseAffineMap& limit,
                                                const RasterMask& region, double eps,
                                                int raster = kDefaultImageRaster);

} // namespace jacprobe
