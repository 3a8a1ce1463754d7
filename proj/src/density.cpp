#include "jacprobe/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "jacprobe/error.hpp"

namespace jacprobe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Summed-area table with a zero first row and column.
class SummedArea {
public:
    explicit SummedArea(const RasterMask& mask)
        : nx_(mask.nx()), table_(static_cast<std::size_t>(mask.nx() + 1) * (mask.ny() + 1), 0) {
        for (int j = 0; j < mask.ny(); ++j)
            for (int i = 0; i < mask.nx(); ++i)
                table_[at(i + 1, j + 1)] = (mask.at(i, j) ? 1 : 0) + table_[at(i, j + 1)] +
                                           table_[at(i + 1, j)] - table_[at(i, j)];
    }

    long count(const PixelBlock& b) const {
        return table_[at(b.i1, b.j1)] - table_[at(b.i0, b.j1)] - table_[at(b.i1, b.j0)] +
               table_[at(b.i0, b.j0)];
    }

private:
    std::size_t at(int i, int j) const {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_ + 1) +
               static_cast<std::size_t>(i);
    }
    int nx_;
    std::vector<long> table_;
};

std::string fmt_range(double lo, double hi) {
    std::ostringstream os;
    os << "[" << lo << ", " << hi << "]";
    return os.str();
}

double sup_difference(const DensityField& a, const DensityField& b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.values().size(); ++k)
        d = std::max(d, std::abs(a.values()[k] - b.values()[k]));
    return d;
}

} // namespace

// ---------------------------------------------------------------------------
// DensityField
// ---------------------------------------------------------------------------

DensityField::DensityField(const Rect& rect, int nx, int ny, std::vector<double> values,
                           std::optional<ValueRange> declared)
    : rect_(rect), nx_(nx), ny_(ny), values_(std::move(values)) {
    if (nx < 1 || ny < 1) throw Error("density grid dimensions must be positive");
    if (values_.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny))
        throw Error("density value count does not match nx*ny");
    double lo = kInf, hi = -kInf;
    for (double v : values_) {
        if (!std::isfinite(v) || !(v > 0.0)) throw Error("density values must be positive");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    declared_ = declared.value_or(ValueRange{lo, hi});
    if (!(declared_.lo <= lo && hi <= declared_.hi))
        throw Error("declared range " + fmt_range(declared_.lo, declared_.hi) +
                    " does not cover the values " + fmt_range(lo, hi));
}

DensityField DensityField::constant(const Rect& rect, int nx, int ny, double value) {
    if (nx < 1 || ny < 1) throw Error("density grid dimensions must be positive");
    return {rect, nx, ny,
            std::vector<double>(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), value)};
}

DensityField DensityField::sample(const Rect& rect, int nx, int ny,
                                  const std::function<double(const Point&)>& f,
                                  std::optional<ValueRange> declared) {
    if (nx < 1 || ny < 1) throw Error("density grid dimensions must be positive");
    std::vector<double> v(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    const double hx = rect.width() / nx, hy = rect.height() / ny;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            v[static_cast<std::size_t>(j) * nx + i] =
                f({rect.x0() + (i + 0.5) * hx, rect.y0() + (j + 0.5) * hy});
    return {rect, nx, ny, std::move(v), declared};
}

Point DensityField::pixel_center(int i, int j) const {
    return {rect_.x0() + (i + 0.5) * pixel_width(), rect_.y0() + (j + 0.5) * pixel_height()};
}

double DensityField::min_value() const { return *std::min_element(values_.begin(), values_.end()); }
double DensityField::max_value() const { return *std::max_element(values_.begin(), values_.end()); }

bool DensityField::same_grid(const RasterMask& mask) const noexcept {
    return mask.nx() == nx_ && mask.ny() == ny_ && mask.rect() == rect_;
}

bool DensityField::same_grid(const DensityField& other) const noexcept {
    return other.nx_ == nx_ && other.ny_ == ny_ && other.rect_ == rect_;
}

RasterMask DensityField::preimage(const ValueRange& band) const {
    RasterMask m = grid_mask();
    for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i)
            if (band.contains(at(i, j))) m.set(i, j);
    return m;
}

PixelBlock aligned_block(const DensityField& field, const Rect& sub) {
    const double hx = field.pixel_width(), hy = field.pixel_height();
    const double fi0 = (sub.x0() - field.rect().x0()) / hx;
    const double fi1 = (sub.x1() - field.rect().x0()) / hx;
    const double fj0 = (sub.y0() - field.rect().y0()) / hy;
    const double fj1 = (sub.y1() - field.rect().y0()) / hy;
    PixelBlock b{static_cast<int>(std::lround(fi0)), static_cast<int>(std::lround(fj0)),
                 static_cast<int>(std::lround(fi1)), static_cast<int>(std::lround(fj1))};
    constexpr double tol = 1e-9;
    if (std::abs(fi0 - b.i0) > tol || std::abs(fi1 - b.i1) > tol || std::abs(fj0 - b.j0) > tol ||
        std::abs(fj1 - b.j1) > tol)
        throw Error("rect is not aligned with the grid");
    if (b.i0 < 0 || b.j0 < 0 || b.i1 > field.nx() || b.j1 > field.ny() || b.width() < 1 ||
        b.height() < 1)
        throw Error("rect lies outside the grid");
    return b;
}

Rect block_rect(const DensityField& field, const PixelBlock& b) {
    const double hx = field.pixel_width(), hy = field.pixel_height();
    const auto& r = field.rect();
    return {r.x0() + b.i0 * hx, r.y0() + b.j0 * hy, r.x0() + b.i1 * hx, r.y0() + b.j1 * hy};
}

// ---------------------------------------------------------------------------
// Checkerboards
// ---------------------------------------------------------------------------

CheckerboardSpec::CheckerboardSpec(int cells, double amplitude)
    : cells_(cells), amplitude_(amplitude) {
    if (cells < 1) throw Error("checkerboard needs N >= 1");
    if (!(amplitude > 0.0) || !std::isfinite(amplitude))
        throw Error("checkerboard needs c > 0");
}

DensityField make_checkerboard(const CheckerboardSpec& spec, int nx, int ny) {
    if (nx < 1 || ny < 1) throw Error("density grid dimensions must be positive");
    if (nx % spec.cells() != 0) throw Error("cells misaligned with grid");
    const int per_cell = nx / spec.cells();
    const double odd = 1.0 + spec.amplitude();
    std::vector<double> v(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int cell = i / per_cell + 1;
            v[static_cast<std::size_t>(j) * nx + i] = (cell % 2 == 1) ? odd : 1.0;
        }
    return {spec.strip(), nx, ny, std::move(v), ValueRange{1.0, odd}};
}

DensityField embedded_checkerboard(const CheckerboardSpec& spec, int nx, int ny) {
    if (nx < 1 || ny < 1) throw Error("density grid dimensions must be positive");
    if (nx % spec.cells() != 0 || ny % spec.cells() != 0)
        throw Error("cells misaligned with grid");
    const int strip_rows = ny / spec.cells();
    const auto strip = make_checkerboard(spec, nx, strip_rows);
    std::vector<double> v(static_cast<std::size_t>(nx) * ny, 1.0);
    std::copy(strip.values().begin(), strip.values().end(), v.begin());
    return {Rect::unit(), nx, ny, std::move(v), strip.declared_range()};
}

double checkerboard_value(const Rect& rect, int cells, const Point& p, double first,
                          double second) {
    if (cells < 1) throw Error("checkerboard needs at least one cell");
    const int rows = std::max(1, static_cast<int>(std::lround(cells * rect.height() / rect.width())));
    const double cw = rect.width() / cells, ch = rect.height() / rows;
    const int ci = std::clamp(static_cast<int>(std::floor((p.x() - rect.x0()) / cw)), 0, cells - 1);
    const int cj = std::clamp(static_cast<int>(std::floor((p.y() - rect.y0()) / ch)), 0, rows - 1);
    return (ci + cj) % 2 == 0 ? first : second;
}

DensityField checkerboard_on(const Rect& rect, int nx, int ny, int cells, double first,
                             double second) {
    const ValueRange range{std::min(first, second), std::max(first, second)};
    return DensityField::sample(
        rect, nx, ny,
        [&](const Point& p) { return checkerboard_value(rect, cells, p, first, second); }, range);
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

double integrate(const DensityField& rho, const RasterMask& region) {
    if (!rho.same_grid(region)) throw Error("density and region resolutions differ");
    double sum = 0.0;
    for (std::size_t k = 0; k < rho.values().size(); ++k)
        if (region[k]) sum += rho.values()[k];
    return sum * rho.cell_area();
}

// ---------------------------------------------------------------------------
// Gluing
// ---------------------------------------------------------------------------

PartitionWeights::PartitionWeights(const Rect& rect, int nx, int ny, std::vector<double> w1,
                                   std::vector<double> w2)
    : rect_(rect), nx_(nx), ny_(ny), w1_(std::move(w1)), w2_(std::move(w2)) {
    const auto n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    if (w1_.size() != n || w2_.size() != n) throw Error("weight count does not match nx*ny");
    for (std::size_t k = 0; k < n; ++k) {
        if (!(w1_[k] >= 0.0 && w2_[k] >= 0.0)) throw Error("partition weights must be nonnegative");
        if (std::abs(w1_[k] + w2_[k] - 1.0) > 1e-12) throw Error("partition weights must sum to 1");
    }
}

PartitionWeights partition_weights(const RasterMask& component, const Rect& square) {
    const DensityField grid = DensityField::constant(component.rect(), component.nx(),
                                                     component.ny(), 1.0);
    const PixelBlock s = aligned_block(grid, square);
    const RasterMask outside = component.complement();
    const bool any_outside = !outside.empty();
    const auto out_d2 = squared_distance_to(outside);

    const auto n = component.size();
    std::vector<double> w1(n), w2(n);
    const double hx = component.pixel_width(), hy = component.pixel_height();
    for (int j = 0; j < component.ny(); ++j) {
        for (int i = 0; i < component.nx(); ++i) {
            const auto k = component.index(i, j);
            double v;
            if (s.contains(i, j)) {
                v = 1.0;
            } else if (!component.at(i, j)) {
                v = 0.0;
            } else if (!any_outside) {
                v = 1.0;
            } else {
                const double dx = (std::clamp(i, s.i0, s.i1 - 1) - i) * hx;
                const double dy = (std::clamp(j, s.j0, s.j1 - 1) - j) * hy;
                const double d_s = std::hypot(dx, dy);
                const double d_out = std::sqrt(out_d2[k]);
                v = d_out / (d_out + d_s);
            }
            w2[k] = v;
            w1[k] = 1.0 - v;
        }
    }
    return {component.rect(), component.nx(), component.ny(), std::move(w1), std::move(w2)};
}

DensityField extend_patch(const DensityField& patch, const RasterMask& component,
                          const ValueRange& band) {
    const DensityField grid = DensityField::constant(component.rect(), component.nx(),
                                                     component.ny(), 1.0);
    const PixelBlock s = aligned_block(grid, patch.rect());
    if (s.width() != patch.nx() || s.height() != patch.ny())
        throw Error("patch resolution differs from the grid");
    for (int j = s.j0; j < s.j1; ++j)
        for (int i = s.i0; i < s.i1; ++i)
            if (!component.at(i, j)) throw Error("square is not contained in the component");
    for (double v : patch.values())
        if (!band.contains(v))
            throw Error("patch range exceeds the band " + fmt_range(band.lo, band.hi));

    const double top = patch.max_value();
    const double hx = component.pixel_width(), hy = component.pixel_height();
    const double falloff = std::max(patch.rect().width(), patch.rect().height());
    std::vector<double> v(component.size(), top);
    for (int j = 0; j < component.ny(); ++j) {
        for (int i = 0; i < component.nx(); ++i) {
            const auto k = component.index(i, j);
            if (s.contains(i, j)) {
                v[k] = patch.at(i - s.i0, j - s.j0);
            } else if (component.at(i, j)) {
                const int ci = std::clamp(i, s.i0, s.i1 - 1);
                const int cj = std::clamp(j, s.j0, s.j1 - 1);
                const double d = std::hypot((ci - i) * hx, (cj - j) * hy);
                const double t = std::clamp(d / falloff, 0.0, 1.0);
                const double edge = patch.at(ci - s.i0, cj - s.j0);
                v[k] = std::clamp(std::min(top, edge + t * (top - edge)), band.lo, band.hi);
            }
        }
    }
    return {component.rect(), component.nx(), component.ny(), std::move(v), band};
}

DensityField perturb_glue(const DensityField& phi, const DensityField& bad_patch,
                          const RasterMask& component, const PartitionWeights& weights,
                          double eps) {
    if (!(eps > 0.0)) throw Error("eps must be positive");
    if (!phi.same_grid(component)) throw Error("component resolution differs from phi");
    if (weights.nx() != phi.nx() || weights.ny() != phi.ny() || !(weights.rect() == phi.rect()))
        throw Error("weight resolution differs from phi");
    const ValueRange range = phi.declared_range();
    if (!(eps < range.width() / 10.0))
        throw Error("eps must be smaller than a tenth of phi's range");
    const ValueRange band{range.lo, range.lo + eps};
    for (double v : bad_patch.values())
        if (!band.contains(v))
            throw Error("patch range exceeds the band " + fmt_range(band.lo, band.hi));

    for (std::size_t k = 0; k < component.size(); ++k)
        if (component[k] && !(phi.values()[k] > band.lo && phi.values()[k] < band.hi))
            throw Error("component leaves the open band " + fmt_range(band.lo, band.hi));

    const PixelBlock s = aligned_block(phi, bad_patch.rect());
    for (std::size_t k = 0; k < component.size(); ++k)
        if (!component[k] && weights.w2()[k] != 0.0)
            throw Error("weight w2 is not supported inside the component");
    for (int j = s.j0; j < s.j1; ++j)
        for (int i = s.i0; i < s.i1; ++i)
            if (weights.w1()[phi.index(i, j)] != 0.0)
                throw Error("weight w1 does not vanish on the square");

    const DensityField extension = extend_patch(bad_patch, component, band);
    std::vector<double> out(phi.values().size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double w1 = weights.w1()[k], w2 = weights.w2()[k];
        if (w2 == 0.0)
            out[k] = phi.values()[k];
        else if (w1 == 0.0)
            out[k] = extension.values()[k];
        else
            out[k] = phi.values()[k] * w1 + extension.values()[k] * w2;
    }
    const ValueRange declared{std::min(range.lo, band.lo), std::max(range.hi, band.hi)};
    return {phi.rect(), phi.nx(), phi.ny(), std::move(out), declared};
}

GluedPerturbation glue_bad_patch(const DensityField& phi, double eps, double square_side,
                                 int cells) {
    if (!(eps > 0.0)) throw Error("eps must be positive");
    if (!(square_side > 0.0)) throw Error("square side must be positive");
    const ValueRange range = phi.declared_range();
    const double a = range.lo;

    RasterMask open_band = phi.grid_mask();
    for (std::size_t k = 0; k < phi.values().size(); ++k) {
        const double v = phi.values()[k];
        if (v > a && v < a + eps) open_band.set(static_cast<int>(k % phi.nx()),
                                                static_cast<int>(k / phi.nx()));
    }
    if (open_band.empty()) throw Error("phi never enters the open band (a, a+eps)");

    // Largest component, first in row-major order on ties.
    RasterMask seen = phi.grid_mask();
    std::optional<RasterMask> best;
    for (int j = 0; j < phi.ny(); ++j)
        for (int i = 0; i < phi.nx(); ++i) {
            if (!open_band.at(i, j) || seen.at(i, j)) continue;
            RasterMask c = connected_component(open_band, open_band.pixel_center(i, j));
            seen = seen | c;
            if (!best || c.count() > best->count()) best = std::move(c);
        }
    const RasterMask& component = *best;

    const int kx = std::max(1, static_cast<int>(std::lround(square_side / phi.pixel_width())));
    const int ky = std::max(1, static_cast<int>(std::lround(square_side / phi.pixel_height())));
    if (kx > phi.nx() || ky > phi.ny()) throw Error("square side exceeds the domain");

    double cx = 0.0, cy = 0.0;
    for (int j = 0; j < phi.ny(); ++j)
        for (int i = 0; i < phi.nx(); ++i)
            if (component.at(i, j)) {
                cx += i + 0.5;
                cy += j + 0.5;
            }
    cx /= static_cast<double>(component.count());
    cy /= static_cast<double>(component.count());

    const SummedArea table(component);
    std::optional<PixelBlock> square;
    double best_d = kInf;
    for (int j = 0; j + ky <= phi.ny(); ++j)
        for (int i = 0; i + kx <= phi.nx(); ++i) {
            const PixelBlock b{i, j, i + kx, j + ky};
            if (table.count(b) != static_cast<long>(kx) * ky) continue;
            const double d = std::hypot(i + 0.5 * kx - cx, j + 0.5 * ky - cy);
            if (d < best_d) {
                best_d = d;
                square = b;
            }
        }
    if (!square) throw Error("no square of the requested side fits inside the component");

    const Rect square_rect = block_rect(phi, *square);
    DensityField patch = checkerboard_on(square_rect, kx, ky, cells, a + eps, a);
    const PartitionWeights weights = partition_weights(component, square_rect);
    DensityField result = perturb_glue(phi, patch, component, weights, eps);
    const double diff = sup_difference(result, phi);
    return {std::move(result), component, square_rect, std::move(patch), eps, diff};
}

// ---------------------------------------------------------------------------
// L-infinity truncation and patching
// ---------------------------------------------------------------------------

DensityField truncate_floor(const DensityField& phi, double eps) {
    if (!(eps > 0.0)) throw Error("eps must be positive");
    std::vector<double> v = phi.values();
    for (double& x : v) x = std::max(x, eps);
    const ValueRange r = phi.declared_range();
    return {phi.rect(), phi.nx(), phi.ny(), std::move(v),
            ValueRange{std::max(r.lo, eps), std::max(r.hi, eps)}};
}

std::vector<double> default_delta_schedule(const DensityField& phi, const ValueRange& band) {
    int i0 = phi.nx(), j0 = phi.ny(), i1 = -1, j1 = -1;
    for (int j = 0; j < phi.ny(); ++j)
        for (int i = 0; i < phi.nx(); ++i)
            if (band.contains(phi.at(i, j))) {
                i0 = std::min(i0, i);
                i1 = std::max(i1, i);
                j0 = std::min(j0, j);
                j1 = std::max(j1, j);
            }
    if (i1 < 0) throw Error("band preimage is empty");
    const double pitch = std::max(phi.pixel_width(), phi.pixel_height());
    const double extent = std::max((i1 - i0 + 1) * phi.pixel_width(),
                                   (j1 - j0 + 1) * phi.pixel_height());
    std::vector<double> schedule;
    for (double d = extent; d >= 4.0 * pitch * (1.0 - 1e-12); d *= 0.5) schedule.push_back(d);
    if (schedule.empty()) schedule.push_back(extent);
    return schedule;
}

DensitySquare find_density_square(const DensityField& phi, const ValueRange& band,
                                  const std::vector<double>& delta_schedule, double theta) {
    if (!(theta > 0.0 && theta < 1.0)) throw Error("theta must lie in (0, 1)");
    const RasterMask in_band = phi.preimage(band);
    if (in_band.empty()) throw Error("band preimage is empty");
    const SummedArea table(in_band);

    double previous = kInf;
    for (double delta : delta_schedule) {
        if (!(delta > 0.0) || delta > previous) throw Error("delta schedule must be decreasing");
        previous = delta;
        const int kx = std::max(1, static_cast<int>(std::lround(delta / phi.pixel_width())));
        const int ky = std::max(1, static_cast<int>(std::lround(delta / phi.pixel_height())));
        if (kx > phi.nx() || ky > phi.ny()) continue;
        const double total = static_cast<double>(kx) * ky;
        std::optional<PixelBlock> best;
        double best_ratio = -1.0;
        for (int j = 0; j + ky <= phi.ny(); ++j)
            for (int i = 0; i + kx <= phi.nx(); ++i) {
                const PixelBlock b{i, j, i + kx, j + ky};
                const double r = static_cast<double>(table.count(b)) / total;
                if (r > best_ratio) {
                    best_ratio = r;
                    best = b;
                }
            }
        if (best && best_ratio >= theta) {
            const Rect sq = block_rect(phi, *best);
            return {sq, sq.center(), std::max(sq.width(), sq.height()), best_ratio};
        }
    }
    throw Error("no density point found at schedule resolution");
}

DensityField patch_linf(const DensityField& phi_eps, const Rect& square,
                        const DensityField& bad_patch, const ValueRange& band, double theta) {
    const PixelBlock s = aligned_block(phi_eps, square);
    const PixelBlock p = aligned_block(phi_eps, bad_patch.rect());
    if (p.i0 != s.i0 || p.j0 != s.j0 || p.i1 != s.i1 || p.j1 != s.j1)
        throw Error("patch is not defined on the square");
    if (bad_patch.nx() != s.width() || bad_patch.ny() != s.height())
        throw Error("patch resolution differs from the grid");

    long in_band = 0;
    for (int j = s.j0; j < s.j1; ++j)
        for (int i = s.i0; i < s.i1; ++i)
            if (band.contains(phi_eps.at(i, j))) ++in_band;
    const double ratio = static_cast<double>(in_band) / (static_cast<double>(s.width()) * s.height());
    if (ratio < theta) throw Error("band occupancy of the square is below theta");

    std::vector<double> v = phi_eps.values();
    for (int j = s.j0; j < s.j1; ++j)
        for (int i = s.i0; i < s.i1; ++i) {
            const auto k = phi_eps.index(i, j);
            if (!band.contains(v[k])) continue;
            const double p = bad_patch.at(i - s.i0, j - s.j0);
            if (!band.contains(p))
                throw Error("patch value leaves the band " + fmt_range(band.lo, band.hi));
            v[k] = p;
        }
    const ValueRange r = phi_eps.declared_range();
    return {phi_eps.rect(), phi_eps.nx(), phi_eps.ny(), std::move(v),
            ValueRange{std::min(r.lo, band.lo), std::max(r.hi, band.hi)}};
}

LinfPerturbation patch_bad_square(const DensityField& phi, double eps, std::optional<double> a,
                                  double theta, int cells) {
    DensityField truncated = truncate_floor(phi, eps);
    const double lo = a.value_or(truncated.min_value());
    const double top = truncated.declared_range().hi;
    if (!(lo >= eps && lo <= top)) throw Error("band start a must lie in [eps, sup phi]");
    const ValueRange band{lo, lo + eps};
    const DensitySquare sq =
        find_density_square(truncated, band, default_delta_schedule(truncated, band), theta);
    const PixelBlock s = aligned_block(truncated, sq.square);
    DensityField patch = checkerboard_on(sq.square, s.width(), s.height(), cells, band.hi, band.lo);
    DensityField result = patch_linf(truncated, sq.square, patch, band, theta);
    const double diff = sup_difference(result, phi);
    return {std::move(truncated), band, sq, std::move(patch), std::move(result), diff};
}

} // namespace jacprobe
