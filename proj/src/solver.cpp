#include "jacprobe/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include "jacprobe/error.hpp"
#include "jacprobe/log.hpp"

namespace jacprobe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Mat2 cofactor(const Mat2& d) {
    Mat2 c;
    c << d(1, 1), -d(1, 0), -d(0, 1), d(0, 0);
    return c;
}

struct RunResult {
    Eigen::VectorXd x;
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
};

// Best uniform rescaling x -> s x (vertex 0 sits at the origin), searched in
// log s over [-log L, log L]: a coarse scan, then golden section around the
// best scan point. Descent alone spreads a global scale change inward from
// the boundary very slowly.
Eigen::VectorXd scale_warm_start(const JacobianObjective& objective, const Eigen::VectorXd& x,
                                 double l) {
    auto f = [&](double t) { return objective.value(std::exp(t) * x); };
    const double span = std::log(l);
    constexpr int scan = 40;
    const double h = 2.0 * span / scan;
    double t_best = 0.0, f_best = f(0.0);
    for (int k = 0; k <= scan; ++k) {
        const double t = -span + k * h;
        const double v = f(t);
        if (v < f_best) {
            f_best = v;
            t_best = t;
        }
    }
    if (!std::isfinite(f_best)) return x;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = t_best - h, b = t_best + h;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 80; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    const double t = fc < fd ? c : d;
    if (std::min(fc, fd) < f_best) return std::exp(t) * x;
    return std::exp(t_best) * x;
}

// Quasi-Newton (L-BFGS two-loop) directions with Armijo backtracking. Every
// accepted step strictly lowers the objective.
RunResult descend(const JacobianObjective& objective, Eigen::VectorXd x,
                  const SolverConfig& config, double cell) {
    RunResult run;
    Eigen::VectorXd g(x.size()), g_new(x.size());
    double f = objective.value_and_gradient(x, g);
    run.trace.push_back(f);

    struct Pair {
        Eigen::VectorXd s, y;
        double rho;
    };
    std::deque<Pair> history;

    for (int it = 0; it < config.max_iterations; ++it) {
        if (objective.max_residual(x) <= 1e-12) {
            run.converged = true;
            run.stop_reason = "target matched";
            break;
        }
        if (g.lpNorm<Eigen::Infinity>() <= config.gradient_tolerance) {
            run.converged = true;
            run.stop_reason = "gradient below tolerance";
            break;
        }

        Eigen::VectorXd p = -g;
        if (!history.empty()) {
            std::vector<double> alpha(history.size());
            for (std::size_t k = history.size(); k-- > 0;) {
                alpha[k] = history[k].rho * history[k].s.dot(p);
                p -= alpha[k] * history[k].y;
            }
            const auto& last = history.back();
            p *= last.s.dot(last.y) / last.y.squaredNorm();
            for (std::size_t k = 0; k < history.size(); ++k) {
                const double beta = history[k].rho * history[k].y.dot(p);
                p += (alpha[k] - beta) * history[k].s;
            }
        }
        double slope = g.dot(p);
        if (!(slope < 0.0)) {
            history.clear();
            p = -g;
            slope = g.dot(p);
        }
        if (history.empty()) {
            // First step along the raw gradient: move no vertex more than a
            // tenth of a cell.
            const double largest = p.lpNorm<Eigen::Infinity>();
            if (largest > 0.1 * cell) {
                p *= 0.1 * cell / largest;
                slope = g.dot(p);
            }
        }

        double step = config.initial_step;
        double f_new = kInf;
        Eigen::VectorXd x_new;
        while (true) {
            x_new = x + step * p;
            f_new = objective.value(x_new);
            if (f_new <= f + config.armijo * step * slope && f_new < f) break;
            step *= config.backtrack;
            if (step < config.min_step) break;
        }
        if (step < config.min_step) {
            run.converged = true;
            run.stop_reason = "step floor reached";
            break;
        }

        objective.value_and_gradient(x_new, g_new);
        Eigen::VectorXd s = x_new - x, y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-14 * std::sqrt(s.squaredNorm() * y.squaredNorm())) {
            history.push_back({std::move(s), std::move(y), 1.0 / sy});
            if (static_cast<int>(history.size()) > config.history) history.pop_front();
        }
        x = std::move(x_new);
        g.swap(g_new);
        f = f_new;
        run.trace.push_back(f);
        ++run.iterations;
        if (log::enabled(log::Level::debug) && run.iterations % 100 == 0) {
            std::ostringstream os;
            os << "iteration " << run.iterations << " objective " << f;
            log::write(log::Level::debug, os.str());
        }
    }
    if (run.stop_reason.empty()) run.stop_reason = "iteration limit";
    run.x = std::move(x);
    return run;
}

void require_same_grid(const DensityField& rho, const PiecewiseAffineMap& map) {
    if (rho.nx() != map.nx() || rho.ny() != map.ny() || !(rho.rect() == map.domain()))
        throw Error("density and map resolutions differ");
}

} // namespace

// ---------------------------------------------------------------------------

void SolverConfig::validate() const {
    if (!(lipschitz_bound >= 1.0) || !std::isfinite(lipschitz_bound))
        throw Error("lipschitz bound L must be >= 1");
    if (!(tau > 0.0)) throw Error("tau must be positive");
    if (max_iterations < 0) throw Error("max_iterations must be nonnegative");
    if (!(initial_step > 0.0)) throw Error("initial_step must be positive");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw Error("backtrack must lie in (0, 1)");
    if (!(armijo > 0.0 && armijo < 1.0)) throw Error("armijo must lie in (0, 1)");
    if (!(min_step > 0.0)) throw Error("min_step must be positive");
    if (!(jacobian_weight > 0.0)) throw Error("jacobian_weight must be positive");
    if (!(barrier_weight > 0.0)) throw Error("barrier_weight must be positive");
    if (restarts < 0) throw Error("restarts must be nonnegative");
    if (!(restart_jitter >= 0.0)) throw Error("restart_jitter must be nonnegative");
    if (history < 1) throw Error("history must be positive");
}

const char* to_string(Evidence e) {
    switch (e) {
    case Evidence::realized:
        return "realized";
    case Evidence::failed_after_restarts:
        return "failed_after_restarts";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------

JacobianObjective::JacobianObjective(const DensityField& rho, const PiecewiseAffineMap& layout,
                                     const SolverConfig& config)
    : layout_(layout),
      area_(layout.triangle_domain_area()),
      lipschitz_(config.lipschitz_bound),
      weight_fit_(config.jacobian_weight),
      weight_barrier_(config.barrier_weight) {
    require_same_grid(rho, layout);
    if (!(lipschitz_ > 1.0)) throw Error("the barrier needs L > 1");
    target_.resize(layout.triangle_count());
    for (std::size_t t = 0; t < target_.size(); ++t) target_[t] = rho.values()[t / 2];
    edge_inverse_ = {layout.domain_edge_inverse(0), layout.domain_edge_inverse(1)};
}

Eigen::VectorXd JacobianObjective::flatten(const PiecewiseAffineMap& map) const {
    Eigen::VectorXd x(2 * map.vertices().size());
    for (std::size_t k = 0; k < map.vertices().size(); ++k) {
        x[2 * k] = map.vertices()[k].x();
        x[2 * k + 1] = map.vertices()[k].y();
    }
    return x;
}

PiecewiseAffineMap JacobianObjective::unflatten(const Eigen::VectorXd& x) const {
    std::vector<Point> v(layout_.vertices().size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = {x[2 * k], x[2 * k + 1]};
    return {layout_.nx(), layout_.ny(), std::move(v), layout_.domain()};
}

double JacobianObjective::triangle_terms(const Eigen::VectorXd& x, std::size_t t,
                                         Mat2* grad_d) const {
    const auto tri = layout_.triangle(t);
    const Point p0{x[2 * tri[0]], x[2 * tri[0] + 1]};
    Mat2 y;
    y.col(0) = Point{x[2 * tri[1]], x[2 * tri[1] + 1]} - p0;
    y.col(1) = Point{x[2 * tri[2]], x[2 * tri[2] + 1]} - p0;
    const Mat2 d = y * edge_inverse_[t % 2];

    const double jac = d.determinant();
    if (!(jac * area_ >= kDegenerateArea)) return kInf;
    const auto sv = singular_values(d);
    const double l = lipschitz_;
    if (!(sv.max < l && sv.min > 1.0 / l)) return kInf;

    const double l2 = l * l, l4 = l2 * l2;
    const double frob = d.squaredNorm();
    const double g_hi = 1.0 - frob / l2 + jac * jac / l4;
    const double g_lo = 1.0 - frob * l2 + jac * jac * l4;
    if (!(g_hi > 0.0 && g_lo > 0.0)) return kInf;

    const double r = jac - target_[t];
    const double energy =
        area_ * (weight_fit_ * r * r - weight_barrier_ * (std::log(g_hi) + std::log(g_lo)));
    if (grad_d) {
        const Mat2 cof = cofactor(d);
        const Mat2 dg_hi = (-2.0 / l2) * d + (2.0 * jac / l4) * cof;
        const Mat2 dg_lo = (-2.0 * l2) * d + (2.0 * jac * l4) * cof;
        *grad_d = area_ * ((2.0 * weight_fit_ * r) * cof -
                           weight_barrier_ * (dg_hi / g_hi + dg_lo / g_lo));
    }
    return energy;
}

bool JacobianObjective::feasible(const Eigen::VectorXd& x) const {
    for (std::size_t t = 0; t < layout_.triangle_count(); ++t)
        if (!std::isfinite(triangle_terms(x, t, nullptr))) return false;
    return true;
}

double JacobianObjective::value(const Eigen::VectorXd& x) const {
    double total = 0.0;
    for (std::size_t t = 0; t < layout_.triangle_count(); ++t) {
        const double e = triangle_terms(x, t, nullptr);
        if (!std::isfinite(e)) return kInf;
        total += e;
    }
    return total;
}

double JacobianObjective::value_and_gradient(const Eigen::VectorXd& x,
                                             Eigen::VectorXd& gradient) const {
    gradient.setZero(x.size());
    double total = 0.0;
    Mat2 gd;
    for (std::size_t t = 0; t < layout_.triangle_count(); ++t) {
        const double e = triangle_terms(x, t, &gd);
        if (!std::isfinite(e)) {
            gradient.setConstant(std::numeric_limits<double>::quiet_NaN());
            return kInf;
        }
        total += e;
        // D = Y M  =>  dE/dY = dE/dD M^T
        const Mat2 gy = gd * edge_inverse_[t % 2].transpose();
        const auto tri = layout_.triangle(t);
        gradient.segment<2>(2 * tri[1]) += gy.col(0);
        gradient.segment<2>(2 * tri[2]) += gy.col(1);
        gradient.segment<2>(2 * tri[0]) -= gy.col(0) + gy.col(1);
    }
    // Translation gauge: the first vertex stays put.
    gradient.segment<2>(0).setZero();
    return total;
}

double JacobianObjective::max_residual(const Eigen::VectorXd& x) const {
    double worst = 0.0;
    for (std::size_t t = 0; t < layout_.triangle_count(); ++t) {
        const auto tri = layout_.triangle(t);
        const Point p0{x[2 * tri[0]], x[2 * tri[0] + 1]};
        Mat2 y;
        y.col(0) = Point{x[2 * tri[1]], x[2 * tri[1] + 1]} - p0;
        y.col(1) = Point{x[2 * tri[2]], x[2 * tri[2] + 1]} - p0;
        worst = std::max(worst, std::abs((y * edge_inverse_[t % 2]).determinant() - target_[t]));
    }
    return worst;
}

// ---------------------------------------------------------------------------

PiecewiseAffineMap jittered_map(const PiecewiseAffineMap& map, double lipschitz_bound,
                                double jitter, std::uint64_t seed, int stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(stream)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<Point> offsets(map.vertices().size(), Point::Zero());
    for (std::size_t k = 1; k < offsets.size(); ++k) {
        const double dx = unit(rng);
        const double dy = unit(rng);
        offsets[k] = {dx, dy};
    }
    const double l = lipschitz_bound;
    auto admissible = [&](const PiecewiseAffineMap& m) {
        for (std::size_t t = 0; t < m.triangle_count(); ++t) {
            if (!(m.signed_image_area(t) >= kDegenerateArea)) return false;
            const auto sv = singular_values(m.differential(t));
            if (!(sv.max < l && sv.min > 1.0 / l)) return false;
        }
        return true;
    };
    double scale = jitter * std::min(map.cell_width(), map.cell_height());
    for (int tries = 0; tries < 60 && scale > 0.0; ++tries, scale *= 0.5) {
        PiecewiseAffineMap candidate = map;
        auto& v = candidate.mutable_vertices();
        for (std::size_t k = 0; k < v.size(); ++k) v[k] += scale * offsets[k];
        if (admissible(candidate)) return candidate;
    }
    return map;
}

double mismatch_area(const PiecewiseAffineMap& map, const DensityField& rho, double tau) {
    if (!(tau > 0.0)) throw Error("tau must be positive");
    require_same_grid(rho, map);
    const DensityField jac = jacobian_field(map);
    std::size_t bad = 0;
    for (std::size_t k = 0; k < jac.values().size(); ++k)
        if (std::abs(jac.values()[k] - rho.values()[k]) > tau) ++bad;
    return static_cast<double>(bad) * rho.cell_area();
}

SolveReport realize_jacobian(const DensityField& rho, const SolverConfig& config,
                             const PiecewiseAffineMap& initial) {
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    require_same_grid(rho, initial);
    require_nondegenerate(initial);

    const Point origin = initial.vertices().front();
    const PiecewiseAffineMap start = initial.transformed(Mat2::Identity(), -origin);
    const double l = config.lipschitz_bound;

    auto finish = [&](SolveReport r) {
        r.mismatch_area = mismatch_area(r.map, rho, config.tau);
        r.achieved_lipschitz = bilipschitz_constant(r.map);
        r.evidence = r.mismatch_area == 0.0 ? Evidence::realized : Evidence::failed_after_restarts;
        r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        return r;
    };

    if (l == 1.0) {
        if (bilipschitz_constant(start) > 1.0 + 1e-6)
            throw Error("initial map violates the bi-Lipschitz bound");
        SolveReport r{start};
        r.converged = true;
        r.stop_reason = "L = 1 admits only rigid maps";
        return finish(std::move(r));
    }
    for (std::size_t t = 0; t < start.triangle_count(); ++t) {
        const auto sv = singular_values(start.differential(t));
        if (!(sv.max < l && sv.min > 1.0 / l))
            throw Error("initial map violates the bi-Lipschitz bound");
    }

    const double lo = 1.0 / (l * l) - config.tau, hi = l * l + config.tau;
    const bool reachable = std::any_of(rho.values().begin(), rho.values().end(),
                                       [&](double v) { return v >= lo && v <= hi; });
    if (!reachable) {
        SolveReport r{start};
        r.trace = {};
        r.converged = true;
        r.stop_reason = "target outside the reachable Jacobian range";
        return finish(std::move(r));
    }

    const JacobianObjective objective(rho, start, config);
    const double cell = std::min(start.cell_width(), start.cell_height());
    const Eigen::VectorXd x0 = objective.flatten(start);

    std::optional<SolveReport> best;
    double best_objective = kInf;
    for (int run = 0; run <= config.restarts; ++run) {
        Eigen::VectorXd x =
            run == 0 ? x0
                     : objective.flatten(jittered_map(start, l, config.restart_jitter,
                                                      config.seed, run));
        if (objective.max_residual(x) > 1e-12) x = scale_warm_start(objective, x, l);
        RunResult result = descend(objective, std::move(x), config, cell);
        SolveReport r{objective.unflatten(result.x)};
        r.trace = std::move(result.trace);
        r.iterations = result.iterations;
        r.converged = result.converged;
        r.stop_reason = std::move(result.stop_reason);
        r.mismatch_area = mismatch_area(r.map, rho, config.tau);
        const double final_objective = r.trace.empty() ? kInf : r.trace.back();
        if (log::enabled(log::Level::info)) {
            std::ostringstream os;
            os << "run " << run << ": " << r.iterations << " steps, mismatch area "
               << r.mismatch_area << ", objective " << final_objective << " (" << r.stop_reason
               << ")";
            log::write(log::Level::info, os.str());
        }
        const bool better = !best || r.mismatch_area < best->mismatch_area ||
                            (r.mismatch_area == best->mismatch_area &&
                             final_objective < best_objective);
        if (better) {
            best_objective = final_objective;
            r.best_run = run;
            best = std::move(r);
        }
    }
    best->runs = config.restarts + 1;
    return finish(std::move(*best));
}

} // namespace jacprobe
