#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jacprobe/density.hpp"
#include "jacprobe/plmap.hpp"

namespace jacprobe {

struct SolverConfig {
    double lipschitz_bound = 2.0;  // L: every triangle's singular values stay in [1/L, L]
    double tau = 0.05;             // pointwise |Jac - rho| mismatch threshold
    int max_iterations = 2000;
    // Step schedule: each iteration tries initial_step along the search
    // direction and shrinks by `backtrack` until the Armijo condition holds;
    // a trial step below min_step ends the run.
    double initial_step = 1.0;
    double backtrack = 0.5;
    double armijo = 1e-4;
    double min_step = 1e-12;
    double jacobian_weight = 1.0;
    double barrier_weight = 1e-4;
    int restarts = 0;              // randomized restarts on top of the given initial map
    double restart_jitter = 0.25;  // vertex jitter, as a fraction of the cell size
    std::uint64_t seed = 0;
    double gradient_tolerance = 1e-12;
    int history = 8;               // quasi-Newton memory

    void validate() const;
};

enum class Evidence {
    realized,             // some map matched rho everywhere within tau
    failed_after_restarts // no run matched; evidence against realizability only
};

const char* to_string(Evidence e);

struct SolveReport {
    explicit SolveReport(PiecewiseAffineMap m) : map(std::move(m)) {}

    PiecewiseAffineMap map;
    double mismatch_area = 0.0;
    double achieved_lipschitz = 1.0;
    std::vector<double> trace; // objective at the start and after each accepted step
    bool converged = false;
    int iterations = 0;        // accepted steps of the best run
    int runs = 1;
    int best_run = 0;
    Evidence evidence = Evidence::realized;
    std::string stop_reason;
    double wall_time = 0.0;    // seconds
};

// Discretized objective over image vertex positions, flattened as
// [x0, y0, x1, y1, ...]:
//   sum_t A_t * w_J * (Jac_t - rho_t)^2 + mu * sum_t A_t * B_t
// where B_t = -log(p(L^2)/L^4) - log(p(L^-2) L^4) and
// p(s) = (s - sigma_max^2)(s - sigma_min^2) = s^2 - |D|_F^2 s + det(D)^2.
// Both logs are smooth in the differential D and blow up as a singular
// value reaches L or 1/L.
class JacobianObjective {
public:
    JacobianObjective(const DensityField& rho, const PiecewiseAffineMap& layout,
                      const SolverConfig& config);

    std::size_t dimension() const noexcept { return 2 * layout_.vertices().size(); }

    // Every triangle positively oriented with singular values strictly
    // inside (1/L, L).
    bool feasible(const Eigen::VectorXd& x) const;

    // +infinity outside the feasible set.
    double value(const Eigen::VectorXd& x) const;
    double value_and_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& gradient) const;

    // Largest |Jac_t - rho_t| over triangles.
    double max_residual(const Eigen::VectorXd& x) const;

    Eigen::VectorXd flatten(const PiecewiseAffineMap& map) const;
    PiecewiseAffineMap unflatten(const Eigen::VectorXd& x) const;

private:
    double triangle_terms(const Eigen::VectorXd& x, std::size_t t, Mat2* grad_d) const;

    PiecewiseAffineMap layout_;
    std::vector<double> target_;   // per-triangle rho
    std::vector<Mat2> edge_inverse_; // per parity
    double area_;
    double lipschitz_, weight_fit_, weight_barrier_;
};

// Searches for a map with Jac = rho whose triangles keep their singular
// values inside [1/L, L]. The image of the domain's first corner is pinned at
// the origin.
SolveReport realize_jacobian(const DensityField& rho, const SolverConfig& config,
                             const PiecewiseAffineMap& initial);

// Copy of `map` with every vertex but the first moved by up to
// jitter * (cell size) in each coordinate; the displacement is halved until
// all singular values lie strictly inside (1/L, L). Returns the map
// unchanged if no tried scale is admissible.
PiecewiseAffineMap jittered_map(const PiecewiseAffineMap& map, double lipschitz_bound,
                                double jitter, std::uint64_t seed, int stream);

// Area of the cells where |Jac - rho| > tau.
double mismatch_area(const PiecewiseAffineMap& map, const DensityField& rho, double tau);

} // namespace jacprobe
