#pragma once

#include "qd/asymptotics.hpp"
#include "qd/detectors.hpp"
#include "qd/model.hpp"
#include "qd/oc_solver.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace qd {

struct CalibrationOptions {
    std::size_t grid_size = 2000;
    /// Stop once the bracket on A is this narrow (relative).
    double threshold_tolerance = 1e-6;
    /// Closure check on the achieved ARL; failure throws NumericalError.
    double arl_tolerance = 1e-3;
    std::size_t max_iterations = 60;
    /// Optional constants to seed the search (zeta); a crude seed is used
    /// otherwise.
    std::optional<ConstantValues> constants;
};

struct CalibrationResult {
    Procedure procedure = Procedure::sr;
    double gamma_target = 0.0;
    double threshold = 0.0;
    double head_start = 0.0;
    double achieved_arl = 0.0;
    std::size_t iterations = 0;  // solver evaluations
    /// SRP only: mean of the quasi-stationary head-start law at the result.
    std::optional<double> quasi_stationary_mean;
};

/// ARL of a (procedure, A, head start) on a solved grid: ell(1) for CUSUM,
/// ell(0) for SR, ell(r) for SR-r and 1/(1 - lambda_A) for SRP.
double solver_arl(const OcSolver& solver, double head_start = 0.0);

/// Finds A with ARL(A) = gamma by bracketing plus TOMS 748 on the solver ARL,
/// which is increasing in A. For SR-r the head start stays fixed.
CalibrationResult calibrate_threshold(Procedure procedure, const GaussianChangeModel& model,
                                      double gamma, double head_start = 0.0,
                                      const CalibrationOptions& options = {});

/// Head start r in [0, A) with ell(r) = gamma on a solved SR-type grid, or
/// nullopt when even r = 0 gives ARL below gamma.
std::optional<double> head_start_for_arl(const OcSolver& solver, double gamma);

struct RStarPoint {
    double threshold = 0.0;
    double head_start = 0.0;
    double arl = 0.0;
    double sadd = 0.0;         // J_P = max(sup of computed ADD_nu, ADD_inf)
    double lower_bound = 0.0;  // J_LB(r)
    double gap() const { return sadd - lower_bound; }
};

struct RStarOptions {
    std::size_t grid_size = 2000;
    std::size_t sweep_points = 20;
    std::size_t refine_iterations = 12;
    /// Gaps closer than this (relative to J_LB) are treated as ties.
    double flat_tolerance = 1e-3;
    /// The supremum is max(prefix, exact ADD_inf), so a short prefix suffices.
    DelayProfileOptions profile{1000, 1e-4, 0};
};

struct RStarResult {
    RStarPoint best;
    std::vector<RStarPoint> sweep;  // grid points in increasing A
    std::vector<std::string> warnings;
};

/// Sweeps A upward from the SR threshold, restores ARL = gamma through r at
/// each A, and minimizes J_P - J_LB; ties go to the smallest r.
RStarResult find_r_star(const GaussianChangeModel& model, double gamma,
                        const RStarOptions& options = {});

struct RStarPractical {
    double head_start = 0.0;
    Estimate c_r;
    Estimate c_inf;
    std::vector<std::string> warnings;
};

/// Solves C_r = C_inf on the stored Monte-Carlo samples (common random
/// numbers across r).
RStarPractical find_r_star_practical(const AsymptoticConstants& constants);

}  // namespace qd
