#include "qd/design.hpp"

#include "qd/errors.hpp"
#include "qd/parallel.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace qd {

namespace {

// Relative bracket-width stop for the Boost root finders.
struct RelativeWidth {
    double tol;
    bool operator()(double a, double b) const {
        return std::fabs(b - a) <= tol * std::max(std::fabs(a), std::fabs(b));
    }
};

// Crude inverse of the asymptotic ARL formulas, only used as a starting point.
double seed_threshold(Procedure procedure, const GaussianChangeModel& model, double gamma,
                      double head_start, const std::optional<ConstantValues>& constants) {
    const double zeta = constants ? constants->zeta : 1.0;
    if (procedure != Procedure::cusum) {
        return zeta * (gamma + head_start);
    }
    // gamma ~ A / (I_g zeta^2) - log A / I_f - 1 / (I_g zeta); a few fixed-point
    // steps from A = 2 are plenty for a seed.
    const KlNumbers kl = model.kl_numbers();
    double a = 2.0;
    for (int i = 0; i < 20; ++i) {
        a = kl.i_g * zeta * zeta * (gamma + std::log(a) / kl.i_f + 1.0 / (kl.i_g * zeta));
        a = std::max(a, 1.0 + 1e-6);
    }
    return a;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

double solver_arl(const OcSolver& solver, double head_start) {
    switch (solver.procedure()) {
        case Procedure::cusum: return solver.arl(1.0);
        case Procedure::sr: return solver.arl(0.0);
        case Procedure::sr_r: return solver.arl(head_start);
        case Procedure::srp: return 1.0 / (1.0 - solver.quasi_stationary().lambda);
    }
    return 0.0;
}

CalibrationResult calibrate_threshold(Procedure procedure, const GaussianChangeModel& model,
                                      double gamma, double head_start,
                                      const CalibrationOptions& options) {
    if (!(gamma > 1.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument("calibrate_threshold: gamma must exceed 1");
    }
    if (procedure == Procedure::sr_r && !(head_start >= 0.0)) {
        throw std::invalid_argument("calibrate_threshold: head start must be >= 0");
    }
    const double floor = procedure == Procedure::sr_r ? head_start : 0.0;

    CalibrationResult result;
    result.procedure = procedure;
    result.gamma_target = gamma;
    result.head_start = procedure == Procedure::sr_r ? head_start : 0.0;
    double best_error = std::numeric_limits<double>::infinity();

    // Unknown u = A - floor > 0 keeps SR-r thresholds above the head start.
    auto f = [&](double u) {
        const double threshold = floor + u;
        const OcSolver solver(model, procedure, threshold, options.grid_size);
        std::optional<QuasiStationary> qs;
        double arl = 0.0;
        if (procedure == Procedure::srp) {
            qs = solver.quasi_stationary();
            arl = 1.0 / (1.0 - qs->lambda);
        } else {
            arl = solver_arl(solver, result.head_start);
        }
        ++result.iterations;
        const double err = std::fabs(arl - gamma);
        if (err < best_error) {
            best_error = err;
            result.threshold = threshold;
            result.achieved_arl = arl;
            if (qs) {
                result.quasi_stationary_mean = qs->mean;
            }
        }
        return std::log(arl / gamma);
    };

    const double guess =
        std::max(seed_threshold(procedure, model, gamma, head_start, options.constants) - floor,
                 1e-3 * (floor + 1.0));
    std::uintmax_t max_iter = options.max_iterations;
    try {
        boost::math::tools::bracket_and_solve_root(f, guess, 2.0, true,
                                                   RelativeWidth{options.threshold_tolerance},
                                                   max_iter);
    } catch (const std::exception& e) {
        throw NumericalError(std::string("calibrate_threshold: ") + e.what());
    }
    if (!(best_error <= options.arl_tolerance * gamma)) {
        throw NumericalError("calibrate_threshold: achieved ARL " + fmt(result.achieved_arl) +
                             " misses gamma " + fmt(gamma) + " after " +
                             std::to_string(result.iterations) + " evaluations");
    }
    return result;
}

std::optional<double> head_start_for_arl(const OcSolver& solver, double gamma) {
    if (solver.procedure() == Procedure::cusum) {
        throw std::invalid_argument("head_start_for_arl: SR-type procedures only");
    }
    const double upper = solver.grid().threshold() * (1.0 - 1e-12);
    auto f = [&](double r) { return solver.arl(r) - gamma; };
    const double f0 = f(0.0);
    if (f0 < 0.0) {
        return std::nullopt;
    }
    if (f0 == 0.0) {
        return 0.0;
    }
    const double fu = f(upper);
    if (fu > 0.0) {
        throw NumericalError("head_start_for_arl: ARL stays above gamma for every r < A");
    }
    std::uintmax_t max_iter = 100;
    const auto [lo, hi] =
        boost::math::tools::toms748_solve(f, 0.0, upper, f0, fu, RelativeWidth{1e-12}, max_iter);
    return 0.5 * (lo + hi);
}

namespace {

RStarPoint evaluate_point(const GaussianChangeModel& model, double gamma, double threshold,
                          const RStarOptions& options) {
    const OcSolver solver(model, Procedure::sr_r, threshold, options.grid_size);
    RStarPoint p;
    p.threshold = threshold;
    const auto r = head_start_for_arl(solver, gamma);
    if (!r) {
        p.head_start = std::numeric_limits<double>::quiet_NaN();
        return p;
    }
    p.head_start = *r;
    p.arl = solver.arl(*r);
    const QuasiStationary qs = solver.quasi_stationary();
    p.sadd = solver.delay_profile(*r, options.profile, &qs).supremum;
    p.lower_bound = solver.lower_bound(*r);
    return p;
}

}  // namespace

RStarResult find_r_star(const GaussianChangeModel& model, double gamma,
                        const RStarOptions& options) {
    if (options.sweep_points < 3) {
        throw std::invalid_argument("find_r_star: need at least 3 sweep points");
    }
    CalibrationOptions cal;
    cal.grid_size = options.grid_size;
    const CalibrationResult sr = calibrate_threshold(Procedure::sr, model, gamma, 0.0, cal);

    // From ARL ~ A/zeta - r, r reaches A/2 near A = gamma / (1/zeta - 1/2).
    const double zeta_hat = sr.threshold / gamma;
    const double inv = 1.0 / zeta_hat - 0.5;
    const double a_max = inv > 0.0 ? std::max(gamma / inv, 1.05 * sr.threshold) : 2.0 * sr.threshold;

    RStarResult out;
    const std::size_t n = options.sweep_points;
    std::vector<RStarPoint> points(n);
    parallel_for(n, [&](std::size_t k) {
        const double t = static_cast<double>(k) / static_cast<double>(n - 1);
        const double threshold = sr.threshold * std::pow(a_max / sr.threshold, t);
        points[k] = evaluate_point(model, gamma, threshold, options);
    });
    for (const auto& p : points) {
        if (std::isfinite(p.head_start) && p.head_start <= 0.5 * p.threshold) {
            out.sweep.push_back(p);
        }
    }
    if (out.sweep.empty()) {
        throw NumericalError("find_r_star: no sweep point satisfies ARL = gamma");
    }

    double min_gap = std::numeric_limits<double>::infinity();
    double max_gap = -std::numeric_limits<double>::infinity();
    for (const auto& p : out.sweep) {
        min_gap = std::min(min_gap, p.gap());
        max_gap = std::max(max_gap, p.gap());
        if (p.gap() < -options.flat_tolerance * p.lower_bound) {
            out.warnings.push_back("negative gap J_P - J_LB = " + fmt(p.gap()) + " at A=" +
                                   fmt(p.threshold) + " (solver resolution)");
        }
    }
    const double tie = options.flat_tolerance * out.sweep.front().lower_bound;
    std::size_t best = 0;
    while (out.sweep[best].gap() > min_gap + tie) {
        ++best;  // first (smallest r) point within the tie band
    }
    if (max_gap - min_gap <= tie) {
        out.warnings.push_back("gap J_P - J_LB is flat within solver accuracy across the sweep; "
                               "returning the smallest head start");
    }
    out.best = out.sweep[best];

    // Brent refinement (golden-section steps with parabolic acceleration)
    // between the neighbours of the best grid point.
    if (options.refine_iterations > 0 && out.sweep.size() >= 2) {
        const double lo = out.sweep[best == 0 ? 0 : best - 1].threshold;
        const double hi = out.sweep[std::min(best + 1, out.sweep.size() - 1)].threshold;
        if (hi > lo) {
            RStarPoint refined = out.best;
            auto gap = [&](double threshold) {
                const RStarPoint p = evaluate_point(model, gamma, threshold, options);
                if (!std::isfinite(p.head_start) || p.head_start > 0.5 * p.threshold) {
                    return std::numeric_limits<double>::max();
                }
                const bool better = p.gap() < refined.gap() - tie;
                const bool tied = std::fabs(p.gap() - refined.gap()) <= tie;
                if (better || (tied && p.head_start < refined.head_start)) {
                    refined = p;
                }
                return p.gap();
            };
            std::uintmax_t iters = options.refine_iterations;
            boost::math::tools::brent_find_minima(gap, lo, hi, 20, iters);
            out.best = refined;
        }
    }
    return out;
}

RStarPractical find_r_star_practical(const AsymptoticConstants& constants) {
    if (!constants.samples) {
        throw std::invalid_argument("find_r_star_practical: constants carry no samples");
    }
    const CSamples& s = *constants.samples;
    RStarPractical out;
    out.c_inf = s.c_inf();
    const Estimate c0 = s.c0();
    if (!(std::isfinite(c0.std_error) && std::isfinite(out.c_inf.std_error))) {
        throw std::invalid_argument("find_r_star_practical: standard errors must be finite");
    }
    if (out.c_inf.value <= c0.value) {
        const double noise = 3.0 * std::hypot(c0.std_error, out.c_inf.std_error);
        if (c0.value - out.c_inf.value > noise) {
            throw NumericalError("find_r_star_practical: C_inf < C_0 beyond Monte-Carlo noise; "
                                 "constants are inconsistent");
        }
        out.warnings.push_back("C_inf <= C_0 within noise; r = 0");
        out.c_r = c0;
        return out;
    }
    auto f = [&](double r) { return s.c_r(r).value - out.c_inf.value; };
    // C_r >= log(1 + r), so r = exp(C_inf) already overshoots.
    const double hi = std::exp(out.c_inf.value);
    std::uintmax_t max_iter = 200;
    const auto [a, b] = boost::math::tools::toms748_solve(f, 0.0, hi, c0.value - out.c_inf.value,
                                                          f(hi), RelativeWidth{1e-10}, max_iter);
    out.head_start = 0.5 * (a + b);
    out.c_r = s.c_r(out.head_start);
    return out;
}

}  // namespace qd
