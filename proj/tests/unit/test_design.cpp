#include "qd/design.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

using namespace qd;

namespace {

double rel(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

const GaussianChangeModel high_noise(1000, 1001, 1.0);

}  // namespace

TEST_CASE("SRP calibration at high noise") {
    const CalibrationResult r = calibrate_threshold(Procedure::srp, high_noise, 1000.0);
    CHECK(rel(r.threshold, 1844.0) < 0.005);
    CHECK(rel(r.achieved_arl, 1000.0) < 1e-3);
    REQUIRE(r.quasi_stationary_mean);
    CHECK(rel(*r.quasi_stationary_mean, 879.248) < 0.01);
}

TEST_CASE("SR calibration closes on the target") {
    CalibrationOptions opts;
    opts.grid_size = 800;
    const CalibrationResult r = calibrate_threshold(Procedure::sr, high_noise, 1000.0, 0.0, opts);
    const OcSolver s(high_noise, Procedure::sr, r.threshold, opts.grid_size);
    CHECK(rel(solver_arl(s), 1000.0) < 1e-3);
    CHECK(rel(r.threshold, 981.0) < 0.02);
    CHECK_THROWS_AS(calibrate_threshold(Procedure::sr, high_noise, 0.5), std::invalid_argument);
}

TEST_CASE("ARL is increasing in A and in the head start") {
    double prev = 0.0;
    for (double a : {200.0, 500.0, 981.0, 1500.0}) {
        const OcSolver s(high_noise, Procedure::sr_r, a, 500);
        const double arl = solver_arl(s);
        CHECK(arl > prev);
        prev = arl;
        double prev_r = std::numeric_limits<double>::infinity();
        for (double r : {0.0, 0.2 * a, 0.5 * a, 0.9 * a}) {
            const double v = solver_arl(s, r);
            CHECK(v < prev_r);
            prev_r = v;
        }
    }
}

TEST_CASE("head start for a target ARL") {
    const OcSolver s(high_noise, Procedure::sr_r, 1811.0, 1000);
    const auto r = head_start_for_arl(s, 1000.0);
    REQUIRE(r);
    CHECK(rel(s.arl(*r), 1000.0) < 1e-6);
    CHECK(rel(*r, 845.872) < 0.02);
    CHECK_FALSE(head_start_for_arl(s, 1e9).has_value());
}

TEST_CASE("r* sweep on a small problem") {
    RStarOptions opts;
    opts.grid_size = 300;
    opts.sweep_points = 5;
    opts.refine_iterations = 4;
    opts.profile = {200, 1e-3, 0};
    const RStarResult res = find_r_star(GaussianChangeModel(1000, 1001, 0.01), 100.0, opts);
    REQUIRE_FALSE(res.sweep.empty());
    for (const RStarPoint& p : res.sweep) {
        CHECK(rel(p.arl, 100.0) < 1e-3);
        CHECK(p.gap() >= -1e-6 * p.lower_bound);
        CHECK(p.head_start < p.threshold);
    }
    for (const RStarPoint& p : res.sweep) {
        CHECK(res.best.gap() <= p.gap() + 1e-9);
    }
}

TEST_CASE("practical r* from stored samples") {
    const AsymptoticConstants c = estimate_asymptotic_constants(high_noise, smoke_budget());
    const RStarPractical r = find_r_star_practical(c);
    CHECK(r.head_start > 0.0);
    CHECK(std::fabs(r.c_r.value - r.c_inf.value) < 1e-8);

    // A fresh simulation started from r* reproduces C_inf within noise.
    const CConstants fresh = estimate_c_constants(high_noise, smoke_budget(99), r.head_start);
    REQUIRE(fresh.c_r);
    const double se = std::hypot(fresh.c_r->std_error, c.c_inf.std_error);
    CHECK(std::fabs(fresh.c_r->value - c.c_inf.value) < 3.0 * se);

    AsymptoticConstants no_samples = c;
    no_samples.samples.reset();
    CHECK_THROWS_AS(find_r_star_practical(no_samples), std::invalid_argument);
}
