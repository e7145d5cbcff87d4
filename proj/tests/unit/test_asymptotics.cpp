#include "qd/asymptotics.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace qd;

namespace {

double rel(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

const GaussianChangeModel low_noise(1000, 1001, 0.01);
const GaussianChangeModel high_noise(1000, 1001, 1.0);

ConstantValues low_noise_constants() { return {0.83145, 0.22, -1.0, 1.3, 3.59, 4.5}; }

}  // namespace

TEST_CASE("ARL approximations") {
    const ConstantValues c = low_noise_constants();
    CHECK(approx_arl(Procedure::sr, 8314.4, c, low_noise) * c.zeta == doctest::Approx(8314.4));
    CHECK(rel(approx_arl(Procedure::srp, 8392.0, c, low_noise, 93.699), 9999.5) < 1e-4);
    CHECK(rel(approx_arl(Procedure::sr_r, 8356.0, c, low_noise, 50.345), 9999.57) < 1e-4);
    CHECK(rel(approx_arl(Procedure::cusum, 350.75, c, low_noise), 10006.0) < 0.005);
    CHECK_THROWS_AS(approx_arl(Procedure::sr, 0.0, c, low_noise), std::invalid_argument);
}

TEST_CASE("delay approximations pick the matching constant") {
    const ConstantValues c = low_noise_constants();
    const double i_g = low_noise.kl_numbers().i_g;
    const double log_a = std::log(8314.4);
    CHECK(approx_delay(Procedure::sr, 8314.4, c, low_noise) ==
          doctest::Approx((log_a + c.varkappa - c.c0) / i_g));
    CHECK(approx_delay(Procedure::sr, 8314.4, c, low_noise, DelayMeasure::add_inf) ==
          doctest::Approx((log_a + c.varkappa - c.c_inf) / i_g));
    CHECK(approx_delay(Procedure::cusum, 8314.4, c, low_noise) ==
          doctest::Approx((log_a + c.varkappa + c.beta0) / i_g));
    CHECK(approx_lower_bound(8314.4, c, low_noise) ==
          approx_delay(Procedure::srp, 8314.4, c, low_noise));
    CHECK_THROWS_AS(approx_delay(Procedure::sr, 0.5, c, low_noise), std::invalid_argument);
}

TEST_CASE("C_r on stored samples") {
    const CConstants c = estimate_c_constants(low_noise, smoke_budget());
    REQUIRE(c.samples);
    CHECK(c.samples->c_r(0.0).value == c.c0.value);
    double prev = c.c0.value;
    for (double r : {1.0, 10.0, 50.0, 200.0}) {
        const double v = c.samples->c_r(r).value;
        CHECK(v > prev);
        prev = v;
    }
    CHECK(c.c0.value + 3.0 * std::hypot(c.c0.std_error, c.c_inf.std_error) < c.c_inf.value);
    CHECK(c.v_tilde_tail < 1e-6);

    const CConstants again = estimate_c_constants(low_noise, smoke_budget());
    CHECK(again.c0.value == c.c0.value);
    CHECK(again.c_inf.value == c.c_inf.value);
    const CConstants other = estimate_c_constants(low_noise, smoke_budget(7));
    CHECK(other.c0.value != c.c0.value);
}

TEST_CASE("smoke-budget constants at low noise") {
    const AsymptoticConstants c = estimate_asymptotic_constants(low_noise, smoke_budget());
    CHECK(c.mc_paths == 10'000);
    CHECK(c.mc_horizon == 1'000);
    CHECK(c.zeta.value > 0.0);
    CHECK(c.zeta.value < 1.0);
    CHECK(c.varkappa.value > 0.0);
    CHECK(c.beta0.value < 0.0);
    CHECK(c.beta_inf.value > 0.0);
    CHECK(c.c0.value < c.c_inf.value);
    for (const Estimate& e : {c.zeta, c.varkappa, c.beta0, c.beta_inf, c.c0, c.c_inf}) {
        CHECK(e.std_error > 0.0);
        CHECK(std::isfinite(e.std_error));
    }
    CHECK(rel(c.zeta.value, 0.83145) < 0.10);
    CHECK(rel(c.c0.value, 3.59) < 0.10);
    CHECK(rel(c.c_inf.value, 4.5) < 0.10);

    // The ARL and delay approximations built from estimated constants stay
    // close to the solver values at the low-noise operating point.
    const ConstantValues v = c.values();
    CHECK(rel(approx_arl(Procedure::sr, 8314.4, v, low_noise), 10000.188) < 0.06);
    CHECK(rel(approx_delay(Procedure::sr, 8314.4, v, low_noise, DelayMeasure::add_inf), 94.0) <
          0.06);
}

TEST_CASE("Monte-Carlo budget validation") {
    MonteCarloBudget b = smoke_budget();
    b.n_paths = 0;
    CHECK_THROWS_AS(estimate_c_constants(high_noise, b), std::invalid_argument);
    b = smoke_budget();
    b.horizon = 0;
    CHECK_THROWS_AS(estimate_overshoot_constants(high_noise, b), std::invalid_argument);
    b = smoke_budget();
    b.batches = 1;
    CHECK_THROWS_AS(estimate_beta_constants(high_noise, b), std::invalid_argument);
    b = smoke_budget();
    b.batches = b.n_paths + 1;
    CHECK_THROWS_AS(estimate_beta_constants(high_noise, b), std::invalid_argument);
}
