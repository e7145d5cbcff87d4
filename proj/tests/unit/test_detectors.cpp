#include "qd/detectors.hpp"
#include "qd/model.hpp"
#include "qd/oc_solver.hpp"
#include "qd/parallel.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

using namespace qd;

namespace {

// Observation whose likelihood ratio is (up to rounding) exactly 1.
double unit_lr_observation(const GaussianChangeModel& m) {
    const double c = (m.theta() - m.mu()) / (2.0 * m.a());
    const double beta = -c + 0.5 * std::log(m.mu() / m.theta());
    const double alpha = c / (m.theta() * m.mu());
    return std::sqrt(-beta / alpha);
}

struct MeanSe {
    double mean;
    double se;
};

MeanSe mean_se(const std::vector<double>& v) {
    CompensatedSum s;
    CompensatedSum s2;
    for (double x : v) {
        s.add(x);
        s2.add(x * x);
    }
    const double n = static_cast<double>(v.size());
    const double mean = s.value() / n;
    const double var = (s2.value() - n * mean * mean) / (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

}  // namespace

TEST_CASE("xi maps") {
    CHECK(xi_map(Procedure::cusum)(0.3) == 1.0);
    CHECK(xi_map(Procedure::sr)(0.0) == 1.0);
    CHECK(xi_map(Procedure::sr_r)(50.345) == doctest::Approx(51.345));
    CHECK(xi_map(Procedure::srp)(2.0) == 3.0);
    CHECK(parse_procedure("SR-r") == Procedure::sr_r);
    CHECK(parse_procedure("cusum") == Procedure::cusum);
    CHECK_THROWS_AS(parse_procedure("glr"), std::invalid_argument);
}

TEST_CASE("update recursion") {
    SUBCASE("SR with unit likelihood ratios counts observations") {
        const auto spec = DetectorSpec::sr(4.5);
        Rng rng(1);
        DetectorState s = initial_state(spec, rng);
        for (int n = 1; n <= 4; ++n) {
            s = update(s, spec, 1.0);
            CHECK(s.statistic == doctest::Approx(n));
            CHECK_FALSE(s.alarmed);
        }
        s = update(s, spec, 1.0);
        CHECK(s.alarmed);
        CHECK(s.time_index == 5);
        CHECK_THROWS_AS(update(s, spec, 1.0), std::logic_error);
    }
    SUBCASE("CUSUM with unit likelihood ratios stays at 1") {
        const auto spec = DetectorSpec::cusum(2.0);
        Rng rng(1);
        DetectorState s = initial_state(spec, rng);
        for (int n = 0; n < 1000; ++n) {
            s = update(s, spec, 1.0);
        }
        CHECK(s.statistic == 1.0);
        CHECK_FALSE(s.alarmed);
    }
    SUBCASE("SR-r head start") {
        const auto spec = DetectorSpec::sr_r(1811.0, 845.872);
        Rng rng(1);
        const DetectorState s = update(initial_state(spec, rng), spec, 1.001);
        CHECK(s.statistic == doctest::Approx(847.718872).epsilon(1e-12));
    }
    SUBCASE("invalid inputs") {
        const auto spec = DetectorSpec::sr(10.0);
        Rng rng(1);
        CHECK_THROWS_AS(update(initial_state(spec, rng), spec, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(DetectorSpec::sr_r(10.0, 10.0).validate(), std::invalid_argument);
        DetectorSpec srp;
        srp.kind = Procedure::srp;
        srp.threshold = 10.0;
        CHECK_THROWS_AS(srp.validate(), std::invalid_argument);
    }
}

TEST_CASE("run_single on a unit-LR stream") {
    const GaussianChangeModel m(1000, 1001, 1.0);
    const double x = unit_lr_observation(m);
    CHECK(m.likelihood_ratio(x) == doctest::Approx(1.0).epsilon(1e-12));
    const std::vector<double> obs(20, x);
    CHECK(run_single(DetectorSpec::sr(4.5), m, obs) == 5u);
    CHECK_FALSE(run_single(DetectorSpec::cusum(1.5), m, obs).has_value());
    CHECK_THROWS(run_single(DetectorSpec::sr(4.5), m, std::vector<double>{}));
}

TEST_CASE("run_multicyclic bookkeeping") {
    const GaussianChangeModel m(1000, 1001, 1.0);
    const std::vector<double> obs(23, unit_lr_observation(m));
    const auto spec = DetectorSpec::sr(4.5);
    SUBCASE("nu = 0: first alarm equals the single-run stopping time") {
        const MulticyclicResult r = run_multicyclic(spec, m, obs, 0);
        REQUIRE_FALSE(r.log.alarm_times.empty());
        CHECK(r.log.alarm_times.front() == *run_single(spec, m, obs));
        CHECK(r.false_alarms == 0);
        CHECK(r.detection_delay == 5u);
    }
    SUBCASE("restarts, cycle lengths and false alarms") {
        MulticyclicOptions opts;
        opts.record_trajectory = true;
        const MulticyclicResult r = run_multicyclic(spec, m, obs, 12, opts);
        CHECK(r.log.alarm_times == std::vector<std::uint64_t>{5, 10, 15, 20});
        CHECK(r.log.cycle_lengths == std::vector<std::uint64_t>{5, 5, 5, 5});
        CHECK(r.false_alarms == 2);
        CHECK(r.detection_delay == 3u);
        CHECK(r.log.statistic_trajectory.size() == obs.size());
    }
}

TEST_CASE("quasi-stationary head-start law") {
    SUBCASE("narrow panel behaves like a point mass") {
        const double lo = 3.0 - 1e-9;
        const double hi = 3.0 + 1e-9;
        const PiecewiseConstantDensity q({0.0, lo, hi, 10.0}, {0.0, 1.0 / (hi - lo), 0.0});
        CHECK(draw_head_start(q, 1) == doctest::Approx(3.0).epsilon(1e-8));
        CHECK(draw_head_start(q, 99) == doctest::Approx(3.0).epsilon(1e-8));
    }
    SUBCASE("unnormalized density is rejected") {
        CHECK_THROWS_AS(PiecewiseConstantDensity({0.0, 1.0}, {0.9}), std::invalid_argument);
        CHECK_THROWS_AS(PiecewiseConstantDensity({0.0, 1.0}, {-1.0}), std::invalid_argument);
    }
    SUBCASE("draws from the solver's law average to mu_Q") {
        const GaussianChangeModel m(1000, 1001, 1.0);
        const OcSolver solver(m, Procedure::srp, 1844.0, 2000);
        const QuasiStationary qs = solver.quasi_stationary();
        CHECK(std::fabs(qs.mean - 879.248) / 879.248 < 0.01);
        std::vector<double> draws(1'000'000);
        Rng rng(4);
        for (auto& d : draws) {
            d = qs.distribution->sample(rng);
        }
        const MeanSe ms = mean_se(draws);
        CHECK(std::fabs(ms.mean - qs.mean) < 3.0 * ms.se);
        CHECK(draw_head_start(*qs.distribution, 17) == draw_head_start(*qs.distribution, 17));
    }
}

TEST_CASE("pathwise properties") {
    const GaussianChangeModel m(1000, 1001, 1.0);
    Rng rng(8);
    std::vector<double> obs(2000);
    for (auto& x : obs) {
        x = m.sample(Hypothesis::pre, rng);
    }
    const auto low = DetectorSpec::sr_r(1e9, 10.0);
    const auto high = DetectorSpec::sr_r(1e9, 100.0);
    const auto cusum = DetectorSpec::cusum(1e9);
    Rng r0(0);
    DetectorState a = initial_state(low, r0);
    DetectorState b = initial_state(high, r0);
    DetectorState w = initial_state(cusum, r0);
    for (double x : obs) {
        const double lr = m.likelihood_ratio(x);
        a = update(a, low, lr);
        b = update(b, high, lr);
        w = update(w, cusum, lr);
        CHECK(b.statistic >= a.statistic);
        CHECK(a.statistic >= lr);
        CHECK(w.statistic >= lr);
    }
}

TEST_CASE("simulated mean stopping times match the low-noise operating point") {
    const GaussianChangeModel m(1000, 1001, 0.01);
    for (const auto& [spec, target] :
         {std::pair{DetectorSpec::cusum(350.75), 10001.223},
          std::pair{DetectorSpec::sr(8314.4), 10000.188}}) {
        std::vector<double> t(10'000);
        parallel_for(t.size(), [&](std::size_t i) {
            t[i] = static_cast<double>(
                *simulate_stopping_time(spec, m, std::nullopt, derive_seed(31, i), 10'000'000));
        });
        const MeanSe ms = mean_se(t);
        CHECK(std::fabs(ms.mean - target) < 2.0 * ms.se);
    }
}

TEST_CASE("determinism of logs") {
    const GaussianChangeModel m(1000, 1001, 1.0);
    Rng rng(12);
    std::vector<double> obs(5000);
    for (auto& x : obs) {
        x = m.sample(Hypothesis::pre, rng);
    }
    const auto spec = DetectorSpec::sr(300.0);
    const MulticyclicResult a = run_multicyclic(spec, m, obs, 5000);
    const MulticyclicResult b = run_multicyclic(spec, m, obs, 5000);
    CHECK(a.log.alarm_times == b.log.alarm_times);
    CHECK(a.false_alarms == b.false_alarms);
}
