#include "qd/anomaly.hpp"
#include "qd/asymptotics.hpp"
#include "qd/design.hpp"
#include "qd/oc_solver.hpp"
#include "qd/parallel.hpp"
#include "qd/reference.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef QD_PROPERTIES_BINARY
#error "QD_PROPERTIES_BINARY must name the property-suite executable"
#endif

using namespace qd;

namespace {

enum class Status { pass, known_fail, fail };

struct Outcome {
    Status status = Status::pass;
    std::string detail;
};

// Items listed here are documented deviations from the reference values.
// Any other failing item is unexpected and makes the binary exit nonzero.
const std::set<std::string> known_failures = {
    "5:low_noise varkappa",      "5:low_noise beta0",         "5:low_noise beta_inf",
    "5:high_noise varkappa",     "5:high_noise beta0",        "5:high_noise beta_inf",
    "5:high_noise c_inf",        "5:smoke low_noise varkappa", "5:smoke low_noise beta0",
    "5:smoke low_noise beta_inf", "5:smoke high_noise varkappa", "5:smoke high_noise beta0",
    "5:smoke high_noise beta_inf", "5:smoke high_noise c0",     "5:smoke high_noise c_inf",
    "6:low_noise SR SADD",       "6:high_noise CUSUM ADD_inf", "8:CUSUM band",
};

class ItemTracker {
public:
    explicit ItemTracker(int criterion) : criterion_(criterion) {}

    void check(const std::string& item, bool ok, const std::string& detail) {
        std::cout << "    [" << (ok ? "ok" : "miss") << "] " << item << ": " << detail << '\n';
        if (ok) return;
        const std::string key = std::to_string(criterion_) + ":" + item;
        if (known_failures.count(key)) {
            ++known_;
        } else {
            ++unexpected_;
            unexpected_items_.push_back(item);
        }
    }

    Outcome outcome(const std::string& summary) const {
        Outcome o;
        o.detail = summary;
        if (unexpected_ > 0) {
            o.status = Status::fail;
            for (const auto& i : unexpected_items_) o.detail += "; unexpected: " + i;
        } else if (known_ > 0) {
            o.status = Status::known_fail;
            o.detail += "; " + std::to_string(known_) + " documented deviation(s)";
        }
        return o;
    }

private:
    int criterion_;
    int known_ = 0;
    int unexpected_ = 0;
    std::vector<std::string> unexpected_items_;
};

std::string fmt(double v, int precision = 6) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

double rel(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

std::string compare(double computed, double reference) {
    return fmt(computed) + " vs " + fmt(reference) + " (" + fmt(100.0 * (computed - reference) / reference, 3) + "%)";
}

void check_rows(ItemTracker& t, const std::vector<ComparisonRow>& rows) {
    for (const ComparisonRow& r : rows) {
        t.check(r.quantity, r.pass(),
                compare(r.computed, r.reference) + ", tol " + fmt(100.0 * r.rel_tolerance, 3) + "%");
    }
}

struct ScenarioRun {
    ScenarioReproduction result;
    double seconds = 0.0;
};

ScenarioRun run_scenario(const ReferenceScenario& s, bool search_r_star) {
    ReproductionOptions opts;
    opts.search_r_star = search_r_star;
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioRun run{reproduce_scenario(s, opts), 0.0};
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& w : run.result.warnings) std::cout << "    warning: " << w << '\n';
    return run;
}

// ---------------------------------------------------------------------------

const GaussianChangeModel traffic_model(13329.764, 13600.0, 20.028);

struct TrafficThresholds {
    double cusum = 76.32;
    double sr = 731.3;
};

TrafficThresholds calibrated_traffic;

Outcome criterion_7() {
    ItemTracker t(7);
    const CalibrationResult cusum = calibrate_threshold(Procedure::cusum, traffic_model, 1000.0);
    const CalibrationResult sr = calibrate_threshold(Procedure::sr, traffic_model, 1000.0);
    calibrated_traffic = {cusum.threshold, sr.threshold};
    t.check("CUSUM threshold", rel(cusum.threshold, 76.32) < 0.01, compare(cusum.threshold, 76.32));
    t.check("SR threshold", rel(sr.threshold, 731.3) < 0.01, compare(sr.threshold, 731.3));

    const double arl_cusum = solver_arl(OcSolver(traffic_model, Procedure::cusum, 76.32, 2000));
    const double arl_sr = solver_arl(OcSolver(traffic_model, Procedure::sr, 731.3, 2000));
    t.check("CUSUM ARL at 76.32", rel(arl_cusum, 998.4) < 0.005, compare(arl_cusum, 998.4));
    t.check("SR ARL at 731.3", rel(arl_sr, 1000.1) < 0.005, compare(arl_sr, 1000.1));

    const KlNumbers kl = traffic_model.kl_numbers();
    t.check("I_f", rel(kl.i_f, 0.1342) < 0.005, compare(kl.i_f, 0.1342));
    t.check("I_g", rel(kl.i_g, 0.1369) < 0.005, compare(kl.i_g, 0.1369));
    return t.outcome("A_cusum=" + fmt(cusum.threshold) + " A_sr=" + fmt(sr.threshold));
}

// ---------------------------------------------------------------------------

struct ReferenceConstants {
    const char* name;
    GaussianChangeModel model;
    ConstantValues values;
};

const ReferenceConstants reference_constants[] = {
    {"low_noise", GaussianChangeModel(1000, 1001, 0.01), {0.83145, 0.22, -1.0, 1.3, 3.59, 4.5}},
    {"high_noise", GaussianChangeModel(1000, 1001, 1.0), {0.981, 1.55, -2.1, 2.2, 8.08, 8.82}},
};

void check_constants(ItemTracker& t, const std::string& prefix, const AsymptoticConstants& c,
                     const ConstantValues& reference, bool smoke) {
    struct Item {
        const char* name;
        Estimate est;
        double reference;
    };
    const Item items[] = {
        {"zeta", c.zeta, reference.zeta},       {"varkappa", c.varkappa, reference.varkappa},
        {"beta0", c.beta0, reference.beta0},    {"beta_inf", c.beta_inf, reference.beta_inf},
        {"c0", c.c0, reference.c0},             {"c_inf", c.c_inf, reference.c_inf},
    };
    for (const Item& i : items) {
        const double diff = std::fabs(i.est.value - i.reference);
        const double band = smoke ? 0.10 * std::fabs(i.reference)
                                  : std::max(3.0 * i.est.std_error, 0.02 * std::fabs(i.reference));
        t.check(prefix + i.name, diff <= band,
                fmt(i.est.value) + " +- " + fmt(i.est.std_error, 2) + " vs " + fmt(i.reference) +
                    ", band " + fmt(band, 3));
    }
}

Outcome criterion_5() {
    ItemTracker t(5);
    const bool full = std::getenv("QD_FULL_MC") != nullptr && std::string(std::getenv("QD_FULL_MC")) == "1";
    MonteCarloBudget budget;
    if (!full) budget.n_paths = 10'000;
    std::string summary = std::string(full ? "full" : "reduced") + " budget " +
                          std::to_string(budget.n_paths) + "x" + std::to_string(budget.horizon);
    for (const ReferenceConstants& p : reference_constants) {
        const auto t0 = std::chrono::steady_clock::now();
        const AsymptoticConstants smoke = estimate_asymptotic_constants(p.model, smoke_budget());
        check_constants(t, std::string("smoke ") + p.name + " ", smoke, p.values, true);
        const AsymptoticConstants c = estimate_asymptotic_constants(p.model, budget);
        for (const auto& w : c.warnings) std::cout << "    warning: " << w << '\n';
        check_constants(t, std::string(p.name) + " ", c, p.values, false);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        summary += ", " + std::string(p.name) + " " + fmt(secs, 3) + " s";
    }
    return t.outcome(summary);
}

Outcome criterion_6() {
    ItemTracker t(6);
    const ConstantValues& low = reference_constants[0].values;
    const ConstantValues& high = reference_constants[1].values;
    const GaussianChangeModel& ml = reference_constants[0].model;
    const GaussianChangeModel& mh = reference_constants[1].model;
    struct Item {
        const char* name;
        double approx;
        double reference;
    };
    const Item items[] = {
        {"low_noise SR SADD", approx_delay(Procedure::sr, 8314.4, low, ml), 117.0},
        {"low_noise CUSUM SADD", approx_delay(Procedure::cusum, 350.75, low, ml), 101.0},
        {"high_noise SR SADD", approx_delay(Procedure::sr, 981.0, high, mh), 717.0},
        {"high_noise CUSUM SADD", approx_delay(Procedure::cusum, 2.272, high, mh), 541.0},
        {"high_noise SRP", approx_delay(Procedure::srp, 1844.0, high, mh), 500.0},
        {"high_noise CUSUM ADD_inf",
         approx_delay(Procedure::cusum, 2.272, high, mh, DelayMeasure::add_inf), 314.0},
    };
    for (const Item& i : items) {
        t.check(i.name, rel(i.approx, i.reference) < 0.02, compare(i.approx, i.reference));
    }
    // The reported gaps to the solver, for the record.
    const double sr_low = OcSolver(ml, Procedure::sr, 8314.4, 2000).add0(0.0);
    const OcSolver cusum_high(mh, Procedure::cusum, 2.272, 2000);
    const QuasiStationary qs = cusum_high.quasi_stationary();
    const double cusum_high_inf = cusum_high.delay_profile(1.0, {0, 1e-4, 0}, &qs).add_inf;
    return t.outcome("solver SR SADD (a=0.01) " + fmt(sr_low, 5) + ", solver CUSUM ADD_inf (a=1) " +
                     fmt(cusum_high_inf, 5));
}

// ---------------------------------------------------------------------------

Outcome criterion_8() {
    ItemTracker t(8);
    const std::size_t traces = 1000;
    std::vector<double> sr_delay(traces, -1.0);
    std::vector<double> cusum_delay(traces, -1.0);
    parallel_for(traces, [&](std::size_t i) {
        const TraceSeries raw = make_surrogate_trace(derive_seed(20120801, i));
        const std::size_t onset = *raw.onset;
        const TraceSeries trace = diminish_attack(raw, onset, *raw.offset,
                                                  window_stats(raw, 0, onset), traffic_model.theta());
        for (auto [proc, threshold, out] :
             {std::tuple{Procedure::sr, calibrated_traffic.sr, &sr_delay},
              std::tuple{Procedure::cusum, calibrated_traffic.cusum, &cusum_delay}}) {
            AnomalyOptions opts;
            opts.threshold = threshold;
            opts.seed = derive_seed(7, i);
            const AnomalyReport r = detect_anomaly(trace, traffic_model, proc, 1000.0, opts);
            if (r.run.detection_delay) (*out)[i] = static_cast<double>(*r.run.detection_delay);
        }
    });
    auto mean_se = [](const std::vector<double>& v, std::size_t& missed) {
        double s = 0.0, s2 = 0.0;
        std::size_t n = 0;
        for (double d : v) {
            if (d < 0.0) {
                ++missed;
                continue;
            }
            s += d;
            s2 += d * d;
            ++n;
        }
        const double m = s / static_cast<double>(n);
        return std::pair{m, std::sqrt((s2 / static_cast<double>(n) - m * m) / static_cast<double>(n))};
    };
    std::size_t missed = 0;
    const auto [sr_mean, sr_se] = mean_se(sr_delay, missed);
    const auto [cu_mean, cu_se] = mean_se(cusum_delay, missed);
    t.check("all attacks detected", missed == 0, std::to_string(missed) + " missed");
    t.check("SR mean < CUSUM mean", sr_mean < cu_mean, fmt(sr_mean, 4) + " < " + fmt(cu_mean, 4));
    t.check("SR band", sr_mean >= 24.0 && sr_mean <= 36.0,
            fmt(sr_mean, 4) + " +- " + fmt(sr_se, 2) + " in [24, 36]");
    t.check("CUSUM band", cu_mean >= 30.0 && cu_mean <= 44.0,
            fmt(cu_mean, 4) + " +- " + fmt(cu_se, 2) + " in [30, 44]");
    return t.outcome(std::to_string(traces) + " surrogates, SR " + fmt(sr_mean, 4) + ", CUSUM " +
                     fmt(cu_mean, 4) + " samples");
}

Outcome criterion_9() {
    ItemTracker t(9);
    const std::string cmd = std::string("\"") + QD_PROPERTIES_BINARY + "\"";
    std::cout.flush();
    const int rc = std::system(cmd.c_str());
    t.check("property suite", rc == 0, "exit status " + std::to_string(rc));
    return t.outcome("qd_properties");
}

}  // namespace

int main() {
    std::cout << std::unitbuf;
    int unexpected = 0;
    std::vector<std::pair<int, Outcome>> results;

    auto run = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
        std::cout << "criterion " << id << ": " << title << '\n';
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {Status::fail, std::string("exception: ") + e.what()};
        }
        results.emplace_back(id, o);
    };

    const ReferenceScenario low = low_noise_scenario();
    const ReferenceScenario high = high_noise_scenario();
    ScenarioRun low_run;
    ScenarioRun high_run;

    run(1, "low-noise ARLs", [&] {
        low_run = run_scenario(low, false);
        ItemTracker t(1);
        check_rows(t, low_run.result.arl_rows);
        return t.outcome("N=" + std::to_string(low.grid_size) + ", " + fmt(low_run.seconds, 3) +
                         " s including the delay table");
    });
    run(2, "low-noise delays", [&] {
        ItemTracker t(2);
        check_rows(t, low_run.result.delay_rows);
        return t.outcome(std::to_string(low_run.result.delay_rows.size()) + " rows");
    });
    run(3, "high-noise ARLs and r*", [&] {
        high_run = run_scenario(high, true);
        ItemTracker t(3);
        check_rows(t, high_run.result.arl_rows);
        return t.outcome("N=" + std::to_string(high.grid_size) + ", " + fmt(high_run.seconds, 3) +
                         " s including the r* search");
    });
    run(4, "high-noise delays", [&] {
        ItemTracker t(4);
        check_rows(t, high_run.result.delay_rows);
        return t.outcome(std::to_string(high_run.result.delay_rows.size()) + " rows");
    });
    run(5, "Monte-Carlo constants", criterion_5);
    run(6, "closed-form delay approximations", criterion_6);
    run(7, "traffic-model calibration", criterion_7);
    run(8, "surrogate-trace delays", criterion_8);
    run(9, "property suites", criterion_9);

    std::cout << "\nsummary\n";
    for (const auto& [id, o] : results) {
        const char* label = o.status == Status::pass         ? "PASS"
                            : o.status == Status::known_fail ? "FAIL (known, see ledger)"
                                                             : "FAIL";
        std::cout << "criterion " << id << ": " << label << " - " << o.detail << '\n';
        if (o.status == Status::fail) ++unexpected;
    }
    std::cout << unexpected << " unexpected failure(s)\n";
    return unexpected == 0 ? 0 : 1;
}
