#include "qd/reference.hpp"

#include "qd/design.hpp"
#include "qd/oc_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace qd {

double ComparisonRow::rel_error() const {
    return (computed - reference) / std::fabs(reference);
}

bool ComparisonRow::pass() const {
    return std::isfinite(computed) && std::fabs(rel_error()) <= rel_tolerance;
}

ReferenceScenario low_noise_scenario() {
    ReferenceScenario s;
    s.name = "mu=1000 theta=1001 a=0.01 gamma=1e4";
    s.model = GaussianChangeModel(1000.0, 1001.0, 0.01);
    s.gamma = 1e4;
    s.grid_size = 4000;
    s.nus = {0, 50, 100, 150, 200};
    s.settings = {
        {Procedure::cusum, 350.75, 0.0, 10001.223, {104.98, 96.72, 95.75, 95.57, 95.53}, 95.55},
        {Procedure::sr, 8314.4, 0.0, 10000.188, {112.87, 97.26, 94.75, 94.15, 94.00}, 94.00},
        {Procedure::srp, 8392.0, 0.0, 9999.845, {}, 94.127},
        {Procedure::sr_r, 8356.0, 50.345, 9999.875, {93.38, 94.04, 94.04, 94.04, 94.04}, 94.04},
    };
    s.reference_mu_q = 93.699;
    s.reference_lower_bound = 94.04;
    s.reference_constants = {0.83145, 0.22, -1.0, 1.3, 3.59, 4.5};
    return s;
}

ReferenceScenario high_noise_scenario() {
    ReferenceScenario s;
    s.name = "mu=1000 theta=1001 a=1 gamma=1e3";
    s.model = GaussianChangeModel(1000.0, 1001.0, 1.0);
    s.gamma = 1e3;
    s.grid_size = 2000;
    s.nus = {0, 100, 250, 500, 1000, 1500, 2000};
    s.settings = {
        {Procedure::cusum, 2.272, 0.0, 1000.096,
         {563.26, 495.06, 467.31, 463.29, 463.15, 463.15, 463.15}, 471.67},
        {Procedure::sr, 981.0, 0.0, 999.996,
         {722.36, 626.20, 498.64, 339.18, 268.14, 263.27, 262.91}, 396.44},
        {Procedure::srp, 1844.0, 0.0, 1000.333, {}, 502.636},
        {Procedure::sr_r, 1811.0, 845.872, 999.981,
         {495.10, 454.29, 454.39, 473.65, 489.82, 493.22, 493.89}, 477.56},
    };
    s.reference_mu_q = 879.248;
    s.reference_lower_bound = 485.60;
    s.reference_r_star = 845.872;
    s.reference_constants = {0.981, 1.55, -2.1, 2.2, 8.08, 8.82};
    return s;
}

ScenarioReproduction reproduce_scenario(const ReferenceScenario& scenario,
                                        const ReproductionOptions& options) {
    const std::size_t n = options.grid_size.value_or(scenario.grid_size);
    const std::uint64_t nu_last = scenario.nus.empty() ? 0 : scenario.nus.back();
    ScenarioReproduction out;

    auto add_row = [](std::vector<ComparisonRow>& rows, std::string group, std::string quantity,
                      double reference, double computed, double tol) {
        rows.push_back({std::move(group), std::move(quantity), reference, computed, tol});
    };

    for (const ProcedureSetting& setting : scenario.settings) {
        const std::string name(to_string(setting.procedure));
        const OcSolver solver(scenario.model, setting.procedure, setting.threshold, n);
        ProfileCurve curve;
        curve.procedure = setting.procedure;

        if (setting.procedure == Procedure::srp) {
            const QuasiStationary qs = solver.quasi_stationary();
            const SrpCharacteristics c = solver.srp_characteristics(qs);
            add_row(out.arl_rows, "arl", name + " ARL", setting.reference_arl, c.arl_geometric,
                    options.arl_tolerance);
            add_row(out.arl_rows, "mu_q", "srp mu_Q", scenario.reference_mu_q, qs.mean,
                    options.mu_q_tolerance);
            // An equalizer: every ADD_nu equals the quasi-stationary average.
            add_row(out.delay_rows, "add", name + " ADD_nu (flat)", setting.reference_stadd,
                    c.add_bar, options.delay_tolerance);
            add_row(out.delay_rows, "stadd", name + " STADD", setting.reference_stadd,
                    c.stadd_bar, options.delay_tolerance);
            curve.add.assign(nu_last + 1, c.add_bar);
            out.curves.push_back(std::move(curve));
            continue;
        }

        const double x0 =
            setting.procedure == Procedure::sr_r ? setting.head_start : solver.default_start();
        add_row(out.arl_rows, "arl", name + " ARL", setting.reference_arl, solver.arl(x0),
                options.arl_tolerance);

        const QuasiStationary qs = solver.quasi_stationary();
        const DelayProfile profile = solver.delay_profile(x0, {nu_last, 1e-6, nu_last}, &qs);
        if (profile.add.size() <= nu_last) {
            out.warnings.push_back(name + ": survival probability vanished before nu=" +
                                   std::to_string(nu_last));
        }
        for (std::size_t k = 0; k < scenario.nus.size(); ++k) {
            const std::uint64_t nu = scenario.nus[k];
            const double v = nu < profile.add.size() ? profile.add[nu]
                                                     : std::numeric_limits<double>::quiet_NaN();
            add_row(out.delay_rows, "add", name + " ADD_" + std::to_string(nu),
                    setting.reference_add.at(k), v, options.delay_tolerance);
        }
        add_row(out.delay_rows, "stadd", name + " STADD", setting.reference_stadd,
                solver.stadd(x0), options.delay_tolerance);
        if (setting.procedure == Procedure::sr_r) {
            add_row(out.delay_rows, "lower_bound", "lower bound J_LB(r)",
                    scenario.reference_lower_bound, solver.lower_bound(setting.head_start),
                    options.delay_tolerance);
        }
        curve.add = profile.add;
        out.curves.push_back(std::move(curve));
    }

    if (scenario.reference_r_star && options.search_r_star) {
        RStarOptions ro;
        ro.grid_size = n;
        ro.profile = {300, 1e-4, 0};
        const RStarResult r = find_r_star(scenario.model, scenario.gamma, ro);
        add_row(out.arl_rows, "r_star", "SR-r r*", *scenario.reference_r_star, r.best.head_start,
                options.r_star_tolerance);
        for (const auto& w : r.warnings) {
            out.warnings.push_back("r* search: " + w);
        }
    }
    return out;
}

void write_profile_curves(std::ostream& out, const std::vector<ProfileCurve>& curves) {
    out << "nu";
    std::size_t rows = 0;
    for (const auto& c : curves) {
        out << ",ADD_" << to_string(c.procedure);
        rows = std::max(rows, c.add.size());
    }
    out << '\n';
    const auto old = out.precision(17);
    for (std::size_t nu = 0; nu < rows; ++nu) {
        out << nu;
        for (const auto& c : curves) {
            out << ',';
            if (nu < c.add.size()) {
                out << c.add[nu];
            }
        }
        out << '\n';
    }
    out.precision(old);
}

}  // namespace qd
