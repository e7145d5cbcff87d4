#pragma once

#include "qd/asymptotics.hpp"
#include "qd/detectors.hpp"
#include "qd/model.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace qd {

/// One computed quantity next to its reference counterpart.
struct ComparisonRow {
    std::string group;     // e.g. "arl", "add", "stadd"
    std::string quantity;  // e.g. "sr ADD_50"
    double reference = 0.0;
    double computed = 0.0;
    double rel_tolerance = 0.0;

    double rel_error() const;
    bool pass() const;
};

struct ProcedureSetting {
    Procedure procedure = Procedure::sr;
    double threshold = 0.0;
    double head_start = 0.0;  // SR-r only
    double reference_arl = 0.0;
    /// Reference ADD_nu at the scenario's nu list; empty for SRP (flat).
    std::vector<double> reference_add;
    double reference_stadd = 0.0;
};

/// A reference operating point: four procedures at fixed thresholds.
struct ReferenceScenario {
    std::string name;
    GaussianChangeModel model{1000.0, 1001.0, 1.0};
    double gamma = 0.0;
    std::size_t grid_size = 2000;
    std::vector<ProcedureSetting> settings;  // cusum, sr, srp, sr_r
    std::vector<std::uint64_t> nus;
    double reference_mu_q = 0.0;
    double reference_lower_bound = 0.0;
    std::optional<double> reference_r_star;
    /// Constants and closed-form delay values quoted with this operating point.
    ConstantValues reference_constants;
};

/// mu=1000, theta=1001, a=0.01, gamma=1e4. Solved on 4000 panels: the
/// CUSUM ARL is still 0.9% low at 2000.
ReferenceScenario low_noise_scenario();
/// mu=1000, theta=1001, a=1, gamma=1e3, 2000 panels.
ReferenceScenario high_noise_scenario();

struct ProfileCurve {
    Procedure procedure = Procedure::sr;
    std::vector<double> add;  // nu = 0..add.size()-1
};

struct ReproductionOptions {
    /// Overrides the scenario's panel count.
    std::optional<std::size_t> grid_size;
    /// Runs the r* search (several minutes) when the scenario quotes r*.
    bool search_r_star = false;
    double arl_tolerance = 0.005;
    double mu_q_tolerance = 0.01;
    double delay_tolerance = 0.02;
    double r_star_tolerance = 0.02;
};

struct ScenarioReproduction {
    std::vector<ComparisonRow> arl_rows;    // ARLs, mu_Q, r*
    std::vector<ComparisonRow> delay_rows;  // ADD_nu, STADD, lower bound
    std::vector<ProfileCurve> curves;
    std::vector<std::string> warnings;
};

ScenarioReproduction reproduce_scenario(const ReferenceScenario& scenario,
                                        const ReproductionOptions& options = {});

/// CSV with a `nu` column and one ADD_nu column per procedure.
void write_profile_curves(std::ostream& out, const std::vector<ProfileCurve>& curves);

}  // namespace qd
