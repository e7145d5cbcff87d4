#pragma once

#include "qd/model.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qd {

enum class Procedure { cusum, sr, srp, sr_r };

std::string_view to_string(Procedure p);
/// Accepts "cusum", "sr", "srp", "sr_r" / "sr-r" (case-insensitive).
Procedure parse_procedure(std::string_view name);

double xi_cusum(double x);
double xi_sr(double x);

/// x -> max{1, x} for CUSUM, x -> 1 + x for the SR family.
StatisticMap xi_map(Procedure p);

/// Piecewise-constant density on consecutive panels [edges[i], edges[i+1]).
/// Used for the quasi-stationary head-start law of SRP.
class PiecewiseConstantDensity {
public:
    /// Throws std::invalid_argument if the edges are not increasing, any
    /// density is negative, or the total mass differs from 1 by more than
    /// 1e-8.
    PiecewiseConstantDensity(std::vector<double> edges, std::vector<double> density);

    /// Equal panels on [0, upper].
    static PiecewiseConstantDensity on_uniform_grid(double upper, std::vector<double> density);

    double lower() const { return edges_.front(); }
    double upper() const { return edges_.back(); }
    double mean() const;
    double cdf(double x) const;
    /// Inverse-cdf draw, linear inside the selected panel.
    double sample(Rng& rng) const;

    const std::vector<double>& edges() const { return edges_; }
    const std::vector<double>& density() const { return density_; }

private:
    std::vector<double> edges_;
    std::vector<double> density_;
    std::vector<double> cumulative_;  // mass up to the right edge of each panel
};

double draw_head_start(const PiecewiseConstantDensity& q, std::uint64_t seed);

struct DetectorSpec {
    Procedure kind = Procedure::sr;
    double threshold = 1.0;
    /// Fixed start for SR-r; ignored otherwise (CUSUM starts at 1, SR at 0).
    double head_start = 0.0;
    /// Required for SRP.
    std::shared_ptr<const PiecewiseConstantDensity> quasi_stationary;

    static DetectorSpec cusum(double threshold);
    static DetectorSpec sr(double threshold);
    static DetectorSpec sr_r(double threshold, double head_start);
    static DetectorSpec srp(double threshold, std::shared_ptr<const PiecewiseConstantDensity> q);

    /// Throws std::invalid_argument on an inconsistent spec.
    void validate() const;
    StatisticMap xi() const { return xi_map(kind); }
};

struct DetectorState {
    double statistic = 0.0;
    std::uint64_t time_index = 0;
    bool alarmed = false;
};

/// Starting state; SRP draws its head start from `rng`, the others ignore it.
DetectorState initial_state(const DetectorSpec& spec, Rng& rng);

/// One step of V_n = xi(V_{n-1}) * LR_n. Throws std::invalid_argument for a
/// non-positive LR and std::logic_error after an alarm.
DetectorState update(const DetectorState& state, const DetectorSpec& spec, double lr_value);

/// First n >= 1 with statistic >= A, or nullopt if the observations run out.
std::optional<std::uint64_t> run_single(const DetectorSpec& spec, const GaussianChangeModel& model,
                                        std::span<const double> observations,
                                        std::uint64_t seed = 0);

struct AlarmLog {
    std::vector<std::uint64_t> alarm_times;
    std::vector<std::uint64_t> cycle_lengths;
    std::vector<double> statistic_trajectory;  // empty unless requested
};

struct MulticyclicOptions {
    bool record_trajectory = false;
    /// SRP only: draw a fresh head start at every restart.
    bool redraw_head_start = true;
    std::uint64_t seed = 0;
};

struct MulticyclicResult {
    AlarmLog log;
    std::size_t false_alarms = 0;
    /// T_(I_nu) - nu, absent if no alarm occurred after nu.
    std::optional<std::uint64_t> detection_delay;
};

/// Restarts the detector after every alarm. Alarms at times <= change_point
/// are false; the delay is measured from change_point.
MulticyclicResult run_multicyclic(const DetectorSpec& spec, const GaussianChangeModel& model,
                                  std::span<const double> observations, std::uint64_t change_point,
                                  const MulticyclicOptions& options = {});

/// Streaming simulation helpers used by the Monte-Carlo cross-checks. The
/// observation stream is pre-change up to and including index change_point
/// and post-change afterwards (change_point = nullopt: never changes).
class ObservationStream {
public:
    ObservationStream(const GaussianChangeModel& model, std::optional<std::uint64_t> change_point,
                      std::uint64_t seed);
    /// Likelihood ratio of observation number n (1-based, sequential).
    double next_lr();
    std::uint64_t index() const { return n_; }

private:
    const GaussianChangeModel& model_;
    std::optional<std::uint64_t> change_point_;
    Rng rng_;
    std::normal_distribution<double> unit_{0.0, 1.0};
    std::uint64_t n_ = 0;
};

/// Stopping time of a single run on a freshly simulated stream; nullopt if
/// max_steps is exceeded.
std::optional<std::uint64_t> simulate_stopping_time(const DetectorSpec& spec,
                                                    const GaussianChangeModel& model,
                                                    std::optional<std::uint64_t> change_point,
                                                    std::uint64_t seed, std::uint64_t max_steps);

/// Multi-cyclic delay T_(I_nu) - nu on a simulated stream changing after nu.
std::optional<std::uint64_t> simulate_multicyclic_delay(const DetectorSpec& spec,
                                                        const GaussianChangeModel& model,
                                                        std::uint64_t change_point,
                                                        std::uint64_t seed,
                                                        std::uint64_t max_steps);

}  // namespace qd
