#pragma once

#include "qd/design.hpp"
#include "qd/detectors.hpp"
#include "qd/errors.hpp"
#include "qd/model.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qd {

/// Equally spaced packet-rate samples.
struct TraceSeries {
    double sample_interval = 0.5;  // seconds
    double start_time = 0.0;       // seconds
    std::vector<double> values;    // packets per second
    /// Optional labels: index of the first attack sample (= number of
    /// pre-change samples, the change point nu) and one past the last.
    std::optional<std::size_t> onset;
    std::optional<std::size_t> offset;

    std::size_t size() const { return values.size(); }
};

/// Trace ingestion failures; `kind` tells them apart.
class TraceError : public InputError {
public:
    enum class Kind { io, empty, bad_header, malformed_row, non_monotone, non_uniform };
    TraceError(Kind kind, const std::string& message) : InputError(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Reads the `time_s,packets_per_s` CSV. Lines starting with '#' are
/// comments; `# onset=<n>` and `# offset=<n>` set the labels.
TraceSeries load_trace(const std::string& path);
TraceSeries parse_trace(std::istream& in, const std::string& source = "<stream>");
void write_trace(std::ostream& out, const TraceSeries& series);

struct WindowStats {
    double mean = 0.0;
    double variance = 0.0;  // (n-1) denominator
    std::size_t n = 0;
    double a_hat = 0.0;     // variance / mean
};

WindowStats window_stats(std::span<const double> values);
/// Samples [start, end). Throws std::invalid_argument for fewer than 2.
WindowStats window_stats(const TraceSeries& series, std::size_t start, std::size_t end);

/// Replaces samples [start, end) by
/// sqrt(target_theta * a_pre) (x - m_att) / s_att + target_theta, where
/// m_att, s_att^2 are the window's own sample moments and a_pre = pre.a_hat.
TraceSeries diminish_attack(const TraceSeries& series, std::size_t start, std::size_t end,
                            const WindowStats& pre, double target_theta);

struct QqPoint {
    double empirical = 0.0;  // sorted centered-and-scaled sample
    double normal = 0.0;     // standard normal quantile at (i - 1/2)/n
};

struct GofReport {
    WindowStats stats;
    std::vector<QqPoint> points;
    double qq_correlation = 0.0;
};

/// Normal Q-Q diagnostics for samples [start, end); at least 20 samples.
GofReport gof_report(const TraceSeries& series, std::size_t start, std::size_t end);
GofReport gof_report(std::span<const double> values);
/// CSV `empirical_q,normal_q` followed by `# qq_correlation=<value>`.
void write_gof(std::ostream& out, const GofReport& report);

struct AnomalyOptions {
    std::size_t grid_size = 2000;
    /// Skip calibration and use this threshold.
    std::optional<double> threshold;
    std::uint64_t seed = 0;
    bool record_trajectory = false;
    bool redraw_head_start = true;
    double head_start = 0.0;  // SR-r only
};

struct AnomalyReport {
    Procedure procedure = Procedure::sr;
    double threshold = 0.0;
    double head_start = 0.0;
    std::optional<double> solver_arl;  // at the threshold used
    MulticyclicResult run;
    std::optional<std::uint64_t> change_point;
    std::optional<double> delay_seconds;
};

/// Calibrates (unless a threshold is given) and runs the multi-cyclic
/// detector over the whole trace. Alarms at or before the onset are false.
AnomalyReport detect_anomaly(const TraceSeries& series, const GaussianChangeModel& model,
                             Procedure procedure, double gamma, const AnomalyOptions& options = {});

/// CSV `alarm_index,cycle_length,is_false`.
void write_alarm_log(std::ostream& out, const AlarmLog& log, std::optional<std::uint64_t> onset);

/// Surrogate for the packet-rate trace: legitimate traffic with the
/// pre-attack moments and an attack window with the raw attack moments,
/// each rescaled so the window's sample moments hit the targets exactly.
struct SurrogateSpec {
    std::size_t pre_samples = 204;
    std::size_t attack_samples = 478;
    std::size_t post_samples = 197;
    double interval = 0.5;
    double legit_mean = 13329.764;
    double legit_variance = 266972.736;
    double attack_mean = 17723.833;
    double attack_variance = 407968.14;
};

TraceSeries make_surrogate_trace(std::uint64_t seed, const SurrogateSpec& spec = {});

}  // namespace qd
