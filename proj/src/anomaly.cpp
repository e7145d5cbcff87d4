#include "qd/anomaly.hpp"

#include "qd/normal.hpp"
#include "qd/oc_solver.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace qd {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& field, double& out) {
    const std::string t = trim(field);
    if (t.empty()) return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtod(t.c_str(), &end);
    return errno == 0 && end == t.c_str() + t.size() && std::isfinite(out);
}

void parse_label(const std::string& comment, TraceSeries& series) {
    // "# key=value"
    const std::string body = trim(comment.substr(1));
    const auto eq = body.find('=');
    if (eq == std::string::npos) return;
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key != "onset" && key != "offset") return;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
    if (value.empty() || end != value.c_str() + value.size()) return;
    (key == "onset" ? series.onset : series.offset) = static_cast<std::size_t>(v);
}

}  // namespace

TraceSeries parse_trace(std::istream& in, const std::string& source) {
    using Kind = TraceError::Kind;
    TraceSeries series;
    std::vector<double> times;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            parse_label(t, series);
            continue;
        }
        if (!header_seen) {
            if (t != "time_s,packets_per_s") {
                throw TraceError(Kind::bad_header, source + ":" + std::to_string(line_no) +
                                                       ": expected header 'time_s,packets_per_s'");
            }
            header_seen = true;
            continue;
        }
        const auto comma = t.find(',');
        double time = 0.0;
        double value = 0.0;
        if (comma == std::string::npos || t.find(',', comma + 1) != std::string::npos ||
            !parse_double(t.substr(0, comma), time) || !parse_double(t.substr(comma + 1), value)) {
            throw TraceError(Kind::malformed_row, source + ":" + std::to_string(line_no) +
                                                      ": malformed row '" + t + "'");
        }
        if (!times.empty() && !(time > times.back())) {
            throw TraceError(Kind::non_monotone, source + ":" + std::to_string(line_no) +
                                                     ": timestamp " + trim(t.substr(0, comma)) +
                                                     " does not increase");
        }
        times.push_back(time);
        series.values.push_back(value);
    }
    if (series.values.empty()) {
        throw TraceError(Kind::empty, source + ": no samples");
    }
    if (series.values.size() < 2) {
        throw TraceError(Kind::malformed_row, source + ": need at least two samples");
    }
    series.start_time = times.front();
    series.sample_interval = times[1] - times[0];
    for (std::size_t i = 1; i < times.size(); ++i) {
        const double expected = times.front() + static_cast<double>(i) * series.sample_interval;
        if (std::fabs(times[i] - expected) > 1e-6) {
            throw TraceError(Kind::non_uniform, source + ": sample " + std::to_string(i) +
                                                    " breaks the uniform spacing of " +
                                                    std::to_string(series.sample_interval) + " s");
        }
    }
    if (series.onset && *series.onset > series.values.size()) {
        throw TraceError(Kind::malformed_row, source + ": onset label beyond the end of the trace");
    }
    return series;
}

TraceSeries load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw TraceError(TraceError::Kind::io, "cannot open trace file '" + path + "'");
    }
    return parse_trace(in, path);
}

void write_trace(std::ostream& out, const TraceSeries& series) {
    if (series.onset) out << "# onset=" << *series.onset << '\n';
    if (series.offset) out << "# offset=" << *series.offset << '\n';
    out << "time_s,packets_per_s\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < series.values.size(); ++i) {
        out << series.start_time + static_cast<double>(i) * series.sample_interval << ','
            << series.values[i] << '\n';
    }
}

// ---------------------------------------------------------------------------

WindowStats window_stats(std::span<const double> values) {
    if (values.size() < 2) {
        throw std::invalid_argument("window_stats: window needs at least 2 samples");
    }
    WindowStats s;
    s.n = values.size();
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(s.n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    s.mean = mean;
    s.variance = ss / static_cast<double>(s.n - 1);
    s.a_hat = mean != 0.0 ? s.variance / mean : 0.0;
    return s;
}

WindowStats window_stats(const TraceSeries& series, std::size_t start, std::size_t end) {
    if (end > series.size() || start > end) {
        throw std::invalid_argument("window_stats: window outside the trace");
    }
    return window_stats(std::span<const double>(series.values).subspan(start, end - start));
}

TraceSeries diminish_attack(const TraceSeries& series, std::size_t start, std::size_t end,
                            const WindowStats& pre, double target_theta) {
    if (!(target_theta > 0.0)) {
        throw std::invalid_argument("diminish_attack: target mean must be positive");
    }
    const WindowStats att = window_stats(series, start, end);
    if (!(att.variance > 0.0)) {
        throw std::invalid_argument("diminish_attack: attack window has zero variance");
    }
    const double scale = std::sqrt(target_theta * pre.a_hat / att.variance);
    TraceSeries out = series;
    for (std::size_t i = start; i < end; ++i) {
        out.values[i] = scale * (series.values[i] - att.mean) + target_theta;
    }
    return out;
}

// ---------------------------------------------------------------------------

GofReport gof_report(std::span<const double> values) {
    if (values.size() < 20) {
        throw std::invalid_argument("gof_report: window needs at least 20 samples");
    }
    GofReport r;
    r.stats = window_stats(values);
    const double sd = std::sqrt(r.stats.variance);
    if (!(sd > 0.0)) {
        throw std::invalid_argument("gof_report: constant window");
    }
    std::vector<double> z(values.begin(), values.end());
    for (double& v : z) v = (v - r.stats.mean) / sd;
    std::sort(z.begin(), z.end());
    const auto n = static_cast<double>(z.size());
    r.points.reserve(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        r.points.push_back({z[i], normal::quantile((static_cast<double>(i) + 0.5) / n)});
    }
    double mx = 0.0, my = 0.0;
    for (const auto& p : r.points) {
        mx += p.empirical;
        my += p.normal;
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (const auto& p : r.points) {
        sxy += (p.empirical - mx) * (p.normal - my);
        sxx += (p.empirical - mx) * (p.empirical - mx);
        syy += (p.normal - my) * (p.normal - my);
    }
    r.qq_correlation = sxy / std::sqrt(sxx * syy);
    return r;
}

GofReport gof_report(const TraceSeries& series, std::size_t start, std::size_t end) {
    if (end > series.size() || start > end) {
        throw std::invalid_argument("gof_report: window outside the trace");
    }
    return gof_report(std::span<const double>(series.values).subspan(start, end - start));
}

void write_gof(std::ostream& out, const GofReport& report) {
    out << "empirical_q,normal_q\n" << std::setprecision(17);
    for (const auto& p : report.points) {
        out << p.empirical << ',' << p.normal << '\n';
    }
    out << "# qq_correlation=" << report.qq_correlation << '\n';
}

// ---------------------------------------------------------------------------

AnomalyReport detect_anomaly(const TraceSeries& series, const GaussianChangeModel& model,
                             Procedure procedure, double gamma, const AnomalyOptions& options) {
    if (series.values.empty()) {
        throw std::invalid_argument("detect_anomaly: empty trace");
    }
    AnomalyReport report;
    report.procedure = procedure;
    report.head_start = procedure == Procedure::sr_r ? options.head_start : 0.0;
    if (options.threshold) {
        report.threshold = *options.threshold;
    } else {
        CalibrationOptions cal;
        cal.grid_size = options.grid_size;
        const CalibrationResult c =
            calibrate_threshold(procedure, model, gamma, report.head_start, cal);
        report.threshold = c.threshold;
        report.solver_arl = c.achieved_arl;
    }

    DetectorSpec spec;
    switch (procedure) {
        case Procedure::cusum: spec = DetectorSpec::cusum(report.threshold); break;
        case Procedure::sr: spec = DetectorSpec::sr(report.threshold); break;
        case Procedure::sr_r:
            spec = DetectorSpec::sr_r(report.threshold, report.head_start);
            break;
        case Procedure::srp: {
            const OcSolver solver(model, procedure, report.threshold, options.grid_size);
            const QuasiStationary qs = solver.quasi_stationary();
            spec = DetectorSpec::srp(report.threshold, qs.distribution);
            report.solver_arl = 1.0 / (1.0 - qs.lambda);
            break;
        }
    }

    report.change_point = series.onset;
    const std::uint64_t nu = series.onset ? *series.onset : series.size();
    MulticyclicOptions mc;
    mc.record_trajectory = options.record_trajectory;
    mc.redraw_head_start = options.redraw_head_start;
    mc.seed = options.seed;
    report.run = run_multicyclic(spec, model, series.values, nu, mc);
    if (report.run.detection_delay) {
        report.delay_seconds = static_cast<double>(*report.run.detection_delay) * series.sample_interval;
    }
    return report;
}

void write_alarm_log(std::ostream& out, const AlarmLog& log, std::optional<std::uint64_t> onset) {
    out << "alarm_index,cycle_length,is_false\n";
    for (std::size_t i = 0; i < log.alarm_times.size(); ++i) {
        const bool is_false = !onset || log.alarm_times[i] <= *onset;
        out << log.alarm_times[i] << ',' << log.cycle_lengths[i] << ',' << (is_false ? 1 : 0)
            << '\n';
    }
}

// ---------------------------------------------------------------------------

namespace {

// Fills `out` with n normal draws rescaled to the exact sample moments.
void exact_moment_block(Rng& rng, std::size_t n, double mean, double variance,
                        std::vector<double>& out) {
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<double> z(n);
    for (double& v : z) v = unit(rng);
    const WindowStats s = window_stats(z);
    const double scale = std::sqrt(variance / s.variance);
    for (double v : z) out.push_back(mean + scale * (v - s.mean));
}

}  // namespace

TraceSeries make_surrogate_trace(std::uint64_t seed, const SurrogateSpec& spec) {
    if (spec.pre_samples + spec.post_samples < 2 || spec.attack_samples < 2) {
        throw std::invalid_argument("make_surrogate_trace: windows too short");
    }
    Rng rng(seed);
    // Draw the legitimate samples as one block so the pooled pre/post window
    // has the target moments, then split it around the attack.
    std::vector<double> legit;
    exact_moment_block(rng, spec.pre_samples + spec.post_samples, spec.legit_mean,
                       spec.legit_variance, legit);
    std::vector<double> attack;
    exact_moment_block(rng, spec.attack_samples, spec.attack_mean, spec.attack_variance, attack);

    TraceSeries s;
    s.sample_interval = spec.interval;
    s.values.reserve(legit.size() + attack.size());
    s.values.insert(s.values.end(), legit.begin(), legit.begin() + static_cast<long>(spec.pre_samples));
    s.values.insert(s.values.end(), attack.begin(), attack.end());
    s.values.insert(s.values.end(), legit.begin() + static_cast<long>(spec.pre_samples), legit.end());
    s.onset = spec.pre_samples;
    s.offset = spec.pre_samples + spec.attack_samples;
    return s;
}

}  // namespace qd
