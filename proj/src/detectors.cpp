#include "qd/detectors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "qd/parallel.hpp"

namespace qd {

std::string_view to_string(Procedure p) {
    switch (p) {
        case Procedure::cusum: return "cusum";
        case Procedure::sr: return "sr";
        case Procedure::srp: return "srp";
        case Procedure::sr_r: return "sr_r";
    }
    return "unknown";
}

Procedure parse_procedure(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
        return c == '-' ? '_' : static_cast<char>(std::tolower(c));
    });
    if (s == "cusum") return Procedure::cusum;
    if (s == "sr") return Procedure::sr;
    if (s == "srp") return Procedure::srp;
    if (s == "sr_r" || s == "srr") return Procedure::sr_r;
    throw std::invalid_argument("unknown procedure '" + std::string(name) + "'");
}

double xi_cusum(double x) { return std::max(1.0, x); }
double xi_sr(double x) { return 1.0 + x; }

StatisticMap xi_map(Procedure p) { return p == Procedure::cusum ? &xi_cusum : &xi_sr; }

// ---------------------------------------------------------------------------

PiecewiseConstantDensity::PiecewiseConstantDensity(std::vector<double> edges,
                                                   std::vector<double> density)
    : edges_(std::move(edges)), density_(std::move(density)) {
    if (edges_.size() < 2 || density_.size() + 1 != edges_.size()) {
        throw std::invalid_argument("PiecewiseConstantDensity: need n+1 edges for n panels");
    }
    cumulative_.resize(density_.size());
    double mass = 0.0;
    for (std::size_t i = 0; i < density_.size(); ++i) {
        const double w = edges_[i + 1] - edges_[i];
        if (!(w > 0.0)) {
            throw std::invalid_argument("PiecewiseConstantDensity: edges must increase");
        }
        if (!(density_[i] >= 0.0) || !std::isfinite(density_[i])) {
            throw std::invalid_argument("PiecewiseConstantDensity: density must be finite and >= 0");
        }
        mass += w * density_[i];
        cumulative_[i] = mass;
    }
    if (std::fabs(mass - 1.0) > 1e-8) {
        throw std::invalid_argument("PiecewiseConstantDensity: total mass " + std::to_string(mass) +
                                    " is not 1 within 1e-8");
    }
}

PiecewiseConstantDensity PiecewiseConstantDensity::on_uniform_grid(double upper,
                                                                   std::vector<double> density) {
    if (!(upper > 0.0) || density.empty()) {
        throw std::invalid_argument("PiecewiseConstantDensity: bad uniform grid");
    }
    const std::size_t n = density.size();
    std::vector<double> edges(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        edges[i] = upper * static_cast<double>(i) / static_cast<double>(n);
    }
    return {std::move(edges), std::move(density)};
}

double PiecewiseConstantDensity::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < density_.size(); ++i) {
        const double lo = edges_[i];
        const double hi = edges_[i + 1];
        m += density_[i] * 0.5 * (hi * hi - lo * lo);
    }
    return m;
}

double PiecewiseConstantDensity::cdf(double x) const {
    if (x <= edges_.front()) return 0.0;
    if (x >= edges_.back()) return 1.0;
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - edges_.begin()) - 1;
    const double before = i == 0 ? 0.0 : cumulative_[i - 1];
    return before + density_[i] * (x - edges_[i]);
}

double PiecewiseConstantDensity::sample(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, cumulative_.back());
    const double u = unif(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) {
        --it;
    }
    std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
    while (density_[i] == 0.0 && i + 1 < density_.size()) {
        ++i;  // u landed on a flat stretch of the cdf
    }
    const double before = i == 0 ? 0.0 : cumulative_[i - 1];
    const double x = edges_[i] + (u - before) / density_[i];
    return std::clamp(x, edges_[i], std::nextafter(edges_[i + 1], edges_[i]));
}

double draw_head_start(const PiecewiseConstantDensity& q, std::uint64_t seed) {
    Rng rng(seed);
    return q.sample(rng);
}

// ---------------------------------------------------------------------------

DetectorSpec DetectorSpec::cusum(double threshold) {
    DetectorSpec s;
    s.kind = Procedure::cusum;
    s.threshold = threshold;
    s.head_start = 1.0;
    s.validate();
    return s;
}

DetectorSpec DetectorSpec::sr(double threshold) {
    DetectorSpec s;
    s.kind = Procedure::sr;
    s.threshold = threshold;
    s.validate();
    return s;
}

DetectorSpec DetectorSpec::sr_r(double threshold, double head_start) {
    DetectorSpec s;
    s.kind = Procedure::sr_r;
    s.threshold = threshold;
    s.head_start = head_start;
    s.validate();
    return s;
}

DetectorSpec DetectorSpec::srp(double threshold, std::shared_ptr<const PiecewiseConstantDensity> q) {
    DetectorSpec s;
    s.kind = Procedure::srp;
    s.threshold = threshold;
    s.quasi_stationary = std::move(q);
    s.validate();
    return s;
}

void DetectorSpec::validate() const {
    if (!(threshold > 0.0) || !std::isfinite(threshold)) {
        throw std::invalid_argument("detector threshold must be positive and finite");
    }
    if (kind == Procedure::sr_r && !(head_start >= 0.0 && head_start < threshold)) {
        throw std::invalid_argument("SR-r head start must satisfy 0 <= r < A");
    }
    if (kind == Procedure::srp) {
        if (!quasi_stationary) {
            throw std::invalid_argument("SRP requires a quasi-stationary distribution");
        }
        if (quasi_stationary->lower() < 0.0 ||
            std::fabs(quasi_stationary->upper() - threshold) > 1e-9 * threshold) {
            throw std::invalid_argument("SRP quasi-stationary support must be [0, A]");
        }
    }
}

DetectorState initial_state(const DetectorSpec& spec, Rng& rng) {
    DetectorState s;
    switch (spec.kind) {
        case Procedure::cusum: s.statistic = 1.0; break;
        case Procedure::sr: s.statistic = 0.0; break;
        case Procedure::sr_r: s.statistic = spec.head_start; break;
        case Procedure::srp: s.statistic = spec.quasi_stationary->sample(rng); break;
    }
    return s;
}

DetectorState update(const DetectorState& state, const DetectorSpec& spec, double lr_value) {
    if (!(lr_value > 0.0) || !std::isfinite(lr_value)) {
        throw std::invalid_argument("likelihood ratio must be positive and finite");
    }
    if (state.alarmed) {
        throw std::logic_error("detector already alarmed; restart before updating");
    }
    DetectorState next;
    next.statistic = spec.xi()(state.statistic) * lr_value;
    next.time_index = state.time_index + 1;
    next.alarmed = next.statistic >= spec.threshold;
    return next;
}

std::optional<std::uint64_t> run_single(const DetectorSpec& spec, const GaussianChangeModel& model,
                                        std::span<const double> observations, std::uint64_t seed) {
    if (observations.empty()) {
        throw std::invalid_argument("run_single: observations must be nonempty");
    }
    spec.validate();
    Rng rng(seed);
    DetectorState state = initial_state(spec, rng);
    for (double x : observations) {
        state = update(state, spec, model.likelihood_ratio(x));
        if (state.alarmed) {
            return state.time_index;
        }
    }
    return std::nullopt;
}

MulticyclicResult run_multicyclic(const DetectorSpec& spec, const GaussianChangeModel& model,
                                  std::span<const double> observations, std::uint64_t change_point,
                                  const MulticyclicOptions& options) {
    spec.validate();
    Rng rng(options.seed);
    MulticyclicResult result;
    if (options.record_trajectory) {
        result.log.statistic_trajectory.reserve(observations.size());
    }
    DetectorState state = initial_state(spec, rng);
    const double first_start = state.statistic;
    std::uint64_t t = 0;
    std::uint64_t last_alarm = 0;
    for (double x : observations) {
        ++t;
        state = update(state, spec, model.likelihood_ratio(x));
        if (options.record_trajectory) {
            result.log.statistic_trajectory.push_back(state.statistic);
        }
        if (!state.alarmed) {
            continue;
        }
        result.log.alarm_times.push_back(t);
        result.log.cycle_lengths.push_back(t - last_alarm);
        last_alarm = t;
        if (t <= change_point) {
            ++result.false_alarms;
        } else if (!result.detection_delay) {
            result.detection_delay = t - change_point;
        }
        if (spec.kind == Procedure::srp && !options.redraw_head_start) {
            state = DetectorState{first_start, 0, false};
        } else {
            state = initial_state(spec, rng);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------

ObservationStream::ObservationStream(const GaussianChangeModel& model,
                                     std::optional<std::uint64_t> change_point, std::uint64_t seed)
    : model_(model), change_point_(change_point), rng_(seed) {}

double ObservationStream::next_lr() {
    ++n_;
    const Hypothesis h =
        (!change_point_ || n_ <= *change_point_) ? Hypothesis::pre : Hypothesis::post;
    const double x = model_.mean(h) + std::sqrt(model_.variance(h)) * unit_(rng_);
    return model_.likelihood_ratio(x);
}

std::optional<std::uint64_t> simulate_stopping_time(const DetectorSpec& spec,
                                                    const GaussianChangeModel& model,
                                                    std::optional<std::uint64_t> change_point,
                                                    std::uint64_t seed, std::uint64_t max_steps) {
    Rng head_rng(derive_seed(seed, 1));
    ObservationStream stream(model, change_point, derive_seed(seed, 0));
    DetectorState state = initial_state(spec, head_rng);
    const StatisticMap xi = spec.xi();
    for (std::uint64_t n = 1; n <= max_steps; ++n) {
        state.statistic = xi(state.statistic) * stream.next_lr();
        if (state.statistic >= spec.threshold) {
            return n;
        }
    }
    return std::nullopt;
}

std::optional<std::uint64_t> simulate_multicyclic_delay(const DetectorSpec& spec,
                                                        const GaussianChangeModel& model,
                                                        std::uint64_t change_point,
                                                        std::uint64_t seed,
                                                        std::uint64_t max_steps) {
    Rng head_rng(derive_seed(seed, 1));
    ObservationStream stream(model, change_point, derive_seed(seed, 0));
    DetectorState state = initial_state(spec, head_rng);
    const StatisticMap xi = spec.xi();
    for (std::uint64_t n = 1; n <= max_steps; ++n) {
        state.statistic = xi(state.statistic) * stream.next_lr();
        if (state.statistic >= spec.threshold) {
            if (n > change_point) {
                return n - change_point;
            }
            state = initial_state(spec, head_rng);
        }
    }
    return std::nullopt;
}

}  // namespace qd
