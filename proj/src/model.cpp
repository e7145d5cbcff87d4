#include "qd/model.hpp"

#include "qd/normal.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace qd {

GaussianChangeModel::GaussianChangeModel(double mu, double theta, double a)
    : mu_(mu), theta_(theta), a_(a) {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(mu) || !positive(theta) || !positive(a)) {
        throw std::invalid_argument("GaussianChangeModel: mu, theta and a must be positive and finite");
    }
    if (mu == theta) {
        throw std::invalid_argument("GaussianChangeModel: mu and theta must differ");
    }
    half_shift_over_a_ = (theta - mu) / (2.0 * a);
    sqrt_theta_mu_ = std::sqrt(theta * mu);
    log_t_min_ = 0.5 * std::log(mu / theta) - half_shift_over_a_;
}

double GaussianChangeModel::log_likelihood_ratio(double x) const {
    // (theta-mu)/(2a) * (x^2/(theta mu) - 1) + log sqrt(mu/theta); the
    // factored difference of squares avoids cancellation near x^2 = theta mu.
    const double s = sqrt_theta_mu_;
    return half_shift_over_a_ * ((x - s) / s) * ((x + s) / s) + 0.5 * std::log(mu_ / theta_);
}

double GaussianChangeModel::likelihood_ratio(double x) const {
    return std::exp(log_likelihood_ratio(x));
}

double GaussianChangeModel::threshold_sq(double t) const {
    // h^2 = theta mu [a (2 log t - log(mu/theta)) / (theta - mu) + 1]
    //     = theta mu (log t - log t_min) / ((theta - mu) / (2a)).
    return theta_ * mu_ * (std::log(t) - log_t_min_) / half_shift_over_a_;
}

double GaussianChangeModel::inner(double r, Hypothesis h) const {
    if (r <= 0.0) {
        return 0.0;
    }
    const double m = mean(h);
    const double s = std::sqrt(variance(h));
    const double z_hi = (r - m) / s;
    const double z_lo = (-r - m) / s;
    if (z_hi < 0.0) {
        return normal::cdf(z_hi) - normal::cdf(z_lo);
    }
    return 1.0 - (normal::sf(z_hi) + normal::cdf(z_lo));
}

double GaussianChangeModel::outer(double r, Hypothesis h) const {
    if (r <= 0.0) {
        return 1.0;
    }
    const double m = mean(h);
    const double s = std::sqrt(variance(h));
    const double z_hi = (r - m) / s;
    const double z_lo = (-r - m) / s;
    if (z_hi > 0.0) {
        return normal::sf(z_hi) + normal::cdf(z_lo);
    }
    return 1.0 - (normal::cdf(z_hi) - normal::cdf(z_lo));
}

namespace {
void check_t(double t) {
    if (!(t > 0.0) || std::isnan(t)) {
        throw std::domain_error("likelihood ratio argument must be positive, got " + std::to_string(t));
    }
}
}  // namespace

double GaussianChangeModel::lr_cdf(double t, Hypothesis h) const {
    check_t(t);
    if (std::isinf(t)) {
        return 1.0;
    }
    const double r2 = threshold_sq(t);
    if (upward()) {
        return r2 <= 0.0 ? 0.0 : inner(std::sqrt(r2), h);
    }
    // Downward shift: LR <= t iff X^2 >= h^2; h^2 <= 0 once t >= t_min.
    return r2 <= 0.0 ? 1.0 : outer(std::sqrt(r2), h);
}

double GaussianChangeModel::lr_sf(double t, Hypothesis h) const {
    check_t(t);
    if (std::isinf(t)) {
        return 0.0;
    }
    const double r2 = threshold_sq(t);
    if (upward()) {
        return r2 <= 0.0 ? 1.0 : outer(std::sqrt(r2), h);
    }
    return r2 <= 0.0 ? 0.0 : inner(std::sqrt(r2), h);
}

std::pair<double, double> GaussianChangeModel::lr_cdf_sf(double t, Hypothesis h) const {
    if (t == 0.0) {
        return {0.0, 1.0};
    }
    check_t(t);
    if (std::isinf(t)) {
        return {1.0, 0.0};
    }
    const double r2 = threshold_sq(t);
    if (r2 <= 0.0) {
        return upward() ? std::pair{0.0, 1.0} : std::pair{1.0, 0.0};
    }
    const double r = std::sqrt(r2);
    const double m = mean(h);
    const double s = std::sqrt(variance(h));
    const double z_hi = (r - m) / s;
    const double z_lo = (-r - m) / s;
    double in;
    double out;
    if (z_hi < 0.0) {
        in = normal::cdf(z_hi) - normal::cdf(z_lo);
        out = 1.0 - in;
    } else {
        out = normal::sf(z_hi) + normal::cdf(z_lo);
        in = 1.0 - out;
    }
    return upward() ? std::pair{in, out} : std::pair{out, in};
}

double GaussianChangeModel::lr_probability(double lo, double hi, Hypothesis h) const {
    if (!(lo >= 0.0) || !(hi >= lo)) {
        throw std::domain_error("lr_probability: need 0 <= lo <= hi");
    }
    if (hi == lo) {
        return 0.0;
    }
    const double cdf_lo = lo == 0.0 ? 0.0 : lr_cdf(lo, h);
    const double cdf_hi = lr_cdf(hi, h);
    double p;
    if (cdf_hi <= 0.5) {
        p = cdf_hi - cdf_lo;
    } else {
        const double sf_lo = lo == 0.0 ? 1.0 : lr_sf(lo, h);
        p = sf_lo - lr_sf(hi, h);
    }
    return p > 0.0 ? p : 0.0;
}

double GaussianChangeModel::lr_density(double t, Hypothesis h) const {
    check_t(t);
    if (std::isinf(t)) {
        return 0.0;
    }
    const double r2 = threshold_sq(t);
    if (r2 <= 0.0) {
        return 0.0;
    }
    const double r = std::sqrt(r2);
    const double m = mean(h);
    const double v = variance(h);
    // d(h)/dt = theta mu a / ((theta - mu) t h); sign handled by fabs.
    const double dr_dt = std::fabs(theta_ * mu_ * a_ / ((theta_ - mu_) * t * r));
    return (normal::pdf(r, m, v) + normal::pdf(-r, m, v)) * dr_dt;
}

KlNumbers GaussianChangeModel::kl_numbers() const {
    const double d = theta_ - mu_;
    const double i_f = d * d / (2.0 * a_ * theta_) +
                       0.5 * ((mu_ / theta_ - 1.0) - std::log(mu_ / theta_));
    const double i_g = d * d / (2.0 * a_ * mu_) +
                       0.5 * ((theta_ / mu_ - 1.0) - std::log(theta_ / mu_));
    return {i_f, i_g};
}

double GaussianChangeModel::sample(Hypothesis h, Rng& rng) const {
    std::normal_distribution<double> n(mean(h), std::sqrt(variance(h)));
    return n(rng);
}

double transition_kernel(const GaussianChangeModel& model, double x, double y, StatisticMap xi,
                         Hypothesis h) {
    if (!(x >= 0.0) || !(y >= 0.0)) {
        throw std::domain_error("transition_kernel: statistic values must be nonnegative");
    }
    const double scale = xi(x);
    if (!(scale > 0.0)) {
        throw std::domain_error("transition_kernel: xi(x) must be positive");
    }
    if (y == 0.0) {
        return 0.0;
    }
    return model.lr_density(y / scale, h) / scale;
}

std::vector<double> sample_log_lr_walk(const GaussianChangeModel& model, Hypothesis h,
                                       std::size_t n_steps, std::uint64_t seed) {
    if (n_steps == 0) {
        throw std::invalid_argument("sample_log_lr_walk: n_steps must be >= 1");
    }
    Rng rng(seed);
    std::normal_distribution<double> n(model.mean(h), std::sqrt(model.variance(h)));
    std::vector<double> s(n_steps);
    double acc = 0.0;
    for (auto& v : s) {
        acc += model.log_likelihood_ratio(n(rng));
        v = acc;
    }
    return s;
}

}  // namespace qd
