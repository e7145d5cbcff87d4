#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace qd {

/// Which regime generates an observation: `pre` is the no-change law
/// N(mu, a*mu) (measure P_inf), `post` the changed law N(theta, a*theta)
/// (measure P_0).
enum class Hypothesis { pre, post };

/// Kullback-Leibler numbers in nats per observation: i_f = -E_inf[log LR],
/// i_g = E_0[log LR].
struct KlNumbers {
    double i_f;
    double i_g;
};

/// Map xi of the generic Markov statistic V_n = xi(V_{n-1}) * LR_n.
using StatisticMap = double (*)(double);

using Rng = std::mt19937_64;

/// The N(mu, a mu) -> N(theta, a theta) change model.
///
/// All members are pure; the object is immutable after construction and can
/// be shared between threads freely.
class GaussianChangeModel {
public:
    /// Throws std::invalid_argument unless mu, theta, a are positive and
    /// finite with mu != theta.
    GaussianChangeModel(double mu, double theta, double a);

    double mu() const { return mu_; }
    double theta() const { return theta_; }
    double a() const { return a_; }

    /// True for an upward shift (theta > mu).
    bool upward() const { return theta_ > mu_; }

    double mean(Hypothesis h) const { return h == Hypothesis::pre ? mu_ : theta_; }
    double variance(Hypothesis h) const { return a_ * mean(h); }

    double log_likelihood_ratio(double x) const;
    double likelihood_ratio(double x) const;

    /// Support endpoint t_min = sqrt(mu/theta) exp(-(theta-mu)/(2a)); the LR
    /// is >= t_min for upward shifts and <= t_min for downward shifts.
    double support_bound() const { return std::exp(log_t_min_); }
    double log_support_bound() const { return log_t_min_; }

    /// P_d(LR <= t). Throws std::domain_error for t <= 0 or non-finite t.
    double lr_cdf(double t, Hypothesis h) const;
    /// P_d(LR > t), accurate in the upper tail.
    double lr_sf(double t, Hypothesis h) const;
    /// Both P_d(LR <= t) and P_d(LR > t) from one evaluation; t = 0 and
    /// t = +inf are accepted.
    std::pair<double, double> lr_cdf_sf(double t, Hypothesis h) const;
    /// P_d(lo < LR <= hi) for 0 <= lo <= hi, computed from whichever tail
    /// keeps relative accuracy. lo = 0 and hi = +inf are allowed.
    double lr_probability(double lo, double hi, Hypothesis h) const;

    /// d/dt P_d(LR <= t). Zero outside the open support; rejects t <= 0.
    /// Diverges like (t - t_min)^(-1/2) at the support edge.
    double lr_density(double t, Hypothesis h) const;

    KlNumbers kl_numbers() const;

    /// One draw of X under the given hypothesis.
    double sample(Hypothesis h, Rng& rng) const;

private:
    // Squared |X| threshold h(t)^2 such that LR <= t iff X^2 <= h^2 (upward)
    // or X^2 >= h^2 (downward).
    double threshold_sq(double t) const;
    // P(|X| <= r) and P(|X| > r) for X ~ N(m, a m).
    double inner(double r, Hypothesis h) const;
    double outer(double r, Hypothesis h) const;

    double mu_;
    double theta_;
    double a_;
    double half_shift_over_a_;  // (theta - mu) / (2a)
    double sqrt_theta_mu_;
    double log_t_min_;
};

/// Transition density of V_{n+1} given V_n = x: d/dy P_d(LR <= y / xi(x)).
double transition_kernel(const GaussianChangeModel& model, double x, double y,
                         StatisticMap xi, Hypothesis h);

/// Partial sums S_1..S_n of log LR for X_j iid under `h`. Deterministic in
/// the seed.
std::vector<double> sample_log_lr_walk(const GaussianChangeModel& model, Hypothesis h,
                                       std::size_t n_steps, std::uint64_t seed);

}  // namespace qd
