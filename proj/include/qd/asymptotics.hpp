#pragma once

#include "qd/detectors.hpp"
#include "qd/model.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qd {

/// A Monte-Carlo estimate with its batch-means standard error.
struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

struct MonteCarloBudget {
    std::size_t n_paths = 1'000'000;
    std::size_t horizon = 10'000;
    std::uint64_t seed = 20120801;
    /// Number of batches for batch-means standard errors; n_paths is split
    /// evenly (the remainder goes to the first batches).
    std::size_t batches = 100;
};

/// Reduced budget used by the default test run.
inline MonteCarloBudget smoke_budget(std::uint64_t seed = 20120801) {
    return {10'000, 1'000, seed, 100};
}

/// Stored draws of V~ = sum_{j>=1} exp(-S_j) (post-change walk) and of R_n
/// at the horizon (pre-change SR statistic), kept so that C_r can be
/// evaluated for any r on the same random numbers.
class CSamples {
public:
    CSamples(std::vector<double> v_tilde, std::vector<double> r_inf,
             std::vector<std::size_t> batch_offsets);

    /// E[log(1 + r + V~)]; r = 0 gives C_0.
    Estimate c_r(double r) const;
    Estimate c0() const { return c_r(0.0); }
    /// E[log(1 + R_inf + V~)] with R_inf and V~ from independent streams.
    Estimate c_inf() const;

    const std::vector<double>& v_tilde() const { return v_tilde_; }
    const std::vector<double>& r_inf() const { return r_inf_; }

private:
    template <class F>
    Estimate batch_mean(F&& per_path) const;

    std::vector<double> v_tilde_;
    std::vector<double> r_inf_;
    std::vector<std::size_t> offsets_;  // batch b covers [offsets[b], offsets[b+1])
};

struct OvershootConstants {
    Estimate zeta;
    Estimate varkappa;
    /// Gaussian (CLT) estimate of the series terms beyond the horizon,
    /// already included in the values above.
    double zeta_series_tail = 0.0;
    double varkappa_series_tail = 0.0;
    std::vector<std::string> warnings;
};

struct BetaCheckpoint {
    std::size_t n = 0;
    Estimate value;  // E_inf[S_n - min_{0<=k<=n} S_k]
};

struct BetaConstants {
    Estimate beta0;
    Estimate beta_inf;
    std::vector<BetaCheckpoint> checkpoints;  // dyadic, ending at the horizon
    bool stationary = true;
    std::vector<std::string> warnings;
};

struct CConstants {
    Estimate c0;
    Estimate c_inf;
    std::optional<Estimate> c_r;
    double head_start = 0.0;
    /// Mean of exp(-S_horizon) under the post-change law (neglected tail of V~).
    double v_tilde_tail = 0.0;
    std::shared_ptr<const CSamples> samples;
    std::vector<std::string> warnings;
};

/// Plain values of the constants, enough to evaluate the approximations.
struct ConstantValues {
    double zeta = 1.0;
    double varkappa = 0.0;
    double beta0 = 0.0;
    double beta_inf = 0.0;
    double c0 = 0.0;
    double c_inf = 0.0;
};

struct AsymptoticConstants {
    Estimate zeta;
    Estimate varkappa;
    Estimate beta0;
    Estimate beta_inf;
    Estimate c0;
    Estimate c_inf;
    std::optional<Estimate> c_r;
    double head_start = 0.0;
    std::size_t mc_paths = 0;
    std::size_t mc_horizon = 0;
    std::uint64_t seed = 0;
    std::shared_ptr<const CSamples> samples;
    std::vector<std::string> warnings;

    ConstantValues values() const;
};

OvershootConstants estimate_overshoot_constants(const GaussianChangeModel& model,
                                                const MonteCarloBudget& budget);
BetaConstants estimate_beta_constants(const GaussianChangeModel& model,
                                      const MonteCarloBudget& budget);
CConstants estimate_c_constants(const GaussianChangeModel& model, const MonteCarloBudget& budget,
                                std::optional<double> head_start = std::nullopt);

/// All constants from a single simulation pass (the three functions above
/// each run the full pass and keep their part).
AsymptoticConstants estimate_asymptotic_constants(const GaussianChangeModel& model,
                                                  const MonteCarloBudget& budget,
                                                  std::optional<double> head_start = std::nullopt);

/// Closed-form ARL approximations. `head_start` is r for SR-r and the
/// quasi-stationary mean mu_Q for SRP; ignored for CUSUM and SR.
double approx_arl(Procedure procedure, double threshold, const ConstantValues& constants,
                  const GaussianChangeModel& model, double head_start = 0.0);

enum class DelayMeasure { sadd, add_inf };

/// Closed-form delay approximations (log A + varkappa - c) / I_g with
/// c = -beta0 (CUSUM SADD), beta_inf (CUSUM ADD_inf), C_0 (SR SADD) and
/// C_inf (SR ADD_inf / STADD, SRP, SR-r).
double approx_delay(Procedure procedure, double threshold, const ConstantValues& constants,
                    const GaussianChangeModel& model, DelayMeasure measure = DelayMeasure::sadd);

/// Asymptotic form of the lower bound J_LB.
double approx_lower_bound(double threshold, const ConstantValues& constants,
                          const GaussianChangeModel& model);

}  // namespace qd
