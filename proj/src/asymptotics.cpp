#include "qd/asymptotics.hpp"

#include "qd/normal.hpp"
#include "qd/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qd {

namespace {

Estimate from_batches(double pooled, const std::vector<double>& per_batch) {
    const auto b = static_cast<double>(per_batch.size());
    double mean = 0.0;
    for (double v : per_batch) mean += v;
    mean /= b;
    double ss = 0.0;
    for (double v : per_batch) ss += (v - mean) * (v - mean);
    const double se = per_batch.size() > 1 ? std::sqrt(ss / (b - 1.0) / b) : 0.0;
    return {pooled, se};
}

std::vector<std::size_t> batch_offsets(std::size_t n_paths, std::size_t batches) {
    std::vector<std::size_t> off(batches + 1, 0);
    const std::size_t base = n_paths / batches;
    const std::size_t extra = n_paths % batches;
    for (std::size_t b = 0; b < batches; ++b) {
        off[b + 1] = off[b] + base + (b < extra ? 1 : 0);
    }
    return off;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// Moments of the one-step log-likelihood ratio Z = alpha X^2 + beta.
struct StepMoments {
    double mean;
    double variance;
};

StepMoments step_moments(const GaussianChangeModel& m, Hypothesis h) {
    const double c = (m.theta() - m.mu()) / (2.0 * m.a());
    const double alpha = c / (m.theta() * m.mu());
    const double beta = -c + 0.5 * std::log(m.mu() / m.theta());
    const double mean_x = m.mean(h);
    const double var_x = m.variance(h);
    const double ex2 = mean_x * mean_x + var_x;
    const double var_x2 = 2.0 * var_x * var_x + 4.0 * mean_x * mean_x * var_x;
    return {alpha * ex2 + beta, alpha * alpha * var_x2};
}

// sum_{k > horizon} f(k) for a smooth, eventually negligible f; consecutive
// k are summed exactly at first and in growing blocks later.
template <class F>
double series_tail(std::size_t horizon, F&& f) {
    double total = 0.0;
    double k = static_cast<double>(horizon) + 1.0;
    while (k < 1e12) {
        const double step = std::max(1.0, std::floor(k / 2000.0));
        const double term = step == 1.0 ? f(k) : step * f(k + 0.5 * (step - 1.0));
        total += term;
        k += step;
        if (term < 1e-18 * std::max(total, 1e-300) || term < 1e-300) break;
    }
    return total;
}

// Everything one simulation pass collects for a batch of paths.
struct BatchAccumulator {
    std::size_t paths = 0;
    std::vector<double> pre_positive;   // count of S_k > 0 under P_inf, k = 1..H
    std::vector<double> post_nonpos;    // count of S_k <= 0 under P_0
    std::vector<double> post_negpart;   // sum of S_k^- under P_0
    double min_post_sum = 0.0;          // sum of min_{n>=0} S_n under P_0
    std::vector<double> range_sum;      // sum of S_n - min S at checkpoints (P_inf)
    std::vector<double> v_tilde;        // per path
    std::vector<double> r_inf;          // per path
    double tail_exp_sum = 0.0;          // sum of exp(-S_H) under P_0
};

std::vector<std::size_t> dyadic_checkpoints(std::size_t horizon) {
    std::vector<std::size_t> cps;
    for (std::size_t n = horizon; n >= 1 && cps.size() < 4; n /= 2) {
        cps.push_back(n);
    }
    std::reverse(cps.begin(), cps.end());
    return cps;
}

struct PassResult {
    std::vector<BatchAccumulator> batches;
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> checkpoints;
};

PassResult simulate(const GaussianChangeModel& model, const MonteCarloBudget& budget) {
    if (budget.n_paths < 10'000) {
        throw std::invalid_argument("Monte-Carlo budget needs at least 1e4 paths");
    }
    if (budget.horizon < 1'000) {
        throw std::invalid_argument("Monte-Carlo horizon must be at least 1e3");
    }
    if (budget.batches < 2 || budget.batches > budget.n_paths) {
        throw std::invalid_argument("Monte-Carlo batches must be in [2, n_paths]");
    }
    const std::size_t h = budget.horizon;
    PassResult out;
    out.offsets = batch_offsets(budget.n_paths, budget.batches);
    out.checkpoints = dyadic_checkpoints(h);
    out.batches.resize(budget.batches);

    parallel_for(budget.batches, [&](std::size_t b) {
        BatchAccumulator acc;
        acc.paths = out.offsets[b + 1] - out.offsets[b];
        acc.pre_positive.assign(h, 0.0);
        acc.post_nonpos.assign(h, 0.0);
        acc.post_negpart.assign(h, 0.0);
        acc.range_sum.assign(out.checkpoints.size(), 0.0);
        acc.v_tilde.reserve(acc.paths);
        acc.r_inf.reserve(acc.paths);

        // Separate streams for the two laws keep R_inf and V~ independent.
        Rng post_rng(derive_seed(budget.seed, 2 * b));
        Rng pre_rng(derive_seed(budget.seed, 2 * b + 1));
        std::normal_distribution<double> unit(0.0, 1.0);
        const double m0 = model.theta();
        const double s0 = std::sqrt(model.variance(Hypothesis::post));
        const double mi = model.mu();
        const double si = std::sqrt(model.variance(Hypothesis::pre));

        for (std::size_t p = 0; p < acc.paths; ++p) {
            double s = 0.0;
            double lowest = 0.0;
            double v = 0.0;
            for (std::size_t k = 0; k < h; ++k) {
                s += model.log_likelihood_ratio(m0 + s0 * unit(post_rng));
                if (s <= 0.0) {
                    acc.post_nonpos[k] += 1.0;
                    acc.post_negpart[k] -= s;
                }
                lowest = std::min(lowest, s);
                v += std::exp(-s);
            }
            acc.min_post_sum += lowest;
            acc.v_tilde.push_back(v);
            acc.tail_exp_sum += std::exp(-s);

            s = 0.0;
            lowest = 0.0;
            double r = 0.0;
            std::size_t cp = 0;
            for (std::size_t k = 0; k < h; ++k) {
                const double z = model.log_likelihood_ratio(mi + si * unit(pre_rng));
                s += z;
                r = (1.0 + r) * std::exp(z);
                if (s > 0.0) {
                    acc.pre_positive[k] += 1.0;
                }
                lowest = std::min(lowest, s);
                if (k + 1 == out.checkpoints[cp]) {
                    acc.range_sum[cp] += s - lowest;
                    ++cp;
                }
            }
            acc.r_inf.push_back(r);
        }
        out.batches[b] = std::move(acc);
    });
    return out;
}

// Pooled and per-batch values of a statistic computed from accumulators.
template <class F>
Estimate combine(const PassResult& pass, F&& stat) {
    std::vector<double> per_batch;
    per_batch.reserve(pass.batches.size());
    BatchAccumulator pooled;
    const std::size_t h = pass.batches.front().pre_positive.size();
    pooled.pre_positive.assign(h, 0.0);
    pooled.post_nonpos.assign(h, 0.0);
    pooled.post_negpart.assign(h, 0.0);
    pooled.range_sum.assign(pass.checkpoints.size(), 0.0);
    for (const auto& acc : pass.batches) {
        per_batch.push_back(stat(acc));
        pooled.paths += acc.paths;
        for (std::size_t k = 0; k < h; ++k) {
            pooled.pre_positive[k] += acc.pre_positive[k];
            pooled.post_nonpos[k] += acc.post_nonpos[k];
            pooled.post_negpart[k] += acc.post_negpart[k];
        }
        for (std::size_t c = 0; c < pooled.range_sum.size(); ++c) {
            pooled.range_sum[c] += acc.range_sum[c];
        }
        pooled.min_post_sum += acc.min_post_sum;
        pooled.tail_exp_sum += acc.tail_exp_sum;
    }
    return from_batches(stat(pooled), per_batch);
}

OvershootConstants overshoot_from(const GaussianChangeModel& model, const PassResult& pass) {
    const KlNumbers kl = model.kl_numbers();
    const StepMoments pre = step_moments(model, Hypothesis::pre);
    const StepMoments post = step_moments(model, Hypothesis::post);
    const std::size_t h = pass.batches.front().pre_positive.size();

    const double sd_pre = std::sqrt(pre.variance);
    const double sd_post = std::sqrt(post.variance);
    const double zeta_tail = series_tail(h, [&](double k) {
        const double rk = std::sqrt(k);
        return (normal::sf(rk * kl.i_f / sd_pre) + normal::cdf(-rk * kl.i_g / sd_post)) / k;
    });
    const double kappa_tail = series_tail(h, [&](double k) {
        const double m = k * kl.i_g;
        const double s = sd_post * std::sqrt(k);
        return (s * normal::pdf(m / s) - m * normal::sf(m / s)) / k;
    });

    auto zeta_exponent = [&](const BatchAccumulator& acc) {
        const double n = static_cast<double>(acc.paths);
        CompensatedSum sum;
        for (std::size_t k = 0; k < h; ++k) {
            sum.add((acc.pre_positive[k] + acc.post_nonpos[k]) / n / static_cast<double>(k + 1));
        }
        return sum.value() + zeta_tail;
    };
    auto neg_series = [&](const BatchAccumulator& acc) {
        const double n = static_cast<double>(acc.paths);
        CompensatedSum sum;
        for (std::size_t k = 0; k < h; ++k) {
            sum.add(acc.post_negpart[k] / n / static_cast<double>(k + 1));
        }
        return sum.value() + kappa_tail;
    };

    OvershootConstants out;
    const Estimate expo = combine(pass, zeta_exponent);
    out.zeta.value = std::exp(-expo.value) / kl.i_g;
    out.zeta.std_error = out.zeta.value * expo.std_error;  // delta method

    const double ez2 = post.variance + post.mean * post.mean;
    const Estimate series = combine(pass, neg_series);
    out.varkappa.value = ez2 / (2.0 * post.mean) - series.value;
    out.varkappa.std_error = series.std_error;

    out.zeta_series_tail = zeta_tail;
    out.varkappa_series_tail = kappa_tail;
    if (out.zeta.value * zeta_tail > out.zeta.std_error) {
        out.warnings.push_back("zeta: series truncation at horizon " + std::to_string(h) +
                               " shifts zeta by a factor exp(-" + fmt(zeta_tail) +
                               "), more than its standard error; Gaussian tail correction applied");
    }
    if (kappa_tail > out.varkappa.std_error) {
        out.warnings.push_back("varkappa: series truncation at horizon " + std::to_string(h) +
                               " contributes " + fmt(kappa_tail) +
                               ", more than its standard error; Gaussian tail correction applied");
    }
    return out;
}

BetaConstants beta_from(const PassResult& pass) {
    BetaConstants out;
    out.beta0 = combine(pass, [](const BatchAccumulator& acc) {
        return acc.min_post_sum / static_cast<double>(acc.paths);
    });
    for (std::size_t c = 0; c < pass.checkpoints.size(); ++c) {
        BetaCheckpoint cp;
        cp.n = pass.checkpoints[c];
        cp.value = combine(pass, [c](const BatchAccumulator& acc) {
            return acc.range_sum[c] / static_cast<double>(acc.paths);
        });
        out.checkpoints.push_back(cp);
    }
    out.beta_inf = out.checkpoints.back().value;
    if (out.checkpoints.size() >= 2) {
        const auto& a = out.checkpoints[out.checkpoints.size() - 2].value;
        const auto& b = out.checkpoints.back().value;
        const double tol = 2.0 * std::hypot(a.std_error, b.std_error);
        if (std::fabs(a.value - b.value) > tol) {
            out.stationary = false;
            out.warnings.push_back("beta_inf: checkpoints n=" +
                                   std::to_string(out.checkpoints[out.checkpoints.size() - 2].n) +
                                   " and n=" + std::to_string(out.checkpoints.back().n) +
                                   " differ by " + fmt(b.value - a.value) +
                                   " (> 2 standard errors); not yet stationary");
        }
    }
    return out;
}

CConstants c_from(const PassResult& pass, std::optional<double> head_start) {
    std::vector<double> v;
    std::vector<double> r;
    v.reserve(pass.offsets.back());
    r.reserve(pass.offsets.back());
    double tail = 0.0;
    for (const auto& acc : pass.batches) {
        v.insert(v.end(), acc.v_tilde.begin(), acc.v_tilde.end());
        r.insert(r.end(), acc.r_inf.begin(), acc.r_inf.end());
        tail += acc.tail_exp_sum;
    }
    CConstants out;
    out.samples = std::make_shared<const CSamples>(std::move(v), std::move(r), pass.offsets);
    out.c0 = out.samples->c0();
    out.c_inf = out.samples->c_inf();
    if (head_start) {
        if (!(*head_start >= 0.0)) {
            throw std::invalid_argument("C_r requires r >= 0");
        }
        out.c_r = out.samples->c_r(*head_start);
        out.head_start = *head_start;
    }
    out.v_tilde_tail = tail / static_cast<double>(pass.offsets.back());
    if (out.v_tilde_tail > out.c0.std_error) {
        out.warnings.push_back("C_0: mean exp(-S_H) = " + fmt(out.v_tilde_tail) +
                               " exceeds the standard error; increase the horizon");
    }
    if (!(out.c0.value < out.c_inf.value)) {
        out.warnings.push_back("C_0 >= C_inf; constants are inconsistent at this budget");
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

CSamples::CSamples(std::vector<double> v_tilde, std::vector<double> r_inf,
                   std::vector<std::size_t> batch_offsets)
    : v_tilde_(std::move(v_tilde)), r_inf_(std::move(r_inf)), offsets_(std::move(batch_offsets)) {
    if (v_tilde_.size() != r_inf_.size() || offsets_.size() < 3 || offsets_.front() != 0 ||
        offsets_.back() != v_tilde_.size()) {
        throw std::invalid_argument("CSamples: inconsistent sample layout");
    }
}

template <class F>
Estimate CSamples::batch_mean(F&& per_path) const {
    std::vector<double> per_batch;
    CompensatedSum total;
    for (std::size_t b = 0; b + 1 < offsets_.size(); ++b) {
        CompensatedSum sum;
        for (std::size_t i = offsets_[b]; i < offsets_[b + 1]; ++i) {
            const double v = per_path(i);
            sum.add(v);
            total.add(v);
        }
        per_batch.push_back(sum.value() / static_cast<double>(offsets_[b + 1] - offsets_[b]));
    }
    return from_batches(total.value() / static_cast<double>(offsets_.back()), per_batch);
}

Estimate CSamples::c_r(double r) const {
    return batch_mean([&](std::size_t i) { return std::log1p(r + v_tilde_[i]); });
}

Estimate CSamples::c_inf() const {
    return batch_mean([&](std::size_t i) { return std::log1p(r_inf_[i] + v_tilde_[i]); });
}

ConstantValues AsymptoticConstants::values() const {
    return {zeta.value, varkappa.value, beta0.value, beta_inf.value, c0.value, c_inf.value};
}

OvershootConstants estimate_overshoot_constants(const GaussianChangeModel& model,
                                                const MonteCarloBudget& budget) {
    return overshoot_from(model, simulate(model, budget));
}

BetaConstants estimate_beta_constants(const GaussianChangeModel& model,
                                      const MonteCarloBudget& budget) {
    return beta_from(simulate(model, budget));
}

CConstants estimate_c_constants(const GaussianChangeModel& model, const MonteCarloBudget& budget,
                                std::optional<double> head_start) {
    return c_from(simulate(model, budget), head_start);
}

AsymptoticConstants estimate_asymptotic_constants(const GaussianChangeModel& model,
                                                  const MonteCarloBudget& budget,
                                                  std::optional<double> head_start) {
    const PassResult pass = simulate(model, budget);
    OvershootConstants ov = overshoot_from(model, pass);
    BetaConstants be = beta_from(pass);
    CConstants cc = c_from(pass, head_start);

    AsymptoticConstants out;
    out.zeta = ov.zeta;
    out.varkappa = ov.varkappa;
    out.beta0 = be.beta0;
    out.beta_inf = be.beta_inf;
    out.c0 = cc.c0;
    out.c_inf = cc.c_inf;
    out.c_r = cc.c_r;
    out.head_start = cc.head_start;
    out.mc_paths = budget.n_paths;
    out.mc_horizon = budget.horizon;
    out.seed = budget.seed;
    out.samples = cc.samples;
    for (auto* w : {&ov.warnings, &be.warnings, &cc.warnings}) {
        out.warnings.insert(out.warnings.end(), w->begin(), w->end());
    }
    return out;
}

// ---------------------------------------------------------------------------

double approx_arl(Procedure procedure, double threshold, const ConstantValues& c,
                  const GaussianChangeModel& model, double head_start) {
    if (!(threshold > 0.0)) {
        throw std::invalid_argument("approx_arl: threshold must be positive");
    }
    const KlNumbers kl = model.kl_numbers();
    switch (procedure) {
        case Procedure::cusum:
            return threshold / (kl.i_g * c.zeta * c.zeta) - std::log(threshold) / kl.i_f -
                   1.0 / (kl.i_g * c.zeta);
        case Procedure::sr: return threshold / c.zeta;
        case Procedure::srp:
        case Procedure::sr_r: return threshold / c.zeta - head_start;
    }
    return 0.0;
}

double approx_delay(Procedure procedure, double threshold, const ConstantValues& c,
                    const GaussianChangeModel& model, DelayMeasure measure) {
    if (!(threshold > 1.0)) {
        throw std::invalid_argument("approx_delay: threshold must exceed 1");
    }
    double offset = c.c_inf;
    if (procedure == Procedure::cusum) {
        offset = measure == DelayMeasure::sadd ? -c.beta0 : c.beta_inf;
    } else if (procedure == Procedure::sr && measure == DelayMeasure::sadd) {
        offset = c.c0;
    }
    return (std::log(threshold) + c.varkappa - offset) / model.kl_numbers().i_g;
}

double approx_lower_bound(double threshold, const ConstantValues& c,
                          const GaussianChangeModel& model) {
    return approx_delay(Procedure::srp, threshold, c, model);
}

}  // namespace qd
