#include "qd/oc_solver.hpp"

#include "qd/errors.hpp"
#include "qd/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace qd {

CollocationGrid::CollocationGrid(double threshold, std::size_t n_panels)
    : threshold_(threshold), n_(n_panels) {
    if (!(threshold > 0.0) || !std::isfinite(threshold)) {
        throw std::invalid_argument("CollocationGrid: threshold must be positive");
    }
    if (n_panels == 0) {
        throw std::invalid_argument("CollocationGrid: need at least one panel");
    }
    width_ = threshold / static_cast<double>(n_panels);
}

std::vector<double> CollocationGrid::nodes() const {
    std::vector<double> v(n_);
    for (std::size_t i = 0; i < n_; ++i) {
        v[i] = node(i);
    }
    return v;
}

namespace {

// Fills `out` with panel probabilities for start value x; `cdf`/`sf` are
// scratch buffers of size N+1.
void fill_row(const GaussianChangeModel& model, double scale, const CollocationGrid& grid,
              Hypothesis h, double* out, std::vector<double>& cdf, std::vector<double>& sf) {
    const std::size_t n = grid.size();
    for (std::size_t k = 0; k <= n; ++k) {
        const auto [c, s] = model.lr_cdf_sf(grid.edge(k) / scale, h);
        cdf[k] = c;
        sf[k] = s;
    }
    for (std::size_t j = 0; j < n; ++j) {
        // Difference the tail that is small so tiny entries keep their digits.
        const double p = cdf[j + 1] <= 0.5 ? cdf[j + 1] - cdf[j] : sf[j] - sf[j + 1];
        out[j] = p > 0.0 ? p : 0.0;
    }
}

}  // namespace

Eigen::RowVectorXd kernel_row(const GaussianChangeModel& model, StatisticMap xi,
                              const CollocationGrid& grid, double x, Hypothesis h) {
    const double scale = xi(x);
    if (!(scale > 0.0)) {
        throw std::domain_error("kernel_row: xi(x) must be positive");
    }
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(grid.size()));
    std::vector<double> cdf(grid.size() + 1);
    std::vector<double> sf(grid.size() + 1);
    fill_row(model, scale, grid, h, row.data(), cdf, sf);
    return row;
}

KernelPair build_kernel_matrices(const GaussianChangeModel& model, StatisticMap xi,
                                 const CollocationGrid& grid) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    // Row-major scratch so each worker writes a contiguous row.
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor pre(n, n);
    RowMajor post(n, n);
    constexpr std::size_t rows_per_job = 64;
    const std::size_t jobs = (grid.size() + rows_per_job - 1) / rows_per_job;
    parallel_for(jobs, [&](std::size_t job) {
        std::vector<double> cdf(grid.size() + 1);
        std::vector<double> sf(grid.size() + 1);
        const std::size_t end = std::min(grid.size(), (job + 1) * rows_per_job);
        for (std::size_t i = job * rows_per_job; i < end; ++i) {
            const double scale = xi(grid.node(i));
            const auto r = static_cast<Eigen::Index>(i);
            fill_row(model, scale, grid, Hypothesis::pre, pre.row(r).data(), cdf, sf);
            fill_row(model, scale, grid, Hypothesis::post, post.row(r).data(), cdf, sf);
        }
    });
    return {Eigen::MatrixXd(pre), Eigen::MatrixXd(post)};
}

// ---------------------------------------------------------------------------

namespace {

Eigen::PartialPivLU<Eigen::MatrixXd> factorize(const Eigen::MatrixXd& kernel, const char* what) {
    const auto n = kernel.rows();
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - kernel;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
    const double rcond = lu.rcond();
    if (!(rcond > 1e3 * std::numeric_limits<double>::epsilon())) {
        throw NumericalError(std::string("renewal system for ") + what +
                             " is singular to working precision (rcond=" + std::to_string(rcond) +
                             ")");
    }
    return lu;
}

}  // namespace

OcSolver::OcSolver(const GaussianChangeModel& model, Procedure procedure, double threshold,
                   std::size_t n_panels)
    : model_(model),
      procedure_(procedure),
      xi_(xi_map(procedure)),
      grid_(threshold, n_panels),
      kernels_(build_kernel_matrices(model_, xi_, grid_)),
      lu_pre_(factorize(kernels_.pre, "the ARL")),
      lu_post_(factorize(kernels_.post, "ADD_0")) {
    const auto n = static_cast<Eigen::Index>(grid_.size());
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    arl_ = lu_pre_.solve(ones);
    add0_ = lu_post_.solve(ones);
    iadd_ = lu_pre_.solve(add0_);
    if (arl_.minCoeff() <= 0.0 || add0_.minCoeff() <= 0.0 || iadd_.minCoeff() <= 0.0) {
        throw NumericalError("renewal solution lost positivity; increase the number of panels");
    }
}

Eigen::RowVectorXd OcSolver::row(double x, Hypothesis h) const {
    return kernel_row(model_, xi_, grid_, x, h);
}

double OcSolver::arl(double x) const { return 1.0 + row(x, Hypothesis::pre).dot(arl_); }

double OcSolver::add0(double x) const { return 1.0 + row(x, Hypothesis::post).dot(add0_); }

double OcSolver::iadd(double x) const { return add0(x) + row(x, Hypothesis::pre).dot(iadd_); }

double OcSolver::stadd(double x) const { return iadd(x) / arl(x); }

double OcSolver::lower_bound(double r) const {
    if (procedure_ == Procedure::cusum) {
        throw std::invalid_argument("lower_bound: defined for SR-type statistics only");
    }
    if (!(r >= 0.0 && r < grid_.threshold())) {
        throw std::invalid_argument("lower_bound: head start must satisfy 0 <= r < A");
    }
    const Eigen::RowVectorXd pre = row(r, Hypothesis::pre);
    const double ell = 1.0 + pre.dot(arl_);
    const double delta0 = add0(r);
    const double psi = delta0 + pre.dot(iadd_);
    return (r * delta0 + psi) / (r + ell);
}

DelayProfile OcSolver::delay_profile(double x0, const DelayProfileOptions& options,
                                     const QuasiStationary* qs) const {
    DelayProfile out;
    out.add.reserve(std::min<std::size_t>(options.nu_max, 20000) + 1);
    out.add.push_back(add0(x0));

    std::optional<double> exact_limit;
    if (qs) {
        exact_limit = qs->density.dot(add0_) / qs->density.sum();
    }

    // u_nu = row(x0) K^{nu-1} gives delta_nu(x0) = u.delta_0 and
    // rho_nu(x0) = u.1; u is rescaled freely since only the ratio matters.
    Eigen::RowVectorXd u = row(x0, Hypothesis::pre);

    double prev_diff = std::numeric_limits<double>::quiet_NaN();
    double extrapolated = out.add.back();
    for (std::size_t nu = 1; nu <= options.nu_max; ++nu) {
        const double rho = u.sum();
        if (!(rho > 0.0)) {
            break;  // alarm is certain from x0 before nu; ADD_nu undefined
        }
        const double add = u.dot(add0_) / rho;
        const double diff = add - out.add.back();
        out.add.push_back(add);

        bool done = false;
        if (exact_limit) {
            const double tol = options.tail_tolerance * *exact_limit;
            done = std::fabs(add - *exact_limit) <= tol && std::fabs(diff) <= tol;
        } else if (diff == 0.0) {
            extrapolated = add;
            done = true;
        } else if (std::isfinite(prev_diff) && prev_diff != 0.0) {
            const double ratio = diff / prev_diff;
            if (ratio >= 0.0 && ratio < 1.0) {
                const double tail = diff * ratio / (1.0 - ratio);
                extrapolated = add + tail;
                done = std::fabs(diff) + std::fabs(tail) <= options.tail_tolerance * std::fabs(add);
            }
        }
        prev_diff = diff;
        if (done && nu >= options.min_nu) {
            out.converged = true;
            break;
        }

        u = u * kernels_.pre;
        u /= rho;
    }
    out.add_inf = exact_limit ? *exact_limit : extrapolated;
    out.supremum = std::max(*std::max_element(out.add.begin(), out.add.end()), out.add_inf);
    return out;
}

QuasiStationary OcSolver::quasi_stationary(std::size_t max_iterations) const {
    const auto n = static_cast<Eigen::Index>(grid_.size());
    const double w = grid_.width();
    const Eigen::VectorXd row_sums = kernels_.pre.rowwise().sum();

    // Power iteration on the resolvent (I - K)^{-T}: same eigenvectors as
    // K^T, with the leading one separated by 1/(1 - lambda).
    Eigen::VectorXd q = Eigen::VectorXd::Constant(n, 1.0 / grid_.threshold());
    double lambda = std::numeric_limits<double>::quiet_NaN();
    QuasiStationary out;
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        Eigen::VectorXd next = lu_pre_.transpose().solve(q);
        next /= w * next.sum();
        const double estimate = row_sums.dot(next) / next.sum();
        q = std::move(next);
        const bool done = std::fabs(estimate - lambda) < 1e-12;
        lambda = estimate;
        if (done) {
            out.iterations = it;
            break;
        }
    }
    if (out.iterations == 0) {
        throw NumericalError("quasi-stationary power iteration did not converge in " +
                             std::to_string(max_iterations) + " iterations");
    }
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw NumericalError("quasi-stationary eigenvalue outside (0,1): " + std::to_string(lambda));
    }
    // Round-off can leave tiny negative values where the density vanishes.
    q = q.cwiseMax(0.0);
    q /= w * q.sum();

    out.lambda = lambda;
    out.density = q;
    double m = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        m += grid_.node(static_cast<std::size_t>(i)) * q[i];
    }
    out.mean = w * m;
    out.distribution = std::make_shared<const PiecewiseConstantDensity>(
        PiecewiseConstantDensity::on_uniform_grid(grid_.threshold(),
                                                  std::vector<double>(q.data(), q.data() + n)));
    return out;
}

SrpCharacteristics OcSolver::srp_characteristics(const QuasiStationary& qs) const {
    const double w = grid_.width();
    SrpCharacteristics out;
    out.arl_bar = w * qs.density.dot(arl_);
    out.arl_geometric = 1.0 / (1.0 - qs.lambda);
    out.add_bar = w * qs.density.dot(add0_);
    out.stadd_bar = w * qs.density.dot(iadd_) / out.arl_bar;
    return out;
}

double GridConvergence::relative_change() const { return std::fabs(coarse - fine) / std::fabs(fine); }

}  // namespace qd
