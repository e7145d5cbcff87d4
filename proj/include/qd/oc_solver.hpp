#pragma once

#include "qd/detectors.hpp"
#include "qd/model.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

namespace qd {

/// N equal panels of [0, A] with collocation nodes at the midpoints.
class CollocationGrid {
public:
    CollocationGrid(double threshold, std::size_t n_panels);

    double threshold() const { return threshold_; }
    std::size_t size() const { return n_; }
    double width() const { return width_; }
    double node(std::size_t i) const { return (static_cast<double>(i) + 0.5) * width_; }
    double edge(std::size_t k) const { return static_cast<double>(k) * width_; }
    std::vector<double> nodes() const;

private:
    double threshold_;
    std::size_t n_;
    double width_;
};

struct KernelPair {
    Eigen::MatrixXd pre;   // K_inf
    Eigen::MatrixXd post;  // K_0
};

/// Row of the discretized integral operator for a start value x (node or
/// not): entry j is P_d(LR in (edge_j, edge_{j+1}] / xi(x)), the exact
/// integral of K_d(x, .) over panel j.
Eigen::RowVectorXd kernel_row(const GaussianChangeModel& model, StatisticMap xi,
                              const CollocationGrid& grid, double x, Hypothesis h);

/// Both operators at every node. Row i of `pre` sums to P_inf(LR <= A/xi(node_i)).
KernelPair build_kernel_matrices(const GaussianChangeModel& model, StatisticMap xi,
                                 const CollocationGrid& grid);

struct DelayProfileOptions {
    std::size_t nu_max = 5000;
    /// Relative tolerance on the remaining change of ADD_nu.
    double tail_tolerance = 1e-4;
    /// Always iterate at least this far (e.g. to fill a table column).
    std::size_t min_nu = 0;
};

struct DelayProfile {
    std::vector<double> add;  // ADD_nu for nu = 0..add.size()-1
    double add_inf = 0.0;
    double supremum = 0.0;    // max over the computed prefix and add_inf
    bool converged = false;
};

struct QuasiStationary {
    double lambda = 0.0;
    Eigen::VectorXd density;  // q_A at the nodes, width * sum = 1
    double mean = 0.0;        // mu_Q
    std::size_t iterations = 0;
    /// Head-start law usable by DetectorSpec::srp.
    std::shared_ptr<const PiecewiseConstantDensity> distribution;
};

struct SrpCharacteristics {
    double arl_bar = 0.0;          // integral of ell * q_A
    double arl_geometric = 0.0;    // 1 / (1 - lambda_A)
    double add_bar = 0.0;          // integral of delta_0 * q_A
    double stadd_bar = 0.0;        // integral of psi * q_A over arl_bar
};

/// Operating characteristics of one (procedure, threshold) pair obtained by
/// piecewise-constant collocation of the renewal equations.
///
/// Construction assembles both kernels, factorizes I - K_inf and I - K_0,
/// and solves for ell, delta_0 and psi at the nodes. Off-grid values use one
/// more application of the defining equation. The object is immutable
/// afterwards.
class OcSolver {
public:
    OcSolver(const GaussianChangeModel& model, Procedure procedure, double threshold,
             std::size_t n_panels = 2000);

    const GaussianChangeModel& model() const { return model_; }
    Procedure procedure() const { return procedure_; }
    StatisticMap xi() const { return xi_; }
    const CollocationGrid& grid() const { return grid_; }
    const KernelPair& kernels() const { return kernels_; }

    /// Conventional start: W_0 = 1 for CUSUM, R_0 = 0 for the SR family.
    double default_start() const { return procedure_ == Procedure::cusum ? 1.0 : 0.0; }

    const Eigen::VectorXd& arl_nodes() const { return arl_; }
    const Eigen::VectorXd& add0_nodes() const { return add0_; }
    const Eigen::VectorXd& iadd_nodes() const { return iadd_; }

    double arl(double x) const;
    double add0(double x) const;
    double iadd(double x) const;
    /// psi(x) / ell(x).
    double stadd(double x) const;

    /// [r delta_0(r) + psi(r)] / [r + ell(r)]; SR-type procedures only,
    /// 0 <= r < A.
    double lower_bound(double r) const;

    /// ADD_nu(x0) = delta_nu(x0) / rho_nu(x0). When `qs` is given the limit
    /// is the exact left-eigenvector average of delta_0.
    DelayProfile delay_profile(double x0, const DelayProfileOptions& options = {},
                               const QuasiStationary* qs = nullptr) const;

    /// Leading left eigenpair of K_inf, normalized to a density. Throws
    /// NumericalError after `max_iterations`.
    QuasiStationary quasi_stationary(std::size_t max_iterations = 10000) const;

    SrpCharacteristics srp_characteristics(const QuasiStationary& qs) const;

private:
    Eigen::RowVectorXd row(double x, Hypothesis h) const;

    GaussianChangeModel model_;
    Procedure procedure_;
    StatisticMap xi_;
    CollocationGrid grid_;
    KernelPair kernels_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_pre_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_post_;
    Eigen::VectorXd arl_;
    Eigen::VectorXd add0_;
    Eigen::VectorXd iadd_;
};

struct GridConvergence {
    double coarse = 0.0;
    double fine = 0.0;
    double relative_change() const;
};

/// Evaluates `quantity` with N and 2N panels.
template <class Quantity>
GridConvergence check_grid_convergence(const GaussianChangeModel& model, Procedure procedure,
                                       double threshold, std::size_t n_panels,
                                       Quantity&& quantity) {
    const OcSolver coarse(model, procedure, threshold, n_panels);
    const double c = quantity(coarse);
    const OcSolver fine(model, procedure, threshold, 2 * n_panels);
    return {c, quantity(fine)};
}

}  // namespace qd
