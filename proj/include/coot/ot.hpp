#ifndef COOT_OT_HPP
#define COOT_OT_HPP

#include <Eigen/Core>

#include "coot/common.hpp"

namespace coot {

/// Pairwise transport costs, squared Euclidean by default.
struct CostMatrix {
    Eigen::MatrixXd values; // n_s x n_t, nonnegative
    double exponent = 2.0;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

/// Discrete probability measure (weights over an implicit support).
struct Measure {
    Eigen::VectorXd weights;

    Eigen::Index size() const { return weights.size(); }
};

Measure uniform_measure(Eigen::Index n);

/// Entropic coupling with its scaling vectors. `marginal_err` is the
/// recomputed max-norm violation of the row/column marginals, never the
/// solver's internal estimate.
struct TransportPlan {
    Eigen::MatrixXd coupling; // n_s x n_t
    Eigen::VectorXd u;
    Eigen::VectorXd v;
    double marginal_err = 0.0;
    int iterations = 0;
    bool converged = false;
    // Marginal violation after each full (u, v) sweep, for the tightening check.
    std::vector<double> violation_history;
};

enum class SinkhornMode {
    Auto,     // plain scaling unless lambda * max(C) would underflow the kernel
    Scaling,  // diag(u) exp(-lambda C) diag(v) iterations
    LogDomain // log-sum-exp iterations on the potentials
};

struct SinkhornOptions {
    double tol = 1e-9;
    // At tol 1e-9 the sharp regimes the clustering pipeline runs in need a
    // few thousand iterations even with annealed warm starts.
    int max_iter = 10000;
    SinkhornMode mode = SinkhornMode::Auto;
};

/// values[i][j] = squared Euclidean distance between X row i and Y row j.
CostMatrix cost_matrix(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y);

/// Solves min <g,C> - (1/lambda) E(g) over couplings of (mu, nu) by
/// alternating scaling against the kernel exp(-lambda C). Converged means
/// the max marginal violation dropped to `tol` or below.
TransportPlan sinkhorn(const CostMatrix& C, const Measure& mu, const Measure& nu,
                       double lambda, const SinkhornOptions& opts = {});

/// Frobenius inner product <plan, C>: the transport part of the objective,
/// i.e. the (regularized) Wasserstein value used for all comparisons.
double regularized_cost(const TransportPlan& plan, const CostMatrix& C);

/// -sum g_ij log g_ij with 0 log 0 = 0.
double entropy(const TransportPlan& plan);

} // namespace coot

#endif
