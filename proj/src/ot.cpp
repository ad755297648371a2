#include "coot/ot.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace coot {

Measure uniform_measure(Eigen::Index n) {
    Measure m;
    m.weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    return m;
}

CostMatrix cost_matrix(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    if (X.cols() != Y.cols()) {
        throw Error(ErrorKind::Config, "cost_matrix: dimension mismatch (" + std::to_string(X.cols()) +
                                           " vs " + std::to_string(Y.cols()) + ")");
    }
    CostMatrix C;
    const Eigen::VectorXd x2 = X.rowwise().squaredNorm();
    const Eigen::VectorXd y2 = Y.rowwise().squaredNorm();
    C.values = x2.replicate(1, Y.rows()) + y2.transpose().replicate(X.rows(), 1) - 2.0 * X * Y.transpose();
    C.values = C.values.cwiseMax(0.0); // clamp the -0 eps from cancellation
    return C;
}

namespace {

void check_measure(const Measure& m, const char* name) {
    if ((m.weights.array() < 0).any()) {
        throw Error(ErrorKind::Numeric, std::string("sinkhorn: negative weight in ") + name);
    }
    if (std::abs(m.weights.sum() - 1.0) > 1e-12) {
        throw Error(ErrorKind::Numeric, std::string("sinkhorn: ") + name + " does not sum to 1");
    }
}

double marginal_violation(const Eigen::MatrixXd& coupling, const Measure& mu, const Measure& nu) {
    const double row_err = (coupling.rowwise().sum() - mu.weights).cwiseAbs().maxCoeff();
    const double col_err = (coupling.colwise().sum().transpose() - nu.weights).cwiseAbs().maxCoeff();
    return std::max(row_err, col_err);
}

// Warm-start schedule: sharp problems (large lambda * max cost) start from a
// smoother surrogate and anneal up, carrying the potentials. Cuts the
// iteration count at the target lambda by orders of magnitude.
std::vector<double> lambda_ladder(double lambda, double max_cost) {
    std::vector<double> rungs{lambda};
    double sharpness = lambda * max_cost;
    double l = lambda;
    while (sharpness > 50.0 && rungs.size() < 8) {
        l /= 10.0;
        sharpness /= 10.0;
        rungs.push_back(l);
    }
    std::reverse(rungs.begin(), rungs.end());
    return rungs;
}

constexpr double kWarmTol = 1e-4;
constexpr int kWarmIterCap = 300;
// Aitken jumps fire every kJumpPeriod plain sweeps when the contraction
// rate sits in a range where extrapolation is both safe and worthwhile.
constexpr int kJumpPeriod = 16;

TransportPlan sinkhorn_scaling(const CostMatrix& C, const Measure& mu, const Measure& nu,
                               double lambda, const SinkhornOptions& opts) {
    const Eigen::Index n = C.rows();
    const Eigen::Index m = C.cols();

    TransportPlan plan;
    plan.u = Eigen::VectorXd::Ones(n);
    plan.v = Eigen::VectorXd::Ones(m);

    auto safe_div = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        Eigen::VectorXd out(a.size());
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            out(i) = (a(i) == 0.0) ? 0.0 : a(i) / b(i);
        }
        return out;
    };

    const std::vector<double> rungs = lambda_ladder(lambda, C.values.maxCoeff());
    Eigen::MatrixXd K;
    Eigen::VectorXd Kv_cache;
    double prev_lambda = 0.0;
    for (size_t r = 0; r < rungs.size(); ++r) {
        const double rung = rungs[r];
        const bool target = r + 1 == rungs.size();
        if (prev_lambda > 0.0) {
            // Potentials scale with lambda in the exponent: u = exp(lambda f).
            const double ratio = rung / prev_lambda;
            plan.u = plan.u.array().pow(ratio);
            plan.v = plan.v.array().pow(ratio);
        }
        prev_lambda = rung;

        K = (-rung * C.values.array()).exp();
        if (!K.allFinite() || K.maxCoeff() <= 0.0) {
            throw Error(ErrorKind::Numeric,
                        "sinkhorn: kernel exp(-lambda*C) degenerate; use log-domain mode");
        }

        const double tol = target ? opts.tol : std::max(opts.tol, kWarmTol);
        const int budget = target ? opts.max_iter : std::min(opts.max_iter, kWarmIterCap);
        auto sweep = [&] {
            plan.u = safe_div(mu.weights, Kv_cache);
            plan.v = safe_div(nu.weights, K.transpose() * plan.u);
            Kv_cache = K * plan.v; // reused by both the residual and the next sweep
            if (!plan.u.allFinite() || !plan.v.allFinite()) {
                throw Error(ErrorKind::Numeric, "sinkhorn: scaling vectors overflowed; use log-domain mode");
            }
            return (Kv_cache.cwiseProduct(plan.u) - mu.weights).cwiseAbs().maxCoeff();
        };

        // Plain sweeps with periodic Aitken jumps along the dominant error
        // direction. A jump is kept only if the follow-up sweep improves the
        // residual, so the recorded violations stay monotone.
        Kv_cache = K * plan.v;
        Eigen::VectorXd u_before(n), v_before(m);
        double checkpoint_err = std::numeric_limits<double>::infinity();
        for (int it = 1; it <= budget; ++it) {
            u_before = plan.u;
            v_before = plan.v;
            double err = sweep();
            ++plan.iterations;

            if (it % kJumpPeriod == 0 && err > tol && std::isfinite(checkpoint_err) &&
                checkpoint_err > 0.0) {
                const double rate = std::pow(err / checkpoint_err, 1.0 / kJumpPeriod);
                if (rate > 0.2 && rate < 1.0 - 1e-12) {
                    const Eigen::VectorXd u_save = plan.u;
                    const Eigen::VectorXd v_save = plan.v;
                    const Eigen::VectorXd Kv_save = Kv_cache;
                    const double factor = std::min(rate / (1.0 - rate), 1e9);
                    bool jump_ok = true;
                    for (Eigen::Index i = 0; i < n && jump_ok; ++i) {
                        if (plan.u(i) > 0.0 && u_before(i) > 0.0) {
                            plan.u(i) *= std::pow(plan.u(i) / u_before(i), factor);
                        }
                        jump_ok = std::isfinite(plan.u(i));
                    }
                    for (Eigen::Index j = 0; j < m && jump_ok; ++j) {
                        if (plan.v(j) > 0.0 && v_before(j) > 0.0) {
                            plan.v(j) *= std::pow(plan.v(j) / v_before(j), factor);
                        }
                        jump_ok = std::isfinite(plan.v(j));
                    }
                    double jumped = std::numeric_limits<double>::infinity();
                    if (jump_ok) {
                        Kv_cache = K * plan.v;
                        jumped = sweep();
                        ++plan.iterations;
                    }
                    if (jumped < err) {
                        err = jumped;
                    } else {
                        plan.u = u_save;
                        plan.v = v_save;
                        Kv_cache = Kv_save;
                    }
                }
            }
            if (it % kJumpPeriod == 0) checkpoint_err = err;

            if (target) plan.violation_history.push_back(err);
            if (err <= tol) {
                if (target) plan.converged = true;
                break;
            }
        }
    }

    plan.coupling = plan.u.asDiagonal() * K * plan.v.asDiagonal();
    plan.marginal_err = marginal_violation(plan.coupling, mu, nu);
    return plan;
}

// log(sum_j exp(a_j)), tolerant of -inf entries.
double log_sum_exp(const Eigen::VectorXd& a) {
    const double c = a.maxCoeff();
    if (!std::isfinite(c)) return c;
    return c + std::log((a.array() - c).exp().sum());
}

// Newton refinement of the column potential on the reduced dual (rows
// eliminated analytically). The Hessian is m x m, so this is only engaged
// for thin plans; convergence is quadratic and indifferent to the
// near-degenerate spectra that stall the alternating sweeps.
class ColumnNewton {
public:
    ColumnNewton(const Eigen::MatrixXd& logK, const Eigen::VectorXd& mu, const Eigen::VectorXd& nu)
        : logK_(logK), mu_(mu), nu_(nu) {}

    // Column-sum residual of the row-projected plan at this column potential.
    Eigen::VectorXd residual(const Eigen::VectorXd& log_v) const {
        const Eigen::Index n = logK_.rows();
        const Eigen::Index m = logK_.cols();
        Eigen::VectorXd colsum = Eigen::VectorXd::Zero(m);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (mu_(i) == 0.0) continue;
            colsum += mu_(i) * row_softmax(i, log_v);
        }
        return colsum - nu_;
    }

    // Up to `max_steps` damped steps; returns true if the residual improved.
    bool refine(Eigen::VectorXd& log_v, double target, int max_steps, int& sweeps_spent) const {
        const Eigen::Index n = logK_.rows();
        const Eigen::Index m = logK_.cols();
        Eigen::VectorXd r = residual(log_v);
        double best = r.cwiseAbs().maxCoeff();
        const double entry = best;
        for (int step = 0; step < max_steps && best > target; ++step) {
            Eigen::VectorXd colsum = Eigen::VectorXd::Zero(m);
            Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (mu_(i) == 0.0) continue;
                const Eigen::VectorXd w = row_softmax(i, log_v);
                colsum += mu_(i) * w;
                J.noalias() -= mu_(i) * w * w.transpose();
            }
            J.diagonal() += colsum;
            // The all-ones shift direction is the gauge null space.
            J.diagonal().array() += std::max(1e-14, 1e-12 * colsum.sum() / static_cast<double>(m));
            const Eigen::VectorXd delta = J.ldlt().solve(-(colsum - nu_));
            ++sweeps_spent;

            bool improved = false;
            double t = 1.0;
            for (int bt = 0; bt < 5 && !improved; ++bt, t *= 0.5) {
                const Eigen::VectorXd candidate = log_v + t * delta;
                const Eigen::VectorXd rc = residual(candidate);
                ++sweeps_spent;
                const double norm = rc.cwiseAbs().maxCoeff();
                if (std::isfinite(norm) && norm < best) {
                    log_v = candidate;
                    best = norm;
                    improved = true;
                }
            }
            if (!improved) break;
        }
        return best < entry;
    }

private:
    Eigen::VectorXd row_softmax(Eigen::Index i, const Eigen::VectorXd& log_v) const {
        Eigen::VectorXd a = logK_.row(i).transpose() + log_v;
        const double c = a.maxCoeff();
        a = (a.array() - c).exp();
        return a / a.sum();
    }

    const Eigen::MatrixXd& logK_;
    const Eigen::VectorXd& mu_;
    const Eigen::VectorXd& nu_;
};

TransportPlan sinkhorn_log(const CostMatrix& C, const Measure& mu, const Measure& nu,
                           double lambda, const SinkhornOptions& opts) {
    const Eigen::Index n = C.rows();
    const Eigen::Index m = C.cols();
    const double neg_inf = -std::numeric_limits<double>::infinity();

    Eigen::VectorXd log_mu(n), log_nu(m);
    for (Eigen::Index i = 0; i < n; ++i) log_mu(i) = mu.weights(i) > 0 ? std::log(mu.weights(i)) : neg_inf;
    for (Eigen::Index j = 0; j < m; ++j) log_nu(j) = nu.weights(j) > 0 ? std::log(nu.weights(j)) : neg_inf;

    Eigen::VectorXd log_u = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd log_v = Eigen::VectorXd::Zero(m);

    TransportPlan plan;
    Eigen::VectorXd row_lse(n), col_lse(m);
    const std::vector<double> rungs = lambda_ladder(lambda, C.values.maxCoeff());
    Eigen::MatrixXd logK;
    double prev_lambda = 0.0;
    for (size_t r = 0; r < rungs.size(); ++r) {
        const double rung = rungs[r];
        const bool target = r + 1 == rungs.size();
        if (prev_lambda > 0.0) {
            const double ratio = rung / prev_lambda;
            log_u *= ratio;
            log_v *= ratio;
        }
        prev_lambda = rung;
        logK = -rung * C.values;

        const double tol = target ? opts.tol : std::max(opts.tol, kWarmTol);
        const int budget = target ? opts.max_iter : std::min(opts.max_iter, kWarmIterCap);
        auto refresh_row_lse = [&] {
            for (Eigen::Index i = 0; i < n; ++i) {
                row_lse(i) = log_sum_exp(logK.row(i).transpose() + log_v);
            }
        };
        auto sweep = [&] {
            log_u = log_mu - row_lse;
            for (Eigen::Index j = 0; j < m; ++j) {
                col_lse(j) = log_sum_exp(logK.col(j) + log_u);
            }
            log_v = log_nu - col_lse;
            refresh_row_lse(); // reused by both the residual and the next sweep
            double err = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double rs = std::exp(log_u(i) + row_lse(i));
                err = std::max(err, std::abs(rs - mu.weights(i)));
            }
            return err;
        };

        // Plain sweeps, with two silent accelerators between recorded sweeps:
        // a Newton finisher on the column potential for thin plans, and
        // periodic Aitken jumps otherwise. Both only keep states that improve
        // the residual, so the recorded violations stay monotone.
        const bool use_newton = m <= 64;
        ColumnNewton newton(logK, mu.weights, nu.weights);
        refresh_row_lse();
        Eigen::VectorXd delta_u(n), delta_v(m);
        double checkpoint_err = std::numeric_limits<double>::infinity();
        for (int it = 1; it <= budget; ++it) {
            const Eigen::VectorXd u_before = log_u;
            const Eigen::VectorXd v_before = log_v;
            double err = sweep();
            ++plan.iterations;
            delta_u = log_u - u_before;
            delta_v = log_v - v_before;

            if (err > tol && use_newton && it % 2 == 0) {
                int spent = 0;
                if (newton.refine(log_v, tol / 4.0, 6, spent)) {
                    refresh_row_lse();
                }
                plan.iterations += spent;
            } else if (it % kJumpPeriod == 0 && err > tol) {
                if (std::isfinite(checkpoint_err) && checkpoint_err > 0.0) {
                    const double rate = std::pow(err / checkpoint_err, 1.0 / kJumpPeriod);
                    if (rate > 0.2 && rate < 1.0 - 1e-12) {
                        const Eigen::VectorXd u_save = log_u;
                        const Eigen::VectorXd v_save = log_v;
                        const Eigen::VectorXd lse_save = row_lse;
                        const double factor = std::min(rate / (1.0 - rate), 1e9);
                        log_u += factor * delta_u;
                        log_v += factor * delta_v;
                        refresh_row_lse();
                        const double jumped = sweep();
                        ++plan.iterations;
                        if (jumped < err) {
                            err = jumped;
                        } else {
                            log_u = u_save;
                            log_v = v_save;
                            row_lse = lse_save;
                        }
                    }
                }
                checkpoint_err = err;
            }

            if (target) plan.violation_history.push_back(err);
            if (err <= tol) {
                if (target) plan.converged = true;
                break;
            }
        }
    }

    plan.coupling.resize(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) {
            plan.coupling(i, j) = std::exp(log_u(i) + logK(i, j) + log_v(j));
        }
    }
    plan.u = log_u.array().exp();
    plan.v = log_v.array().exp();
    plan.marginal_err = marginal_violation(plan.coupling, mu, nu);
    return plan;
}

} // namespace

TransportPlan sinkhorn(const CostMatrix& C, const Measure& mu, const Measure& nu,
                       double lambda, const SinkhornOptions& opts) {
    if (C.rows() != mu.size() || C.cols() != nu.size()) {
        throw Error(ErrorKind::Config, "sinkhorn: cost is " + std::to_string(C.rows()) + "x" +
                                           std::to_string(C.cols()) + " but marginals are " +
                                           std::to_string(mu.size()) + " and " + std::to_string(nu.size()));
    }
    if (lambda <= 0.0) throw Error(ErrorKind::Config, "sinkhorn: lambda must be positive");
    if (opts.tol <= 0.0) throw Error(ErrorKind::Config, "sinkhorn: tol must be positive");
    if (!C.values.allFinite() || (C.values.array() < 0).any()) {
        throw Error(ErrorKind::Numeric, "sinkhorn: cost matrix must be finite and nonnegative");
    }
    check_measure(mu, "mu");
    check_measure(nu, "nu");

    SinkhornMode mode = opts.mode;
    if (mode == SinkhornMode::Auto) {
        // Thin plans get the log-domain path for its Newton finisher; sharp
        // kernels need it anyway (exp(-500) ~ 7e-218 is the headroom limit).
        const bool thin = C.cols() <= 64;
        mode = (thin || lambda * C.values.maxCoeff() > 500.0) ? SinkhornMode::LogDomain
                                                              : SinkhornMode::Scaling;
    }
    return mode == SinkhornMode::LogDomain ? sinkhorn_log(C, mu, nu, lambda, opts)
                                           : sinkhorn_scaling(C, mu, nu, lambda, opts);
}

double regularized_cost(const TransportPlan& plan, const CostMatrix& C) {
    if (plan.coupling.rows() != C.rows() || plan.coupling.cols() != C.cols()) {
        throw Error(ErrorKind::Config, "regularized_cost: shape mismatch");
    }
    return plan.coupling.cwiseProduct(C.values).sum();
}

double entropy(const TransportPlan& plan) {
    double e = 0.0;
    for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i) {
        for (Eigen::Index j = 0; j < plan.coupling.cols(); ++j) {
            const double g = plan.coupling(i, j);
            if (g > 0.0) e -= g * std::log(g);
        }
    }
    return e;
}

} // namespace coot
