#include "coot/local_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coot {

Eigen::MatrixXd init_centroids(const DataView& view, int k, Rng& rng) {
    const Eigen::Index n = view.size();
    if (k < 1 || static_cast<Eigen::Index>(k) > n) {
        throw Error(ErrorKind::Config, "init_centroids: k=" + std::to_string(k) + " out of range for n=" +
                                           std::to_string(n));
    }
    std::vector<Eigen::Index> ids(static_cast<size_t>(n));
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);

    Eigen::MatrixXd centroids(k, view.dim());
    for (int j = 0; j < k; ++j) {
        centroids.row(j) = view.matrix.values.row(ids[static_cast<size_t>(j)]);
    }
    return centroids;
}

namespace {

double model_objective(const TransportPlan& plan, const CostMatrix& C, double lambda) {
    double transport = 0.0;
    double ent = 0.0;
    for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i) {
        for (Eigen::Index j = 0; j < plan.coupling.cols(); ++j) {
            const double g = plan.coupling(i, j);
            transport += g * C.values(i, j);
            if (g > 0.0) ent -= g * std::log(g);
        }
    }
    return transport - ent / lambda;
}

TransportPlan fit_plan(const DataView& view, const Eigen::MatrixXd& centroids, double lambda,
                       const SinkhornOptions& opts, CostMatrix* cost_out) {
    CostMatrix C = cost_matrix(view.matrix.values, centroids);
    Measure mu{view.weights};
    Measure nu = uniform_measure(centroids.rows());
    TransportPlan plan = sinkhorn(C, mu, nu, lambda, opts);
    if (!plan.converged) {
        throw Error(ErrorKind::Numeric, "sinkhorn did not converge in " + std::to_string(plan.iterations) +
                                            " iterations (marginal violation " +
                                            format_double(plan.marginal_err) + ")");
    }
    if (cost_out) *cost_out = std::move(C);
    return plan;
}

} // namespace

LocalModel sinkhorn_means_step(const DataView& view, const LocalModel& model, double lambda,
                               const SinkhornOptions& opts) {
    if (model.centroids.cols() != view.dim()) {
        throw Error(ErrorKind::Config, "sinkhorn_means_step: centroid dimension mismatch");
    }

    LocalModel next = model;
    CostMatrix C;
    next.plan = fit_plan(view, model.centroids, lambda, opts, &C);

    // Barycentric update: column mass is 1/k, so divide by it rather than
    // leaving the raw sum (which would shrink every centroid by 1/k).
    const Eigen::VectorXd col_mass = next.plan.coupling.colwise().sum();
    Eigen::MatrixXd updated = next.plan.coupling.transpose() * view.matrix.values;
    for (Eigen::Index j = 0; j < updated.rows(); ++j) {
        if (col_mass(j) > 0.0) updated.row(j) /= col_mass(j);
    }
    next.centroids = updated;
    next.centroid_measure = uniform_measure(next.centroids.rows());

    const CostMatrix C_new = cost_matrix(view.matrix.values, next.centroids);
    next.objective = model_objective(next.plan, C_new, lambda);
    return next;
}

LocalModel sinkhorn_means(const DataView& view, int k, double lambda, Rng& rng,
                          const LocalFitOptions& opts) {
    LocalModel model;
    model.k = k;
    model.algo_tag = "sinkhorn_means";
    model.centroids = init_centroids(view, k, rng);
    model.centroid_measure = uniform_measure(k);

    for (int it = 0; it < opts.max_iter; ++it) {
        LocalModel next = sinkhorn_means_step(view, model, lambda, opts.sinkhorn);
        const double shift = (next.centroids - model.centroids).rowwise().norm().maxCoeff();
        model = std::move(next);
        if (opts.objective_trace) opts.objective_trace->push_back(model.objective);
        if (shift <= opts.tol) break;
    }
    return model;
}

HardAssignment harden(const TransportPlan& plan) {
    if (plan.coupling.cols() < 1) {
        throw Error(ErrorKind::Config, "harden: plan has no columns");
    }
    HardAssignment hard;
    hard.labels.resize(static_cast<size_t>(plan.coupling.rows()));
    for (Eigen::Index i = 0; i < plan.coupling.rows(); ++i) {
        int best = 0;
        for (Eigen::Index j = 1; j < plan.coupling.cols(); ++j) {
            if (plan.coupling(i, j) > plan.coupling(i, best)) best = static_cast<int>(j);
        }
        hard.labels[static_cast<size_t>(i)] = best;
    }
    return hard;
}

HardAssignment assign_nearest(const DataView& view, const Eigen::MatrixXd& centroids) {
    const CostMatrix C = cost_matrix(view.matrix.values, centroids);
    HardAssignment hard;
    hard.labels.resize(static_cast<size_t>(view.size()));
    for (Eigen::Index i = 0; i < C.rows(); ++i) {
        Eigen::Index best = 0;
        C.values.row(i).minCoeff(&best);
        hard.labels[static_cast<size_t>(i)] = static_cast<int>(best);
    }
    return hard;
}

LocalModel kmeans(const DataView& view, int k, Rng& rng, const LocalFitOptions& opts) {
    const Eigen::Index n = view.size();
    LocalModel model;
    model.k = k;
    model.algo_tag = "kmeans";
    model.centroids = init_centroids(view, k, rng);
    model.centroid_measure = uniform_measure(k);

    std::vector<int> labels(static_cast<size_t>(n), 0);
    for (int it = 0; it < opts.max_iter; ++it) {
        const CostMatrix C = cost_matrix(view.matrix.values, model.centroids);
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            C.values.row(i).minCoeff(&best);
            labels[static_cast<size_t>(i)] = static_cast<int>(best);
        }

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, view.dim());
        Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(labels[static_cast<size_t>(i)]) += view.matrix.values.row(i);
            counts(labels[static_cast<size_t>(i)]) += 1;
        }
        Eigen::MatrixXd updated(k, view.dim());
        for (int j = 0; j < k; ++j) {
            if (counts(j) > 0) {
                updated.row(j) = sums.row(j) / counts(j);
            } else {
                // Reseed an empty cluster from the farthest point.
                Eigen::Index far = 0;
                double far_d = -1.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double d = C.values(i, labels[static_cast<size_t>(i)]);
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                updated.row(j) = view.matrix.values.row(far);
            }
        }
        const double shift = (updated - model.centroids).rowwise().norm().maxCoeff();
        model.centroids = updated;
        if (shift <= opts.tol) break;
    }

    // Hard plan: 1/n on the assigned cluster so collaboration code stays
    // agnostic to the local algorithm.
    const CostMatrix C = cost_matrix(view.matrix.values, model.centroids);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        C.values.row(i).minCoeff(&best);
        labels[static_cast<size_t>(i)] = static_cast<int>(best);
    }
    model.plan.coupling = Eigen::MatrixXd::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        model.plan.coupling(i, labels[static_cast<size_t>(i)]) = 1.0 / static_cast<double>(n);
    }
    model.plan.u = Eigen::VectorXd::Ones(n);
    model.plan.v = Eigen::VectorXd::Ones(k);
    model.plan.converged = true;
    model.plan.marginal_err = 0.0;
    double sse = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) sse += C.values(i, labels[static_cast<size_t>(i)]);
    model.objective = sse / static_cast<double>(n);
    return model;
}

LocalModel fit_local_model(const std::string& algo, const DataView& view, int k, double lambda,
                           Rng& rng, const LocalFitOptions& opts) {
    if (algo == "sinkhorn_means") return sinkhorn_means(view, k, lambda, rng, opts);
    if (algo == "kmeans") return kmeans(view, k, rng, opts);
    throw Error(ErrorKind::Config, "unknown local algorithm '" + algo + "'");
}

} // namespace coot
