#ifndef COOT_LOCAL_MODELS_HPP
#define COOT_LOCAL_MODELS_HPP

#include <string>

#include "coot/dataset.hpp"
#include "coot/ot.hpp"

namespace coot {

/// A collaborator's fitted prototype model: centroids, the uniform measure
/// over them, and the assignment plan between data and centroids.
struct LocalModel {
    Eigen::MatrixXd centroids; // k x d
    Measure centroid_measure;  // uniform 1/k
    TransportPlan plan;        // n x k
    int k = 0;
    double objective = 0.0; // <plan,C> - (1/lambda) E(plan) at the last step
    std::string algo_tag;
};

struct HardAssignment {
    std::vector<int> labels;
};

struct LocalFitOptions {
    double tol = 1e-6; // max centroid displacement
    int max_iter = 100;
    SinkhornOptions sinkhorn;
    // Objective after each full (plan, centroid) step, for descent checks.
    std::vector<double>* objective_trace = nullptr;
};

/// k distinct data points sampled without replacement.
Eigen::MatrixXd init_centroids(const DataView& view, int k, Rng& rng);

/// One alternation: fit the entropic plan against the current centroids,
/// then move each centroid to its plan-weighted barycenter. Input unchanged.
LocalModel sinkhorn_means_step(const DataView& view, const LocalModel& model, double lambda,
                               const SinkhornOptions& opts = {});

/// Full local algorithm: alternate until the max centroid displacement
/// drops to `tol` or `max_iter` steps have run.
LocalModel sinkhorn_means(const DataView& view, int k, double lambda, Rng& rng,
                          const LocalFitOptions& opts = {});

/// labels[i] = argmax_j plan[i][j]; ties toward the lower cluster index.
HardAssignment harden(const TransportPlan& plan);

/// Nearest-centroid crisp assignment (used when no plan exists yet, e.g.
/// when scoring a proposed centroid set).
HardAssignment assign_nearest(const DataView& view, const Eigen::MatrixXd& centroids);

/// Lloyd iterations behind the same LocalModel surface; the returned plan
/// is the hard 1/n-per-row assignment. Empty clusters reseed from the point
/// farthest from its centroid.
LocalModel kmeans(const DataView& view, int k, Rng& rng, const LocalFitOptions& opts = {});

/// Dispatch by algorithm tag ("sinkhorn_means" | "kmeans").
LocalModel fit_local_model(const std::string& algo, const DataView& view, int k, double lambda,
                           Rng& rng, const LocalFitOptions& opts = {});

} // namespace coot

#endif
