#ifndef COOT_QUALITY_HPP
#define COOT_QUALITY_HPP

#include <optional>

#include "coot/dataset.hpp"
#include "coot/local_models.hpp"

namespace coot {

enum class IndexKind { Db, Silhouette, Ari };

const char* to_string(IndexKind kind);

struct QualityReport {
    double db = 0.0;               // lower is better
    double silhouette = 0.0;       // in [-1, 1], higher is better
    std::optional<double> ari;     // needs ground-truth labels
    int k = 0;
};

/// Davies-Bouldin over the non-empty clusters: mean over clusters of the
/// worst (scatter_k + scatter_k') / centroid-distance ratio. Throws when
/// fewer than two clusters are populated or two populated centroids coincide.
double davies_bouldin(const DataView& view, const HardAssignment& labels,
                      const Eigen::MatrixXd& centroids);

/// Mean silhouette: (b - a) / max(a, b) per instance, 0 for members of
/// singleton clusters.
double silhouette(const DataView& view, const HardAssignment& labels);

/// Adjusted Rand index between a clustering and ground-truth classes.
double ari(const HardAssignment& pred, const Eigen::VectorXi& truth);

/// Signed improvement, oriented so positive always means better.
double gain(double before, double after, IndexKind kind);

/// Score(M_i) = sum_j G(M_i, D_j) / max_i G(M_i, D_j). Dataset columns whose
/// best gain is <= 0 are skipped (the ratio is undefined there).
Eigen::VectorXd score(const Eigen::MatrixXd& gains);

/// Mean and 1.96 * sd / sqrt(n) halfwidth (sample sd, normal approximation).
std::pair<double, double> ci95(const std::vector<double>& samples);

/// Convenience: all indices for a model state on its view.
QualityReport evaluate(const DataView& view, const HardAssignment& labels,
                       const Eigen::MatrixXd& centroids);

} // namespace coot

#endif
