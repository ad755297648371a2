#include "coot/quality.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace coot {

const char* to_string(IndexKind kind) {
    switch (kind) {
    case IndexKind::Db: return "db";
    case IndexKind::Silhouette: return "silhouette";
    case IndexKind::Ari: return "ari";
    }
    return "db";
}

double davies_bouldin(const DataView& view, const HardAssignment& labels,
                      const Eigen::MatrixXd& centroids) {
    const Eigen::Index n = view.size();
    if (static_cast<Eigen::Index>(labels.labels.size()) != n) {
        throw Error(ErrorKind::Config, "davies_bouldin: label count mismatch");
    }
    const int k = static_cast<int>(centroids.rows());

    // Mean Euclidean distance of members to their centroid; empty clusters
    // drop out of K (hardening a soft plan can vacate one).
    std::vector<double> scatter(static_cast<size_t>(k), 0.0);
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int c = labels.labels[static_cast<size_t>(i)];
        if (c < 0 || c >= k) throw Error(ErrorKind::Config, "davies_bouldin: label out of range");
        scatter[static_cast<size_t>(c)] += (view.matrix.values.row(i) - centroids.row(c)).norm();
        counts[static_cast<size_t>(c)] += 1;
    }
    std::vector<int> live;
    for (int c = 0; c < k; ++c) {
        if (counts[static_cast<size_t>(c)] > 0) {
            scatter[static_cast<size_t>(c)] /= counts[static_cast<size_t>(c)];
            live.push_back(c);
        }
    }
    if (live.size() < 2) {
        throw Error(ErrorKind::Numeric, "davies_bouldin: fewer than 2 non-empty clusters");
    }

    double total = 0.0;
    for (size_t a = 0; a < live.size(); ++a) {
        double worst = 0.0;
        for (size_t b = 0; b < live.size(); ++b) {
            if (a == b) continue;
            const double sep = (centroids.row(live[a]) - centroids.row(live[b])).norm();
            if (sep == 0.0) {
                throw Error(ErrorKind::Numeric, "davies_bouldin: clusters " + std::to_string(live[a]) +
                                                    " and " + std::to_string(live[b]) +
                                                    " have coincident centroids");
            }
            worst = std::max(worst, (scatter[static_cast<size_t>(live[a])] +
                                     scatter[static_cast<size_t>(live[b])]) /
                                        sep);
        }
        total += worst;
    }
    return total / static_cast<double>(live.size());
}

double silhouette(const DataView& view, const HardAssignment& labels) {
    const Eigen::Index n = view.size();
    if (static_cast<Eigen::Index>(labels.labels.size()) != n) {
        throw Error(ErrorKind::Config, "silhouette: label count mismatch");
    }
    const int k = 1 + *std::max_element(labels.labels.begin(), labels.labels.end());
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (int c : labels.labels) counts[static_cast<size_t>(c)] += 1;
    if (std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) < 2) {
        throw Error(ErrorKind::Numeric, "silhouette: fewer than 2 non-empty clusters");
    }

    double total = 0.0;
    std::vector<double> mean_dist(static_cast<size_t>(k));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::fill(mean_dist.begin(), mean_dist.end(), 0.0);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            mean_dist[static_cast<size_t>(labels.labels[static_cast<size_t>(j)])] +=
                (view.matrix.values.row(i) - view.matrix.values.row(j)).norm();
        }
        const int own = labels.labels[static_cast<size_t>(i)];
        if (counts[static_cast<size_t>(own)] <= 1) continue; // singleton: s(i) = 0
        const double a = mean_dist[static_cast<size_t>(own)] / (counts[static_cast<size_t>(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == own || counts[static_cast<size_t>(c)] == 0) continue;
            b = std::min(b, mean_dist[static_cast<size_t>(c)] / counts[static_cast<size_t>(c)]);
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

namespace {

double choose2(double x) { return x * (x - 1.0) / 2.0; }

} // namespace

double ari(const HardAssignment& pred, const Eigen::VectorXi& truth) {
    const Eigen::Index n = truth.size();
    if (static_cast<Eigen::Index>(pred.labels.size()) != n) {
        throw Error(ErrorKind::Config, "ari: length mismatch (" + std::to_string(pred.labels.size()) +
                                           " vs " + std::to_string(n) + ")");
    }
    if (n < 2) throw Error(ErrorKind::Config, "ari: need at least 2 instances");

    std::map<std::pair<int, int>, double> contingency;
    std::map<int, double> row_sum, col_sum;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int a = pred.labels[static_cast<size_t>(i)];
        const int b = truth(i);
        contingency[{a, b}] += 1.0;
        row_sum[a] += 1.0;
        col_sum[b] += 1.0;
    }

    double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, count] : contingency) sum_ij += choose2(count);
    for (const auto& [key, count] : row_sum) sum_a += choose2(count);
    for (const auto& [key, count] : col_sum) sum_b += choose2(count);

    const double expected = sum_a * sum_b / choose2(static_cast<double>(n));
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0; // both partitions trivial
    return (sum_ij - expected) / (max_index - expected);
}

double gain(double before, double after, IndexKind kind) {
    return kind == IndexKind::Db ? before - after : after - before;
}

Eigen::VectorXd score(const Eigen::MatrixXd& gains) {
    if (gains.size() == 0) {
        throw Error(ErrorKind::Config, "score: empty gain matrix");
    }
    Eigen::VectorXd scores = Eigen::VectorXd::Zero(gains.rows());
    for (Eigen::Index j = 0; j < gains.cols(); ++j) {
        const double best = gains.col(j).maxCoeff();
        if (best <= 0.0) continue; // ratio undefined, skip the column
        scores += gains.col(j) / best;
    }
    return scores;
}

std::pair<double, double> ci95(const std::vector<double>& samples) {
    const size_t n = samples.size();
    if (n < 2) throw Error(ErrorKind::Config, "ci95: need at least 2 samples");
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= static_cast<double>(n - 1);
    const double halfwidth = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(n));
    return {mean, halfwidth};
}

QualityReport evaluate(const DataView& view, const HardAssignment& labels,
                       const Eigen::MatrixXd& centroids) {
    QualityReport report;
    report.k = static_cast<int>(centroids.rows());
    report.db = davies_bouldin(view, labels, centroids);
    report.silhouette = silhouette(view, labels);
    if (view.matrix.labels) {
        report.ari = ari(labels, *view.matrix.labels);
    }
    return report;
}

} // namespace coot
