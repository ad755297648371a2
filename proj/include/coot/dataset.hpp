#ifndef COOT_DATASET_HPP
#define COOT_DATASET_HPP

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "coot/common.hpp"

namespace coot {

/// Dense dataset: one row per instance. Labels, when present, are kept
/// only for external evaluation (ARI) and never feed the clustering path.
struct DataMatrix {
    Eigen::MatrixXd values;                 // n x d
    std::vector<std::string> feature_names; // size d
    std::optional<Eigen::VectorXi> labels;  // size n, nonnegative

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

enum class SplitKind { None, Vertical, Horizontal };

const char* to_string(SplitKind kind);

struct ViewOrigin {
    std::string dataset_id;
    SplitKind split = SplitKind::None;
    int collaborator = 0;
    // Indices into the source matrix. Vertical views record the instance
    // subset; horizontal views record the sampled feature subset.
    std::vector<int> instance_ids;
    std::vector<int> feature_ids;
};

/// A collaborator's private data together with its uniform empirical measure.
struct DataView {
    DataMatrix matrix;
    Eigen::VectorXd weights; // uniform 1/n, sums to 1
    ViewOrigin origin;

    Eigen::Index size() const { return matrix.rows(); }
    Eigen::Index dim() const { return matrix.cols(); }
};

/// Wraps a full matrix as a single un-split view.
DataView as_view(const DataMatrix& m, const std::string& dataset_id);

/// Reads a comma-separated file of decimal reals. With a header row the
/// label column is selected by name, otherwise by 0-based index given as
/// a decimal string. Parse failures report the 1-based data row.
DataMatrix load_csv(const std::string& path, bool has_header,
                    const std::optional<std::string>& label_column = std::nullopt);

/// Z-scores every column (sample standard deviation, n-1). Constant
/// columns map to all zeros.
DataMatrix standardize(const DataMatrix& m);

/// Random partition of the instances into r views that share all features;
/// sizes differ by at most one.
std::vector<DataView> split_vertical(const DataMatrix& m, int r, Rng& rng,
                                     const std::string& dataset_id = "data");

/// r views over all instances, each with `dims` distinct features sampled
/// uniformly; the same feature may recur across views.
std::vector<DataView> split_horizontal(const DataMatrix& m, int r, int dims, Rng& rng,
                                       const std::string& dataset_id = "data");

} // namespace coot

#endif
