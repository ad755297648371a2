#ifndef COOT_COLLAB_HPP
#define COOT_COLLAB_HPP

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coot/local_models.hpp"
#include "coot/quality.hpp"

namespace coot {

enum class AlphaMode { Constant, Diversity };

const char* to_string(AlphaMode mode);

/// Engine-side fit options: plan solves inside the collaboration loop run at
/// 1e-7 with a deep iteration budget. That is far below anything the centroid
/// or DB computations can resolve, and clustered data produces near-degenerate
/// transport instances whose last two digits of feasibility cost more
/// iterations than the rest of the fit combined.
LocalFitOptions engine_fit_defaults();

struct CollabConfig {
    double lambda = 10.0;
    AlphaMode alpha_mode = AlphaMode::Constant;
    double alpha_const = 0.5;
    double alpha_min = 0.1; // diversity mode range
    double alpha_max = 0.9;
    int max_rounds = 20;
    std::string local_algo = "sinkhorn_means";
    std::uint64_t seed = 0;
    int k = 2;
    std::vector<int> k_per_view; // empty: use k everywhere
    LocalFitOptions local_fit = engine_fit_defaults();
    double barrier_timeout_s = 30.0; // federation only
};

struct RoundRecord {
    int round = 0;
    std::optional<int> partner;
    double centroid_distance = 0.0;
    double db_before = 0.0;
    double db_after = 0.0;
    bool accepted = false;
    std::vector<int> candidates_tried;
};

struct CollaboratorState {
    int id = 0;
    DataView view;
    LocalModel model;
    Eigen::VectorXd alpha_row; // confidence toward each peer, self entry zero
    std::vector<RoundRecord> history;
};

/// What one collaborator reveals to the others: centroids and the feature
/// ids they live on. Exactly the payload of a CentroidAnnounce message.
struct CentroidSnapshot {
    int id = 0;
    Eigen::MatrixXd centroids;
    std::vector<int> feature_ids;
};

CentroidSnapshot snapshot_of(const CollaboratorState& state);

struct CollaboratorReport {
    int id = 0;
    QualityReport before;
    QualityReport after;
    std::vector<RoundRecord> rounds;
};

struct CollabReport {
    int rounds_run = 0;
    std::vector<CollaboratorReport> collaborators;

    /// Canonical text form: fixed field order, shortest round-trip decimals.
    /// Byte-comparable across transports and runs.
    std::string to_text() const;
};

/// Sinkhorn plan between the uniform measures on two centroid sets (which
/// may have different sizes); distance is the transport cost <plan, C>.
struct CentroidPlanResult {
    TransportPlan plan;
    double distance = 0.0;
};

CentroidPlanResult centroid_plan(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double lambda,
                                 const SinkhornOptions& opts = {});
CentroidPlanResult centroid_plan(const LocalModel& a, const LocalModel& b, double lambda,
                                 const SinkhornOptions& opts = {});

/// Lower-median candidate by distance: sorted ascending, index
/// floor((m-1)/2); distance ties break toward the lower id.
int select_median(const std::vector<std::pair<int, double>>& distances,
                  const std::set<int>& excluded);

/// Proposal from one exchange: per-centroid barycentric projection of the
/// distant centroids under the plan, blended as (1-alpha) local + alpha proj.
/// Pure; acceptance is decided elsewhere.
Eigen::MatrixXd collaborative_update(const Eigen::MatrixXd& local, const Eigen::MatrixXd& distant,
                                     const TransportPlan& plan, double alpha);

/// Columns of each side's centroid matrix that live on common feature ids.
/// Empty result means the pair cannot collaborate.
struct SharedColumns {
    std::vector<int> local_cols;
    std::vector<int> distant_cols;
};

SharedColumns shared_feature_columns(const std::vector<int>& local_ids,
                                     const std::vector<int>& distant_ids);

struct TryOutcome {
    CollaboratorState state;
    bool accepted = false;
    double db_before = 0.0;
    double db_after = 0.0;
};

/// One gated exchange: propose, re-harden against the proposal, accept only
/// if Davies-Bouldin strictly improves (refitting the plan on acceptance).
/// A degenerate partition counts as a rejection, never an error.
TryOutcome try_partner(const CollaboratorState& state, const CentroidSnapshot& partner,
                       const TransportPlan& plan, const SharedColumns& shared, double alpha,
                       const CollabConfig& config);

/// Convenience overload matching the pairwise-state form (vertical case:
/// full shared feature set).
TryOutcome try_partner(const CollaboratorState& state, const CollaboratorState& partner,
                       const TransportPlan& plan, double alpha, const CollabConfig& config);

/// alpha[v][w] = alpha_min + (alpha_max - alpha_min) * dist(v,w) / max_w dist(v,w),
/// diagonal zero; all-zero rows fall back to alpha_min.
Eigen::MatrixXd alpha_from_distances(const Eigen::MatrixXd& dist, double alpha_min, double alpha_max);

/// Pairwise centroid Wasserstein distances normalized into confidence
/// coefficients (models must share one space).
Eigen::MatrixXd diversity_alpha(const std::vector<LocalModel>& models, double lambda,
                                double alpha_min = 0.1, double alpha_max = 0.9);

/// One collaborator's turn against a fixed round-start snapshot: median
/// partner selection with exclude-and-retry, at most one acceptance.
/// Pure given its inputs; shared by the in-process and federated runners.
std::pair<CollaboratorState, RoundRecord> run_turn(const CollaboratorState& state,
                                                   const std::vector<CentroidSnapshot>& snapshots,
                                                   const CollabConfig& config, int round);

/// Nearest-centroid quality of a state's model on its own view. The engine
/// gates and reports with this labeling so the DB chain across rounds is
/// exact (argmax-of-plan hardening can disagree after a refit).
QualityReport state_quality(const CollaboratorState& state);

/// Full Co-OT run: local fits, then bulk-synchronous collaboration rounds
/// until a round passes with no acceptance anywhere or max_rounds.
std::pair<std::vector<CollaboratorState>, CollabReport> run_co_ot(const std::vector<DataView>& views,
                                                                  const CollabConfig& config);

} // namespace coot

#endif
