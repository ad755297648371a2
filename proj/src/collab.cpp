#include "coot/collab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace coot {

const char* to_string(AlphaMode mode) {
    return mode == AlphaMode::Constant ? "constant" : "diversity";
}

LocalFitOptions engine_fit_defaults() {
    LocalFitOptions opts;
    opts.sinkhorn.tol = 1e-7;
    opts.sinkhorn.max_iter = 100000;
    return opts;
}

CentroidSnapshot snapshot_of(const CollaboratorState& state) {
    return CentroidSnapshot{state.id, state.model.centroids, state.view.origin.feature_ids};
}

CentroidPlanResult centroid_plan(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double lambda,
                                 const SinkhornOptions& opts) {
    if (a.cols() != b.cols()) {
        throw Error(ErrorKind::Config, "centroid_plan: centroid sets live in different spaces (" +
                                           std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) +
                                           " features)");
    }
    CentroidPlanResult out;
    const CostMatrix C = cost_matrix(a, b);
    out.plan = sinkhorn(C, uniform_measure(a.rows()), uniform_measure(b.rows()), lambda, opts);
    out.distance = regularized_cost(out.plan, C);
    return out;
}

CentroidPlanResult centroid_plan(const LocalModel& a, const LocalModel& b, double lambda,
                                 const SinkhornOptions& opts) {
    return centroid_plan(a.centroids, b.centroids, lambda, opts);
}

int select_median(const std::vector<std::pair<int, double>>& distances,
                  const std::set<int>& excluded) {
    std::vector<std::pair<int, double>> remaining;
    for (const auto& cand : distances) {
        if (!excluded.count(cand.first)) remaining.push_back(cand);
    }
    if (remaining.empty()) {
        throw Error(ErrorKind::Config, "select_median: no candidates left");
    }
    std::sort(remaining.begin(), remaining.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    return remaining[(remaining.size() - 1) / 2].first;
}

Eigen::MatrixXd collaborative_update(const Eigen::MatrixXd& local, const Eigen::MatrixXd& distant,
                                     const TransportPlan& plan, double alpha) {
    if (plan.coupling.rows() != local.rows() || plan.coupling.cols() != distant.rows()) {
        throw Error(ErrorKind::Config, "collaborative_update: plan shape does not match centroid sets");
    }
    if (local.cols() != distant.cols()) {
        throw Error(ErrorKind::Config, "collaborative_update: centroid dimension mismatch");
    }
    if (alpha < 0.0 || alpha > 1.0) {
        throw Error(ErrorKind::Config, "collaborative_update: alpha out of [0,1]");
    }
    Eigen::MatrixXd projected = plan.coupling * distant;
    const Eigen::VectorXd row_mass = plan.coupling.rowwise().sum();
    for (Eigen::Index j = 0; j < projected.rows(); ++j) {
        if (row_mass(j) > 0.0) projected.row(j) /= row_mass(j);
    }
    return (1.0 - alpha) * local + alpha * projected;
}

SharedColumns shared_feature_columns(const std::vector<int>& local_ids,
                                     const std::vector<int>& distant_ids) {
    SharedColumns out;
    for (size_t i = 0; i < local_ids.size(); ++i) {
        for (size_t j = 0; j < distant_ids.size(); ++j) {
            if (local_ids[i] == distant_ids[j]) {
                out.local_cols.push_back(static_cast<int>(i));
                out.distant_cols.push_back(static_cast<int>(j));
                break;
            }
        }
    }
    return out;
}

namespace {

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<int>& cols) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (size_t j = 0; j < cols.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
    }
    return out;
}

double gated_db(const CollaboratorState& state, const Eigen::MatrixXd& centroids) {
    const HardAssignment labels = assign_nearest(state.view, centroids);
    return davies_bouldin(state.view, labels, centroids);
}

} // namespace

QualityReport state_quality(const CollaboratorState& state) {
    const HardAssignment labels = assign_nearest(state.view, state.model.centroids);
    return evaluate(state.view, labels, state.model.centroids);
}

TryOutcome try_partner(const CollaboratorState& state, const CentroidSnapshot& partner,
                       const TransportPlan& plan, const SharedColumns& shared, double alpha,
                       const CollabConfig& config) {
    TryOutcome out{state, false, 0.0, 0.0};

    const Eigen::MatrixXd local_shared = select_columns(state.model.centroids, shared.local_cols);
    const Eigen::MatrixXd distant_shared = select_columns(partner.centroids, shared.distant_cols);
    const Eigen::MatrixXd proposal_shared = collaborative_update(local_shared, distant_shared, plan, alpha);

    // Information flows only through the shared features; the rest of the
    // local centroid coordinates stay put.
    Eigen::MatrixXd proposal = state.model.centroids;
    for (size_t j = 0; j < shared.local_cols.size(); ++j) {
        proposal.col(shared.local_cols[j]) = proposal_shared.col(static_cast<Eigen::Index>(j));
    }

    try {
        out.db_before = gated_db(state, state.model.centroids);
        out.db_after = gated_db(state, proposal);
    } catch (const Error&) {
        // Degenerate partition on either side: rejection, not a failure.
        out.db_before = out.db_after = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    if (!(out.db_after < out.db_before)) return out;

    out.accepted = true;
    out.state.model.centroids = proposal;
    out.state.model.centroid_measure = uniform_measure(proposal.rows());
    const CostMatrix C = cost_matrix(state.view.matrix.values, proposal);
    out.state.model.plan = sinkhorn(C, Measure{state.view.weights}, uniform_measure(proposal.rows()),
                                    config.lambda, config.local_fit.sinkhorn);
    double ent = 0.0;
    for (Eigen::Index i = 0; i < out.state.model.plan.coupling.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.state.model.plan.coupling.cols(); ++j) {
            const double g = out.state.model.plan.coupling(i, j);
            if (g > 0.0) ent -= g * std::log(g);
        }
    }
    out.state.model.objective = regularized_cost(out.state.model.plan, C) - ent / config.lambda;
    return out;
}

TryOutcome try_partner(const CollaboratorState& state, const CollaboratorState& partner,
                       const TransportPlan& plan, double alpha, const CollabConfig& config) {
    const SharedColumns shared =
        shared_feature_columns(state.view.origin.feature_ids, partner.view.origin.feature_ids);
    return try_partner(state, snapshot_of(partner), plan, shared, alpha, config);
}

Eigen::MatrixXd alpha_from_distances(const Eigen::MatrixXd& dist, double alpha_min, double alpha_max) {
    const Eigen::Index r = dist.rows();
    Eigen::MatrixXd alpha = Eigen::MatrixXd::Zero(r, r);
    for (Eigen::Index v = 0; v < r; ++v) {
        double row_max = 0.0;
        for (Eigen::Index w = 0; w < r; ++w) {
            if (w != v) row_max = std::max(row_max, dist(v, w));
        }
        for (Eigen::Index w = 0; w < r; ++w) {
            if (w == v) continue;
            alpha(v, w) = row_max > 0.0 ? alpha_min + (alpha_max - alpha_min) * dist(v, w) / row_max
                                        : alpha_min;
        }
    }
    return alpha;
}

Eigen::MatrixXd diversity_alpha(const std::vector<LocalModel>& models, double lambda,
                                double alpha_min, double alpha_max) {
    const size_t r = models.size();
    if (r < 2) throw Error(ErrorKind::Config, "diversity_alpha: need at least 2 models");
    Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r));
    for (size_t v = 0; v < r; ++v) {
        for (size_t w = v + 1; w < r; ++w) {
            const double d = centroid_plan(models[v], models[w], lambda).distance;
            dist(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w)) = d;
            dist(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(v)) = d;
        }
    }
    return alpha_from_distances(dist, alpha_min, alpha_max);
}

std::pair<CollaboratorState, RoundRecord> run_turn(const CollaboratorState& state,
                                                   const std::vector<CentroidSnapshot>& snapshots,
                                                   const CollabConfig& config, int round) {
    RoundRecord record;
    record.round = round;
    record.db_before = record.db_after = std::numeric_limits<double>::quiet_NaN();

    struct Candidate {
        const CentroidSnapshot* snap;
        SharedColumns shared;
        TransportPlan plan;
        double distance;
    };
    std::vector<Candidate> candidates;
    std::vector<std::pair<int, double>> distances;
    for (const auto& snap : snapshots) {
        if (snap.id == state.id) continue;
        SharedColumns shared = shared_feature_columns(state.view.origin.feature_ids, snap.feature_ids);
        if (shared.local_cols.empty()) continue; // no common features: skip the pair
        const Eigen::MatrixXd local_shared = select_columns(state.model.centroids, shared.local_cols);
        const Eigen::MatrixXd distant_shared = select_columns(snap.centroids, shared.distant_cols);
        CentroidPlanResult pr =
            centroid_plan(local_shared, distant_shared, config.lambda, config.local_fit.sinkhorn);
        distances.emplace_back(snap.id, pr.distance);
        candidates.push_back(Candidate{&snap, std::move(shared), std::move(pr.plan), pr.distance});
    }

    CollaboratorState current = state;
    if (candidates.empty()) {
        current.history.push_back(record);
        return {std::move(current), record};
    }

    int max_id = state.id;
    for (const auto& snap : snapshots) max_id = std::max(max_id, snap.id);
    Eigen::VectorXd alpha_row = Eigen::VectorXd::Constant(max_id + 1, config.alpha_const);
    if (config.alpha_mode == AlphaMode::Diversity) {
        double row_max = 0.0;
        for (const auto& [id, d] : distances) row_max = std::max(row_max, d);
        for (Eigen::Index w = 0; w < alpha_row.size(); ++w) alpha_row(w) = config.alpha_min;
        if (row_max > 0.0) {
            for (const auto& [id, d] : distances) {
                alpha_row(id) = config.alpha_min + (config.alpha_max - config.alpha_min) * d / row_max;
            }
        }
    }
    current.alpha_row = alpha_row;

    std::set<int> excluded;
    while (excluded.size() < candidates.size()) {
        const int chosen = select_median(distances, excluded);
        record.candidates_tried.push_back(chosen);
        const auto it = std::find_if(candidates.begin(), candidates.end(),
                                     [chosen](const Candidate& c) { return c.snap->id == chosen; });
        TryOutcome outcome =
            try_partner(current, *it->snap, it->plan, it->shared, alpha_row(chosen), config);
        if (outcome.accepted) {
            record.partner = chosen;
            record.centroid_distance = it->distance;
            record.db_before = outcome.db_before;
            record.db_after = outcome.db_after;
            record.accepted = true;
            current = std::move(outcome.state);
            break;
        }
        if (!record.partner && !std::isnan(outcome.db_before)) {
            record.db_before = record.db_after = outcome.db_before; // unchanged turn
        }
        excluded.insert(chosen);
    }

    current.history.push_back(record);
    return {std::move(current), record};
}

std::pair<std::vector<CollaboratorState>, CollabReport> run_co_ot(const std::vector<DataView>& views,
                                                                  const CollabConfig& config) {
    const int r = static_cast<int>(views.size());
    if (r < 2) throw Error(ErrorKind::Config, "run_co_ot: need at least 2 views");
    if (!config.k_per_view.empty() && static_cast<int>(config.k_per_view.size()) != r) {
        throw Error(ErrorKind::Config, "run_co_ot: k_per_view size does not match view count");
    }

    std::vector<CollaboratorState> states;
    states.reserve(static_cast<size_t>(r));
    CollabReport report;
    report.collaborators.resize(static_cast<size_t>(r));

    for (int v = 0; v < r; ++v) {
        const int k = config.k_per_view.empty() ? config.k : config.k_per_view[static_cast<size_t>(v)];
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(v)));
        CollaboratorState state;
        state.id = v;
        state.view = views[static_cast<size_t>(v)];
        state.model = fit_local_model(config.local_algo, state.view, k, config.lambda, rng,
                                      config.local_fit);
        report.collaborators[static_cast<size_t>(v)].id = v;
        report.collaborators[static_cast<size_t>(v)].before = state_quality(state);
        states.push_back(std::move(state));
    }

    for (int round = 1; round <= config.max_rounds; ++round) {
        std::vector<CentroidSnapshot> snapshots;
        snapshots.reserve(static_cast<size_t>(r));
        for (const auto& s : states) snapshots.push_back(snapshot_of(s));

        bool any_accept = false;
        for (int v = 0; v < r; ++v) {
            auto [next, record] = run_turn(states[static_cast<size_t>(v)], snapshots, config, round);
            states[static_cast<size_t>(v)] = std::move(next);
            report.collaborators[static_cast<size_t>(v)].rounds.push_back(record);
            any_accept = any_accept || record.accepted;
        }
        report.rounds_run = round;
        if (!any_accept) break;
    }

    for (int v = 0; v < r; ++v) {
        report.collaborators[static_cast<size_t>(v)].after = state_quality(states[static_cast<size_t>(v)]);
    }
    return {std::move(states), std::move(report)};
}

std::string CollabReport::to_text() const {
    std::ostringstream out;
    out << "co-ot report rounds " << rounds_run << " collaborators " << collaborators.size() << "\n";
    for (const auto& collab : collaborators) {
        out << "collab " << collab.id;
        out << " db " << format_double(collab.before.db) << " " << format_double(collab.after.db);
        out << " silhouette " << format_double(collab.before.silhouette) << " "
            << format_double(collab.after.silhouette);
        out << " ari ";
        if (collab.before.ari) {
            out << format_double(*collab.before.ari) << " " << format_double(*collab.after.ari);
        } else {
            out << "- -";
        }
        out << "\n";
        for (const auto& rec : collab.rounds) {
            out << "round " << rec.round << " partner ";
            if (rec.partner) {
                out << *rec.partner;
            } else {
                out << "-";
            }
            out << " dist " << format_double(rec.centroid_distance) << " db " << format_double(rec.db_before)
                << " " << format_double(rec.db_after) << " accepted " << (rec.accepted ? 1 : 0)
                << " tried";
            for (int t : rec.candidates_tried) out << " " << t;
            out << "\n";
        }
    }
    return out.str();
}

} // namespace coot
