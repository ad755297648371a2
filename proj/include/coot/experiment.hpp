#ifndef COOT_EXPERIMENT_HPP
#define COOT_EXPERIMENT_HPP

#include <array>
#include <string>
#include <vector>

#include "coot/collab.hpp"

namespace coot {

struct ExperimentConfig {
    std::string dataset_path;
    std::string dataset_id; // defaults to the file stem
    std::optional<std::string> label_column;
    bool has_header = true;
    SplitKind split = SplitKind::Horizontal;
    int r = 10;
    std::optional<int> dims; // horizontal only; default ceil(d/2)
    std::optional<int> k;    // default: class count
    int repeats = 20;
    std::uint64_t seed = 0;
    std::string output_dir;
    int threads = 0; // 0: hardware concurrency
    CollabConfig collab;
};

struct RepeatResult {
    std::vector<QualityReport> before; // per collaborator
    std::vector<QualityReport> after;
    CollabReport report;
};

struct IndexAggregate {
    IndexKind index = IndexKind::Db;
    double mean_before = 0.0;
    double ci_before = 0.0;
    double mean_after = 0.0;
    double ci_after = 0.0;
};

struct RunArtifacts {
    ExperimentConfig config; // resolved: k and dims filled in
    int n = 0;
    int d = 0;
    int classes = 0;
    bool has_ari = false;
    std::vector<RepeatResult> repeats;

    /// Dataset-level aggregate: per repeat, collaborators are averaged; the
    /// CI95 is over the repeat values.
    std::vector<IndexAggregate> aggregates() const;

    /// Collaborator-level means across repeats for one index.
    std::vector<std::array<double, 2>> collaborator_means(IndexKind index) const;

    std::vector<IndexKind> indices() const;
};

/// The paper's protocol: repeat `repeats` times (reseeded split + run),
/// recording quality before and after collaboration. Deterministic given
/// the seed; repeats run in parallel on independent derived rngs.
RunArtifacts run_experiment(const ExperimentConfig& cfg);

/// Writes per_collaborator.csv, aggregate.csv, runs.csv (box-plot rows),
/// reports.txt (canonical collaboration reports) and manifest.txt into
/// `outdir`. Output is byte-identical for identical seeds and configs.
void emit_tables(const RunArtifacts& artifacts, const std::string& outdir);

/// Flat key=value configuration file (one pair per line, '#' comments).
ExperimentConfig load_experiment_config(const std::string& path);
void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value);

} // namespace coot

#endif
