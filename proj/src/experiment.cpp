#include "coot/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

namespace coot {

std::vector<IndexKind> RunArtifacts::indices() const {
    std::vector<IndexKind> out{IndexKind::Db, IndexKind::Silhouette};
    if (has_ari) out.push_back(IndexKind::Ari);
    return out;
}

namespace {

double report_value(const QualityReport& report, IndexKind index) {
    switch (index) {
    case IndexKind::Db: return report.db;
    case IndexKind::Silhouette: return report.silhouette;
    case IndexKind::Ari: return report.ari.value_or(std::numeric_limits<double>::quiet_NaN());
    }
    return 0.0;
}

} // namespace

std::vector<IndexAggregate> RunArtifacts::aggregates() const {
    std::vector<IndexAggregate> out;
    for (IndexKind index : indices()) {
        IndexAggregate agg;
        agg.index = index;
        std::vector<double> before_runs, after_runs;
        for (const auto& rep : repeats) {
            double b = 0.0, a = 0.0;
            for (size_t v = 0; v < rep.before.size(); ++v) {
                b += report_value(rep.before[v], index);
                a += report_value(rep.after[v], index);
            }
            before_runs.push_back(b / static_cast<double>(rep.before.size()));
            after_runs.push_back(a / static_cast<double>(rep.after.size()));
        }
        if (before_runs.size() >= 2) {
            std::tie(agg.mean_before, agg.ci_before) = ci95(before_runs);
            std::tie(agg.mean_after, agg.ci_after) = ci95(after_runs);
        } else {
            agg.mean_before = before_runs.at(0);
            agg.mean_after = after_runs.at(0);
        }
        out.push_back(agg);
    }
    return out;
}

std::vector<std::array<double, 2>> RunArtifacts::collaborator_means(IndexKind index) const {
    const size_t r = repeats.at(0).before.size();
    std::vector<std::array<double, 2>> out(r, {0.0, 0.0});
    for (const auto& rep : repeats) {
        for (size_t v = 0; v < r; ++v) {
            out[v][0] += report_value(rep.before[v], index);
            out[v][1] += report_value(rep.after[v], index);
        }
    }
    for (auto& pair : out) {
        pair[0] /= static_cast<double>(repeats.size());
        pair[1] /= static_cast<double>(repeats.size());
    }
    return out;
}

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
    if (cfg.repeats < 1) throw Error(ErrorKind::Config, "repeats must be >= 1");
    if (cfg.r < 2) throw Error(ErrorKind::Config, "need at least 2 collaborators");

    RunArtifacts artifacts;
    artifacts.config = cfg;
    if (artifacts.config.dataset_id.empty()) {
        artifacts.config.dataset_id = std::filesystem::path(cfg.dataset_path).stem().string();
    }

    const DataMatrix raw = load_csv(cfg.dataset_path, cfg.has_header, cfg.label_column);
    const DataMatrix data = standardize(raw);
    artifacts.n = static_cast<int>(data.rows());
    artifacts.d = static_cast<int>(data.cols());
    if (data.labels) {
        std::set<int> distinct(data.labels->begin(), data.labels->end());
        artifacts.classes = static_cast<int>(distinct.size());
    }

    if (!artifacts.config.k) {
        if (artifacts.classes < 2) {
            throw Error(ErrorKind::Config, "k not given and no class labels to infer it from");
        }
        artifacts.config.k = artifacts.classes;
    }
    if (cfg.split == SplitKind::Horizontal && !artifacts.config.dims) {
        artifacts.config.dims = static_cast<int>((data.cols() + 1) / 2);
    }
    artifacts.config.collab.k = *artifacts.config.k;
    artifacts.has_ari = data.labels.has_value();

    auto one_repeat = [&](int rep) {
        try {
            Rng split_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(rep)));
            std::vector<DataView> views;
            if (cfg.split == SplitKind::Vertical) {
                views = split_vertical(data, cfg.r, split_rng, artifacts.config.dataset_id);
            } else {
                views = split_horizontal(data, cfg.r, *artifacts.config.dims, split_rng,
                                         artifacts.config.dataset_id);
            }
            CollabConfig collab = artifacts.config.collab;
            // Separate stream from the split so r changes do not correlate fits.
            collab.seed = derive_seed(cfg.seed, 0x10000003ULL + static_cast<std::uint64_t>(rep));
            auto [states, report] = run_co_ot(views, collab);

            RepeatResult result;
            result.report = std::move(report);
            for (const auto& collab_report : result.report.collaborators) {
                result.before.push_back(collab_report.before);
                result.after.push_back(collab_report.after);
            }
            return result;
        } catch (const Error& e) {
            throw Error(e.kind(), "repeat " + std::to_string(rep) + ": " + e.what());
        }
    };

    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    int workers = cfg.threads > 0 ? cfg.threads : std::max(1, hw);
    workers = std::min(workers, cfg.repeats);

    artifacts.repeats.resize(static_cast<size_t>(cfg.repeats));
    if (workers <= 1) {
        for (int rep = 0; rep < cfg.repeats; ++rep) {
            artifacts.repeats[static_cast<size_t>(rep)] = one_repeat(rep);
        }
    } else {
        std::vector<std::future<RepeatResult>> futures;
        futures.reserve(static_cast<size_t>(cfg.repeats));
        // Bounded fan-out: launch in waves of `workers`.
        for (int base = 0; base < cfg.repeats; base += workers) {
            const int end = std::min(cfg.repeats, base + workers);
            for (int rep = base; rep < end; ++rep) {
                futures.push_back(std::async(std::launch::async, one_repeat, rep));
            }
            for (int rep = base; rep < end; ++rep) {
                artifacts.repeats[static_cast<size_t>(rep)] = futures[static_cast<size_t>(rep)].get();
            }
        }
    }
    return artifacts;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    return out;
}

} // namespace

void emit_tables(const RunArtifacts& artifacts, const std::string& outdir) {
    if (artifacts.repeats.empty() || artifacts.repeats.front().before.empty()) {
        throw Error(ErrorKind::Config, "emit_tables: no results to write");
    }
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    const std::filesystem::path dir(outdir);

    {
        auto out = open_out(dir / "per_collaborator.csv");
        out << "collaborator,index,before,after,gain\n";
        for (IndexKind index : artifacts.indices()) {
            const auto means = artifacts.collaborator_means(index);
            for (size_t v = 0; v < means.size(); ++v) {
                out << v << "," << to_string(index) << "," << format_double(means[v][0]) << ","
                    << format_double(means[v][1]) << ","
                    << format_double(gain(means[v][0], means[v][1], index)) << "\n";
            }
        }
    }
    {
        auto out = open_out(dir / "aggregate.csv");
        out << "dataset,index,mean_before,ci_before,mean_after,ci_after\n";
        for (const auto& agg : artifacts.aggregates()) {
            out << artifacts.config.dataset_id << "," << to_string(agg.index) << ","
                << format_double(agg.mean_before) << "," << format_double(agg.ci_before) << ","
                << format_double(agg.mean_after) << "," << format_double(agg.ci_after) << "\n";
        }
    }
    {
        auto out = open_out(dir / "runs.csv");
        out << "repeat,index,phase,value\n";
        for (size_t rep = 0; rep < artifacts.repeats.size(); ++rep) {
            for (IndexKind index : artifacts.indices()) {
                const auto& result = artifacts.repeats[rep];
                double b = 0.0, a = 0.0;
                for (size_t v = 0; v < result.before.size(); ++v) {
                    b += report_value(result.before[v], index);
                    a += report_value(result.after[v], index);
                }
                b /= static_cast<double>(result.before.size());
                a /= static_cast<double>(result.after.size());
                out << rep << "," << to_string(index) << ",before," << format_double(b) << "\n";
                out << rep << "," << to_string(index) << ",after," << format_double(a) << "\n";
            }
        }
    }
    {
        auto out = open_out(dir / "reports.txt");
        for (size_t rep = 0; rep < artifacts.repeats.size(); ++rep) {
            out << "repeat " << rep << "\n" << artifacts.repeats[rep].report.to_text();
        }
    }
    {
        const auto& cfg = artifacts.config;
        auto out = open_out(dir / "manifest.txt");
        out << "format=coot-run-manifest/1\n";
        out << "dataset=" << cfg.dataset_path << "\n";
        out << "dataset_id=" << cfg.dataset_id << "\n";
        out << "n=" << artifacts.n << "\nd=" << artifacts.d << "\nclasses=" << artifacts.classes << "\n";
        if (cfg.label_column) out << "label_column=" << *cfg.label_column << "\n";
        out << "split=" << to_string(cfg.split) << "\n";
        out << "r=" << cfg.r << "\n";
        if (cfg.dims) out << "dims=" << *cfg.dims << "\n";
        out << "k=" << *cfg.k << "\n";
        out << "repeats=" << cfg.repeats << "\n";
        out << "seed=" << cfg.seed << "\n";
        out << "lambda=" << format_double(cfg.collab.lambda) << "\n";
        out << "alpha_mode=" << to_string(cfg.collab.alpha_mode) << "\n";
        out << "alpha=" << format_double(cfg.collab.alpha_const) << "\n";
        out << "alpha_min=" << format_double(cfg.collab.alpha_min) << "\n";
        out << "alpha_max=" << format_double(cfg.collab.alpha_max) << "\n";
        out << "max_rounds=" << cfg.collab.max_rounds << "\n";
        out << "local_algo=" << cfg.collab.local_algo << "\n";
        out << "sinkhorn_tol=" << format_double(cfg.collab.local_fit.sinkhorn.tol) << "\n";
        out << "sinkhorn_max_iter=" << cfg.collab.local_fit.sinkhorn.max_iter << "\n";
        out << "local_tol=" << format_double(cfg.collab.local_fit.tol) << "\n";
        out << "local_max_iter=" << cfg.collab.local_fit.max_iter << "\n";
    }
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open config '" + path + "'");
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos) {
                throw Error(ErrorKind::Config,
                            "config line " + std::to_string(lineno) + ": expected key=value");
            }
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    auto as_int = [&](const char* what) {
        try {
            return std::stoi(value);
        } catch (const std::exception&) {
            throw Error(ErrorKind::Config, std::string(what) + ": bad integer '" + value + "'");
        }
    };
    auto as_real = [&](const char* what) {
        try {
            return parse_double(value);
        } catch (const Error&) {
            throw Error(ErrorKind::Config, std::string(what) + ": bad number '" + value + "'");
        }
    };

    if (key == "dataset") {
        cfg.dataset_path = value;
    } else if (key == "dataset_id") {
        cfg.dataset_id = value;
    } else if (key == "label_column") {
        cfg.label_column = value;
    } else if (key == "has_header") {
        cfg.has_header = value == "1" || value == "true";
    } else if (key == "mode" || key == "split") {
        if (value == "vertical") {
            cfg.split = SplitKind::Vertical;
        } else if (value == "horizontal") {
            cfg.split = SplitKind::Horizontal;
        } else {
            throw Error(ErrorKind::Config, "split must be vertical or horizontal, got '" + value + "'");
        }
    } else if (key == "r") {
        cfg.r = as_int("r");
    } else if (key == "dims") {
        cfg.dims = as_int("dims");
    } else if (key == "k") {
        cfg.k = as_int("k");
    } else if (key == "repeats") {
        cfg.repeats = as_int("repeats");
    } else if (key == "seed") {
        try {
            cfg.seed = std::stoull(value);
        } catch (const std::exception&) {
            throw Error(ErrorKind::Config, "seed: bad integer '" + value + "'");
        }
    } else if (key == "outdir") {
        cfg.output_dir = value;
    } else if (key == "threads") {
        cfg.threads = as_int("threads");
    } else if (key == "lambda") {
        cfg.collab.lambda = as_real("lambda");
    } else if (key == "alpha_mode") {
        if (value == "constant") {
            cfg.collab.alpha_mode = AlphaMode::Constant;
        } else if (value == "diversity") {
            cfg.collab.alpha_mode = AlphaMode::Diversity;
        } else {
            throw Error(ErrorKind::Config, "alpha_mode must be constant or diversity");
        }
    } else if (key == "alpha") {
        cfg.collab.alpha_const = as_real("alpha");
    } else if (key == "alpha_min") {
        cfg.collab.alpha_min = as_real("alpha_min");
    } else if (key == "alpha_max") {
        cfg.collab.alpha_max = as_real("alpha_max");
    } else if (key == "max_rounds") {
        cfg.collab.max_rounds = as_int("max_rounds");
    } else if (key == "local_algo") {
        cfg.collab.local_algo = value;
    } else if (key == "sinkhorn_tol") {
        cfg.collab.local_fit.sinkhorn.tol = as_real("sinkhorn_tol");
    } else if (key == "sinkhorn_max_iter") {
        cfg.collab.local_fit.sinkhorn.max_iter = as_int("sinkhorn_max_iter");
    } else if (key == "local_tol") {
        cfg.collab.local_fit.tol = as_real("local_tol");
    } else if (key == "local_max_iter") {
        cfg.collab.local_fit.max_iter = as_int("local_max_iter");
    } else if (key == "barrier_timeout_s") {
        cfg.collab.barrier_timeout_s = as_real("barrier_timeout_s");
    } else {
        throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
    }
}

} // namespace coot
