// Command-line harness for the collaborative OT clustering library:
// dataset splitting, local fits, single collaboration runs, the full
// repeated-experiment protocol, and a TCP federation peer.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "coot/experiment.hpp"
#include "coot/federation.hpp"

namespace {

using namespace coot;

DataMatrix load_standardized(const std::string& path, bool has_header,
                             const std::optional<std::string>& label_column) {
    return standardize(load_csv(path, has_header, label_column));
}

void write_view_csv(const DataView& view, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    for (size_t j = 0; j < view.matrix.feature_names.size(); ++j) {
        out << (j ? "," : "") << view.matrix.feature_names[j];
    }
    if (view.matrix.labels) out << ",class";
    out << "\n";
    for (Eigen::Index i = 0; i < view.size(); ++i) {
        for (Eigen::Index j = 0; j < view.dim(); ++j) {
            out << (j ? "," : "") << format_double(view.matrix.values(i, j));
        }
        if (view.matrix.labels) out << "," << (*view.matrix.labels)(i);
        out << "\n";
    }
}

int cmd_split(const std::string& data, const std::string& label, bool no_header,
              const std::string& mode, int r, int dims, std::uint64_t seed,
              const std::string& outdir) {
    const std::optional<std::string> label_col =
        label.empty() ? std::nullopt : std::optional<std::string>(label);
    const DataMatrix m = load_standardized(data, !no_header, label_col);
    Rng rng(seed);
    std::vector<DataView> views;
    if (mode == "vertical") {
        views = split_vertical(m, r, rng);
    } else {
        const int use_dims = dims > 0 ? dims : static_cast<int>((m.cols() + 1) / 2);
        views = split_horizontal(m, r, use_dims, rng);
    }

    std::filesystem::create_directories(outdir);
    std::ofstream manifest(std::filesystem::path(outdir) / "split_manifest.txt");
    manifest << "mode=" << mode << "\nr=" << r << "\nseed=" << seed << "\n";
    for (const auto& view : views) {
        const std::string name = "view_" + std::to_string(view.origin.collaborator) + ".csv";
        write_view_csv(view, std::filesystem::path(outdir) / name);
        manifest << "view" << view.origin.collaborator << ".features=";
        for (size_t j = 0; j < view.origin.feature_ids.size(); ++j) {
            manifest << (j ? "," : "") << view.origin.feature_ids[j];
        }
        manifest << "\n";
    }
    std::cout << "wrote " << views.size() << " views to " << outdir << "\n";
    return 0;
}

int cmd_local(const std::string& data, const std::string& label, bool no_header,
              const std::string& algo, int k, double lambda, std::uint64_t seed,
              const std::string& centroids_out) {
    const std::optional<std::string> label_col =
        label.empty() ? std::nullopt : std::optional<std::string>(label);
    const DataMatrix m = load_standardized(data, !no_header, label_col);
    const DataView view = as_view(m, std::filesystem::path(data).stem().string());
    const int use_k = k > 0 ? k : 2;
    Rng rng(seed);
    const LocalModel model = fit_local_model(algo, view, use_k, lambda, rng, {});
    const HardAssignment labels = harden(model.plan);
    const QualityReport q = evaluate(view, labels, model.centroids);
    std::cout << "algo=" << model.algo_tag << " k=" << use_k << " objective="
              << format_double(model.objective) << "\n";
    std::cout << "db=" << format_double(q.db) << " silhouette=" << format_double(q.silhouette);
    if (q.ari) std::cout << " ari=" << format_double(*q.ari);
    std::cout << "\n";
    if (!centroids_out.empty()) {
        std::ofstream out(centroids_out);
        if (!out) throw Error(ErrorKind::Io, "cannot write '" + centroids_out + "'");
        for (Eigen::Index i = 0; i < model.centroids.rows(); ++i) {
            for (Eigen::Index j = 0; j < model.centroids.cols(); ++j) {
                out << (j ? "," : "") << format_double(model.centroids(i, j));
            }
            out << "\n";
        }
    }
    return 0;
}

int cmd_collab(ExperimentConfig cfg) {
    cfg.repeats = 1;
    const RunArtifacts artifacts = run_experiment(cfg);
    if (!cfg.output_dir.empty()) emit_tables(artifacts, cfg.output_dir);
    for (const auto& agg : artifacts.aggregates()) {
        std::cout << to_string(agg.index) << " before=" << format_double(agg.mean_before)
                  << " after=" << format_double(agg.mean_after) << " gain="
                  << format_double(gain(agg.mean_before, agg.mean_after, agg.index)) << "\n";
    }
    return 0;
}

int cmd_experiment(const ExperimentConfig& cfg) {
    const RunArtifacts artifacts = run_experiment(cfg);
    if (cfg.output_dir.empty()) {
        throw Error(ErrorKind::Config, "experiment needs --outdir");
    }
    emit_tables(artifacts, cfg.output_dir);
    for (const auto& agg : artifacts.aggregates()) {
        std::cout << artifacts.config.dataset_id << " " << to_string(agg.index) << " "
                  << format_double(agg.mean_before) << " +-" << format_double(agg.ci_before) << " -> "
                  << format_double(agg.mean_after) << " +-" << format_double(agg.ci_after) << "\n";
    }
    std::cout << "artifacts written to " << cfg.output_dir << "\n";
    return 0;
}

int cmd_serve_peer(const std::string& data, const std::string& label, bool no_header, int id,
                   int peers, int base_port, const std::string& peers_list,
                   const std::string& feature_ids_csv, const ExperimentConfig& cfg,
                   const std::string& report_out) {
    const std::optional<std::string> label_col =
        label.empty() ? std::nullopt : std::optional<std::string>(label);
    const DataMatrix m = load_standardized(data, !no_header, label_col);
    DataView view = as_view(m, std::filesystem::path(data).stem().string());
    view.origin.collaborator = id;
    if (!feature_ids_csv.empty()) {
        view.origin.feature_ids.clear();
        std::istringstream in(feature_ids_csv);
        std::string tok;
        while (std::getline(in, tok, ',')) view.origin.feature_ids.push_back(std::stoi(tok));
        if (static_cast<Eigen::Index>(view.origin.feature_ids.size()) != view.dim()) {
            throw Error(ErrorKind::Config, "feature id list does not match the view's column count");
        }
    }

    CollabConfig collab = cfg.collab;
    collab.seed = cfg.seed;
    if (cfg.k) collab.k = *cfg.k;

    std::unique_ptr<Transport> transport;
    if (!peers_list.empty()) {
        std::vector<PeerLocator> locators;
        std::istringstream in(peers_list);
        std::string uri;
        while (std::getline(in, uri, ',')) locators.push_back(parse_tcp_locator(uri));
        if (static_cast<int>(locators.size()) != peers) {
            throw Error(ErrorKind::Config, "peer locator list has " + std::to_string(locators.size()) +
                                               " entries for " + std::to_string(peers) + " peers");
        }
        transport = tcp_endpoint(id, locators);
    } else {
        transport = tcp_endpoint(id, peers, base_port);
    }

    std::vector<int> peer_ids(static_cast<size_t>(peers));
    for (int p = 0; p < peers; ++p) peer_ids[static_cast<size_t>(p)] = p;
    PeerSession session(id, peer_ids, std::move(transport),
                        std::chrono::milliseconds(static_cast<long>(collab.barrier_timeout_s * 1000)));
    const CollaboratorReport report = run_federated_peer(view, id, peers, collab, session);

    CollabReport wrapper;
    wrapper.rounds_run = static_cast<int>(report.rounds.size());
    wrapper.collaborators.push_back(report);
    const std::string text = wrapper.to_text();
    if (!report_out.empty()) {
        std::ofstream out(report_out);
        if (!out) throw Error(ErrorKind::Io, "cannot write '" + report_out + "'");
        out << text;
    }
    std::cout << text;
    if (!session.dead_peers().empty()) {
        std::cout << "dead peers:";
        for (int p : session.dead_peers()) std::cout << " " << p;
        std::cout << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Collaborative clustering via entropy-regularized optimal transport"};
    app.require_subcommand(1);

    std::string data, label, mode = "horizontal", outdir, config_path, algo = "sinkhorn_means";
    std::string centroids_out, feature_ids_csv, report_out, peers_list;
    bool no_header = false;
    int r = 10, dims = 0, k = 0, repeats = 20, max_rounds = 20, threads = 0;
    int peer_id = 0, peers = 2, base_port = 7700;
    double lambda = 10.0, alpha = 0.5;
    std::string alpha_mode = "constant";
    std::uint64_t seed = 0;

    auto add_data_flags = [&](CLI::App* cmd, bool required = true) {
        auto* opt = cmd->add_option("--data", data, "dataset CSV");
        if (required) opt->required(); // collab/experiment may get it from --config instead
        cmd->add_option("--label-column", label, "label column name (or index without header)");
        cmd->add_flag("--no-header", no_header, "CSV has no header row");
    };

    CLI::App* split = app.add_subcommand("split", "split a dataset into collaborator views");
    add_data_flags(split);
    split->add_option("--mode", mode, "vertical|horizontal")->check(CLI::IsMember({"vertical", "horizontal"}));
    split->add_option("--r", r, "collaborator count");
    split->add_option("--dims", dims, "features per horizontal view (default ceil(d/2))");
    split->add_option("--seed", seed, "rng seed")->required();
    split->add_option("--outdir", outdir, "output directory")->required();

    CLI::App* local = app.add_subcommand("local", "fit one local model and report quality");
    add_data_flags(local);
    local->add_option("--algo", algo, "sinkhorn_means|kmeans");
    local->add_option("--k", k, "cluster count");
    local->add_option("--lambda", lambda, "entropic constant");
    local->add_option("--seed", seed, "rng seed")->required();
    local->add_option("--centroids-out", centroids_out, "write centroids CSV here");

    auto add_collab_flags = [&](CLI::App* cmd, bool need_seed) {
        add_data_flags(cmd, /*required=*/false);
        cmd->add_option("--config", config_path, "key=value config file (flags override)");
        cmd->add_option("--mode", mode, "vertical|horizontal")
            ->check(CLI::IsMember({"vertical", "horizontal"}));
        cmd->add_option("--r", r, "collaborator count");
        cmd->add_option("--dims", dims, "features per horizontal view");
        cmd->add_option("--k", k, "clusters per collaborator (default: class count)");
        cmd->add_option("--lambda", lambda, "entropic constant");
        cmd->add_option("--alpha-mode", alpha_mode, "constant|diversity")
            ->check(CLI::IsMember({"constant", "diversity"}));
        cmd->add_option("--alpha", alpha, "constant confidence coefficient");
        cmd->add_option("--max-rounds", max_rounds, "collaboration round cap");
        cmd->add_option("--local-algo", algo, "sinkhorn_means|kmeans");
        cmd->add_option("--threads", threads, "parallel repeats (0: hardware)");
        auto* s = cmd->add_option("--seed", seed, "master seed");
        if (need_seed) s->required();
        cmd->add_option("--outdir", outdir, "artifact directory");
    };

    CLI::App* collab = app.add_subcommand("collab", "one collaboration run");
    add_collab_flags(collab, false);

    CLI::App* experiment = app.add_subcommand("experiment", "full protocol: repeats + aggregation");
    add_collab_flags(experiment, true);
    experiment->add_option("--repeats", repeats, "number of repeated runs");

    CLI::App* serve = app.add_subcommand("serve-peer", "run one federation peer over TCP");
    add_data_flags(serve);
    serve->add_option("--id", peer_id, "this peer's collaborator id")->required();
    serve->add_option("--peers", peers, "total number of peers")->required();
    serve->add_option("--base-port", base_port, "peer i listens on base-port + i");
    serve->add_option("--peers-list", peers_list,
                      "comma-separated tcp://host:port locators, one per peer id");
    serve->add_option("--feature-ids", feature_ids_csv, "global feature ids of this view's columns");
    serve->add_option("--k", k, "cluster count")->required();
    serve->add_option("--lambda", lambda, "entropic constant");
    serve->add_option("--alpha", alpha, "constant confidence coefficient");
    serve->add_option("--max-rounds", max_rounds, "collaboration round cap");
    serve->add_option("--seed", seed, "shared master seed")->required();
    serve->add_option("--report-out", report_out, "write this peer's report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        std::cerr << "error: config: " << e.what() << "\n";
        return 1;
    }

    try {
        // Config file first, then only the flags the user actually passed.
        auto build_cfg = [&](CLI::App* cmd) {
            coot::ExperimentConfig cfg;
            if (!config_path.empty()) cfg = coot::load_experiment_config(config_path);
            auto given = [&](const char* name) { return cmd->count(name) > 0; };
            if (given("--data")) cfg.dataset_path = data;
            if (given("--label-column")) cfg.label_column = label;
            if (given("--no-header")) cfg.has_header = false;
            if (given("--mode")) {
                cfg.split = mode == "vertical" ? coot::SplitKind::Vertical : coot::SplitKind::Horizontal;
            }
            if (given("--r")) cfg.r = r;
            if (given("--dims")) cfg.dims = dims;
            if (given("--k")) cfg.k = k;
            if (cmd->get_option_no_throw("--repeats") && given("--repeats")) cfg.repeats = repeats;
            if (given("--seed")) cfg.seed = seed;
            if (given("--outdir")) cfg.output_dir = outdir;
            if (given("--threads")) cfg.threads = threads;
            if (given("--lambda")) cfg.collab.lambda = lambda;
            if (given("--alpha-mode")) {
                cfg.collab.alpha_mode =
                    alpha_mode == "diversity" ? coot::AlphaMode::Diversity : coot::AlphaMode::Constant;
            }
            if (given("--alpha")) cfg.collab.alpha_const = alpha;
            if (given("--max-rounds")) cfg.collab.max_rounds = max_rounds;
            if (given("--local-algo")) cfg.collab.local_algo = algo;
            if (cfg.dataset_path.empty()) {
                throw coot::Error(coot::ErrorKind::Config, "no dataset given (flag --data or config key)");
            }
            return cfg;
        };

        if (split->parsed()) {
            return cmd_split(data, label, no_header, mode, r, dims, seed, outdir);
        }
        if (local->parsed()) {
            return cmd_local(data, label, no_header, algo, k, lambda, seed, centroids_out);
        }
        if (collab->parsed()) {
            return cmd_collab(build_cfg(collab));
        }
        if (experiment->parsed()) {
            return cmd_experiment(build_cfg(experiment));
        }
        if (serve->parsed()) {
            coot::ExperimentConfig cfg;
            cfg.seed = seed;
            cfg.k = k;
            cfg.collab.lambda = lambda;
            cfg.collab.alpha_const = alpha;
            cfg.collab.max_rounds = max_rounds;
            return cmd_serve_peer(data, label, no_header, peer_id, peers, base_port, peers_list,
                                  feature_ids_csv, cfg, report_out);
        }
    } catch (const coot::Error& e) {
        std::cerr << "error: " << coot::to_string(e.kind()) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
