#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "coot/experiment.hpp"
#include "synth.hpp"

using namespace coot;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string synth_csv(const std::string& name, int n, int d, int classes, std::uint64_t seed) {
    const auto path = std::filesystem::temp_directory_path() / name;
    synth::write_csv(synth::blobs(n, d, classes, seed), path.string());
    return path.string();
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

ExperimentConfig small_config(const std::string& csv) {
    ExperimentConfig cfg;
    cfg.dataset_path = csv;
    cfg.label_column = "class";
    cfg.split = SplitKind::Vertical;
    cfg.r = 2;
    cfg.repeats = 1;
    cfg.seed = 42;
    cfg.collab.lambda = 15.0;
    cfg.collab.max_rounds = 4;
    return cfg;
}

} // namespace

TEST_CASE("run_experiment shape contract on a tiny instance") {
    const auto csv = synth_csv("coot_tiny.csv", 40, 3, 2, 7);
    const RunArtifacts artifacts = run_experiment(small_config(csv));
    REQUIRE(artifacts.repeats.size() == 1);
    CHECK(artifacts.repeats[0].before.size() == 2);
    CHECK(artifacts.repeats[0].after.size() == 2);
    CHECK(artifacts.n == 40);
    CHECK(artifacts.d == 3);
    CHECK(artifacts.classes == 2);
    CHECK(*artifacts.config.k == 2); // defaulted to the class count
    CHECK(artifacts.has_ari);
}

TEST_CASE("run_experiment validates its inputs") {
    auto cfg = small_config("/nonexistent.csv");
    CHECK_THROWS_AS(run_experiment(cfg), Error);
    auto cfg2 = small_config(synth_csv("coot_tiny2.csv", 30, 3, 2, 8));
    cfg2.repeats = 0;
    CHECK_THROWS_AS(run_experiment(cfg2), Error);
    auto cfg3 = small_config(synth_csv("coot_tiny3.csv", 30, 3, 2, 9));
    cfg3.r = 1;
    CHECK_THROWS_AS(run_experiment(cfg3), Error);
}

TEST_CASE("emit_tables writes consistent per-collaborator rows") {
    const auto csv = synth_csv("coot_emit.csv", 120, 4, 2, 11);
    ExperimentConfig cfg = small_config(csv);
    cfg.r = 10;
    cfg.repeats = 2;
    const RunArtifacts artifacts = run_experiment(cfg);
    const auto dir = temp_dir("coot_emit_out");
    emit_tables(artifacts, dir.string());

    std::ifstream in(dir / "per_collaborator.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "collaborator,index,before,after,gain");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        // gain column must equal the recomputed gain for the row's index.
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string field;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        REQUIRE(fields.size() == 5);
        const double before = parse_double(fields[2]);
        const double after = parse_double(fields[3]);
        const double g = parse_double(fields[4]);
        const IndexKind kind = fields[1] == "db"           ? IndexKind::Db
                               : fields[1] == "silhouette" ? IndexKind::Silhouette
                                                           : IndexKind::Ari;
        CHECK(g == doctest::Approx(gain(before, after, kind)).epsilon(1e-12));
    }
    CHECK(rows == 30); // 10 collaborators x 3 indices

    CHECK(std::filesystem::exists(dir / "aggregate.csv"));
    CHECK(std::filesystem::exists(dir / "runs.csv"));
    CHECK(std::filesystem::exists(dir / "reports.txt"));
    CHECK(std::filesystem::exists(dir / "manifest.txt"));

    // runs.csv holds one row per repeat per index per phase.
    std::ifstream runs(dir / "runs.csv");
    std::getline(runs, header);
    int run_rows = 0;
    while (std::getline(runs, line)) {
        if (!line.empty()) ++run_rows;
    }
    CHECK(run_rows == 2 * 3 * 2);
}

TEST_CASE("emit_tables refuses empty artifacts") {
    RunArtifacts artifacts;
    CHECK_THROWS_AS(emit_tables(artifacts, (temp_dir("coot_empty_out")).string()), Error);
}

TEST_CASE("identical seeds produce byte-identical artifacts") {
    const auto csv = synth_csv("coot_det.csv", 60, 3, 2, 12);
    ExperimentConfig cfg = small_config(csv);
    cfg.r = 3;
    cfg.repeats = 3;
    cfg.split = SplitKind::Horizontal;
    cfg.dims = 2;

    const auto dir_a = temp_dir("coot_det_a");
    const auto dir_b = temp_dir("coot_det_b");
    emit_tables(run_experiment(cfg), dir_a.string());
    emit_tables(run_experiment(cfg), dir_b.string());

    for (const char* name :
         {"per_collaborator.csv", "aggregate.csv", "runs.csv", "reports.txt", "manifest.txt"}) {
        CHECK(slurp(dir_a / name) == slurp(dir_b / name));
    }

    // A different seed moves the outputs.
    cfg.seed = 43;
    const auto dir_c = temp_dir("coot_det_c");
    emit_tables(run_experiment(cfg), dir_c.string());
    CHECK(slurp(dir_a / "runs.csv") != slurp(dir_c / "runs.csv"));
}

TEST_CASE("gate soundness is visible in the artifacts") {
    const auto csv = synth_csv("coot_gate.csv", 80, 4, 2, 13);
    ExperimentConfig cfg = small_config(csv);
    cfg.r = 4;
    cfg.repeats = 2;
    const RunArtifacts artifacts = run_experiment(cfg);
    for (const auto& rep : artifacts.repeats) {
        for (size_t v = 0; v < rep.before.size(); ++v) {
            CHECK(rep.after[v].db <= rep.before[v].db + 1e-12);
        }
    }
}

TEST_CASE("config files parse and flag overrides stay typed") {
    const auto path = std::filesystem::temp_directory_path() / "coot_config.txt";
    {
        std::ofstream out(path);
        out << "# experiment configuration\n";
        out << "dataset=data/wine.csv\n";
        out << "label_column=class\n";
        out << "mode=vertical\n";
        out << "r=5\n";
        out << "k=3\n";
        out << "lambda=25.5\n";
        out << "alpha_mode=diversity\n";
        out << "repeats=7\n";
        out << "seed=12345\n";
        out << "local_algo=kmeans\n";
    }
    const ExperimentConfig cfg = load_experiment_config(path.string());
    CHECK(cfg.dataset_path == "data/wine.csv");
    CHECK(cfg.label_column == "class");
    CHECK(cfg.split == SplitKind::Vertical);
    CHECK(cfg.r == 5);
    CHECK(*cfg.k == 3);
    CHECK(cfg.collab.lambda == 25.5);
    CHECK(cfg.collab.alpha_mode == AlphaMode::Diversity);
    CHECK(cfg.repeats == 7);
    CHECK(cfg.seed == 12345);
    CHECK(cfg.collab.local_algo == "kmeans");

    ExperimentConfig bad;
    CHECK_THROWS_AS(apply_config_entry(bad, "nonsense", "1"), Error);
    CHECK_THROWS_AS(apply_config_entry(bad, "r", "many"), Error);
    CHECK_THROWS_AS(apply_config_entry(bad, "mode", "diagonal"), Error);
}
