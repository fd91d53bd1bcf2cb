#include <doctest.h>

#include <cstdlib>
#include <set>
#include <sys/wait.h>

#include "helpers.hpp"
#include "srl/core.hpp"
#include "srl/csv.hpp"
#include "srl/json_util.hpp"
#include "srl/pipeline.hpp"
#include "srl/synthgen.hpp"

using namespace srl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Small synthetic cohort plus a config pointing at it.
json small_setup(const test::TempDir& dir, bool benchmark) {
    auto spec = cohort_spec_from_json(jsonu::read_file(std::string(SRL_SOURCE_DIR) + "/data/synth/paperlike.json"));
    spec.n_learners = 36;
    spec.min_length = 20;
    spec.max_length = 40;
    const auto cohort = generate_cohort(spec, 1);
    write_process_csv(dir.file("processes.csv"), cohort.sequences);
    write_score_csv(dir.file("scores.csv"), cohort.scores);
    return {
        {"input", {{"mode", "precoded_processes"}, {"path", "processes.csv"}, {"scores", "scores.csv"}}},
        {"hmm", {{"min_states", 2}, {"max_states", 3}, {"restarts", 2}, {"max_iter", 25}}},
        {"cluster", {{"k", 3}, {"k_min", 2}, {"k_max", 4}, {"n_init", 3}}},
        {"benchmark_mode", benchmark},
        {"seed", 3},
        {"output_dir", "runs"},
    };
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = test::slurp(e.path());
    }
    return files;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(SRL_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing is strict and resolves paths") {
    test::TempDir dir("cfg");
    auto doc = small_setup(dir, false);
    const auto cfg = config_from_json(doc, dir.path());
    CHECK(fs::path(cfg.input.path).is_absolute());
    CHECK(cfg.hmm.max_states == 3);
    CHECK(cfg.cluster.k == std::optional<std::size_t>(3));

    auto bad = doc;
    bad["hmm"]["restart"] = 3;
    CHECK_THROWS_AS(config_from_json(bad, dir.path()), ValidationError);
    bad = doc;
    bad["cluster"]["k_min"] = 1;
    CHECK_THROWS_AS(config_from_json(bad, dir.path()).validate(), ValidationError);
    bad = doc;
    bad["input"]["mode"] = "telepathy";
    CHECK_THROWS_AS(config_from_json(bad, dir.path()), ValidationError);

    const auto bundled = load_config(std::string(SRL_SOURCE_DIR) + "/data/configs/paperlike.json");
    CHECK(bundled.seed == 7);
}

TEST_CASE("full run records nine stages and is reproducible") {
    test::TempDir dir("run");
    const auto doc = small_setup(dir, false);
    auto cfg = config_from_json(doc, dir.path());

    const auto m1 = run_pipeline(cfg, {.threads = 1});
    REQUIRE(m1.stages.size() == 9);
    std::vector<std::string> names;
    for (const auto& s : m1.stages) names.push_back(s.name);
    CHECK(names == std::vector<std::string>{"ingest", "preprocess", "select", "fit", "decode", "features", "cluster",
                                            "phase", "stats"});
    for (const char* f : {"emission_matrix.csv", "transition_matrix.csv", "elbow.csv", "phase_distribution.csv",
                          "group_stats.json", "group_stats.csv", "labels.csv", "manifest.json",
                          "config.resolved.json"}) {
        CHECK_MESSAGE(fs::exists(m1.run_dir / f), f);
    }
    CHECK(m1.run_dir.filename().string() == run_id(cfg));
    CHECK(m1.run_dir.filename().string().size() == 12);

    const auto first = tree(m1.run_dir);

    // rerun in place with a different thread count: identical bytes
    const auto m2 = run_pipeline(cfg, {.threads = 3});
    CHECK(m2.run_dir == m1.run_dir);
    CHECK(tree(m2.run_dir) == first);

    // another output directory, same content address and bytes
    cfg.output_dir = dir.file("elsewhere");
    const auto m3 = run_pipeline(cfg, {.threads = 2});
    CHECK(m3.run_dir.filename() == m1.run_dir.filename());
    CHECK(tree(m3.run_dir) == first);

    // a run compared with itself agrees perfectly
    const auto cmp = compare_runs(m1.run_dir, m3.run_dir, dir.path() / "self");
    CHECK(cmp.scores.homogeneity == doctest::Approx(1.0));
    CHECK(cmp.scores.completeness == doctest::Approx(1.0));
    CHECK(cmp.scores.v_measure == doctest::Approx(1.0));
    CHECK(fs::exists(dir.path() / "self" / "drilldown_tactics.csv"));

    // a changed seed changes the address
    auto other = cfg;
    other.seed = 4;
    CHECK(run_id(other) != run_id(cfg));
}

TEST_CASE("benchmark mode skips the HMM") {
    test::TempDir dir("bench");
    const auto cfg = config_from_json(small_setup(dir, true), dir.path());
    const auto m = run_pipeline(cfg, {.threads = 1});
    CHECK(m.stages.size() == 6);
    for (const auto& s : m.stages) {
        for (const auto& a : s.artifacts) {
            CHECK(a.path.find("hmm") == std::string::npos);
            CHECK(a.path.find("emission") == std::string::npos);
            CHECK(a.path.find("tactic_sequences") == std::string::npos);
        }
    }
    CHECK_FALSE(fs::exists(m.run_dir / "hmm_model.json"));
    const auto manifest = jsonu::read_file((m.run_dir / "manifest.json").string());
    CHECK(manifest["stages"].size() == 6);
    CHECK_FALSE(manifest["stages"][0].contains("seconds"));
}

TEST_CASE("a failing stage leaves a STALE marker") {
    test::TempDir dir("stale");
    auto doc = small_setup(dir, true);
    // every learner lacks CHATGPT once the filter is on and the file has no such codes
    dir.write("processes.csv", "learner_id,seq_index,process_code\nA,0,LCF\nB,0,MCO\n");
    const auto cfg = config_from_json(doc, dir.path());
    CHECK_THROWS(run_pipeline(cfg, {.threads = 1}));
    const auto run_dir = fs::path(cfg.output_dir) / run_id(cfg);
    CHECK(fs::exists(run_dir / "STALE"));
    CHECK_FALSE(fs::exists(run_dir / "manifest.json"));
}

TEST_CASE("drill-down on a two-cell split sums to one per row") {
    test::TempDir dir("drill");
    for (const char* run : {"a", "b"}) fs::create_directories(dir.path() / run);
    write_labels_csv(dir.file("a/labels.csv"), {{"L1", 0}, {"L2", 0}, {"L3", 0}, {"L4", 0}});
    write_labels_csv(dir.file("b/labels.csv"), {{"L1", 0}, {"L2", 0}, {"L3", 1}, {"L4", 1}});
    dir.write("a/clean_processes.csv",
              "learner_id,seq_index,process_code\nL1,0,LCF\nL1,1,MCO\nL2,0,CHATGPT\nL3,0,HCEO\nL3,1,HCEO\n"
              "L3,2,LCR\nL4,0,MCP\n");
    const auto r = compare_runs(dir.path() / "a", dir.path() / "b", dir.path() / "out");
    CHECK(r.table.counts == std::vector<std::vector<std::size_t>>{{2, 2}});
    const auto t = csv::read_file(dir.file("out/drilldown_processes.csv"));
    REQUIRE(t.rows.size() == 2);
    for (const auto& row : t.rows) {
        double s = 0.0;
        for (std::size_t i = 3; i < row.size(); ++i) s += std::stod(row[i]);
        CHECK(s == doctest::Approx(1.0));
    }
    const auto summary = jsonu::read_file(dir.file("out/drilldown.json"));
    CHECK(summary["splits_of_a"].size() == 1);
    CHECK(fs::exists(dir.path() / "out" / "sankey.svg"));
    CHECK(fs::exists(dir.path() / "out" / "sankey.json"));
}

TEST_CASE("CLI exit codes") {
    test::TempDir dir("cli");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("run --bogus") == 2);
    CHECK(run_cli("run --config " + dir.file("missing.json")) == 2);
    dir.write("bad.json", "{\"seed\": 1, \"nonsense\": true}");
    CHECK(run_cli("run --config " + dir.file("bad.json")) == 2);
    dir.write("t.csv", "A\\B,0,1\n0,5,0\n1,0,5\n");
    CHECK(run_cli("compare --contingency " + dir.file("t.csv") + " --out " + dir.file("o")) == 0);
    CHECK(fs::exists(dir.path() / "o" / "agreement.json"));
}
