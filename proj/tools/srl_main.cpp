// Command-line front end: full pipeline runs plus independently rerunnable stages.
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "srl/csv.hpp"
#include "srl/json_util.hpp"
#include "srl/pipeline.hpp"
#include "srl/rng.hpp"
#include "srl/synthgen.hpp"

namespace fs = std::filesystem;
using namespace srl;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

struct RunFlags {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> input;
    std::optional<std::string> scores;
    unsigned threads = 0;
    bool benchmark = false;
    bool record_timings = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config, "pipeline config JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", f.out, "output directory (overrides config)");
    cmd->add_option("--seed", f.seed, "master seed (overrides config)");
    cmd->add_option("--input", f.input, "input sequence/trace file (overrides config)");
    cmd->add_option("--scores", f.scores, "learner_id,score CSV (overrides config)");
    cmd->add_option("--threads", f.threads, "worker cap; 0 = all cores (results do not depend on it)");
    cmd->add_flag("--record-timings", f.record_timings, "store stage timings in manifest.json");
}

PipelineConfig resolve_config(const RunFlags& f) {
    auto config = load_config(f.config);
    if (f.out) config.output_dir = fs::absolute(*f.out).lexically_normal().string();
    if (f.seed) config.seed = *f.seed;
    if (f.input) config.input.path = fs::absolute(*f.input).lexically_normal().string();
    if (f.scores) config.input.scores = fs::absolute(*f.scores).lexically_normal().string();
    if (f.benchmark) config.benchmark_mode = true;
    config.validate();
    return config;
}

RunManifest run(const PipelineConfig& config, const RunFlags& f) {
    RunOptions opts;
    opts.threads = f.threads;
    opts.record_timings = f.record_timings;
    opts.log = [](std::string_view msg) { std::cerr << "[srl] " << msg << '\n'; };
    auto m = run_pipeline(config, opts);
    std::cout << m.run_dir.string() << '\n';
    return m;
}

void print_agreement(const ComparisonResult& r) {
    std::cout << "homogeneity=" << r.scores.homogeneity << " completeness=" << r.scores.completeness
              << " v_measure=" << r.scores.v_measure << '\n'
              << r.out_dir.string() << '\n';
}

std::vector<ProcessSequence> informative_only(const std::vector<ProcessSequence>& in) {
    std::vector<ProcessSequence> out;
    for (const auto& s : in) {
        auto clean = drop_uninformative(s);
        if (!clean.codes.empty()) out.push_back(std::move(clean));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hidden-tactic and strategy analysis of coded learning-trace sequences"};
    app.require_subcommand(1);

    // run
    RunFlags run_flags;
    auto* run_cmd = app.add_subcommand("run", "run the full pipeline into a content-addressed directory");
    add_run_flags(run_cmd, run_flags);
    run_cmd->add_flag("--benchmark", run_flags.benchmark, "cluster process sequences directly (no HMM)");

    // ingest
    InputConfig ingest_in;
    std::string ingest_mode = "raw_events";
    std::string ingest_out;
    auto* ingest_cmd = app.add_subcommand("ingest", "code raw traces or actions into process sequences");
    ingest_cmd->add_option("--input", ingest_in.path, "input CSV")->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--mode", ingest_mode, "raw_events | precoded_actions | precoded_processes");
    ingest_cmd->add_option("--action-library", ingest_in.action_library, "action rules JSON");
    ingest_cmd->add_option("--process-library", ingest_in.process_library, "process rules JSON");
    ingest_cmd->add_option("--out", ingest_out, "output directory")->required();

    // fit-hmm
    std::string fit_processes, fit_out, fit_criterion = "bic";
    std::optional<std::size_t> fit_states;
    HmmConfig fit_cfg;
    std::uint64_t fit_seed = 0;
    unsigned fit_threads = 0;
    auto* fit_cmd = app.add_subcommand("fit-hmm", "select a state count and fit a categorical HMM");
    fit_cmd->add_option("--processes", fit_processes, "learner_id,seq_index,process_code CSV")
        ->required()
        ->check(CLI::ExistingFile);
    fit_cmd->add_option("--out", fit_out, "output directory")->required();
    fit_cmd->add_option("--states", fit_states, "fit exactly this many states");
    fit_cmd->add_option("--min-states", fit_cfg.min_states, "smallest candidate N");
    fit_cmd->add_option("--max-states", fit_cfg.max_states, "largest candidate N");
    fit_cmd->add_option("--criterion", fit_criterion, "aic | bic | ll");
    fit_cmd->add_option("--restarts", fit_cfg.restarts, "random restarts per N");
    fit_cmd->add_option("--max-iter", fit_cfg.max_iter, "EM iteration cap");
    fit_cmd->add_option("--tol", fit_cfg.tol, "EM convergence tolerance (LL gain)");
    fit_cmd->add_option("--smoothing", fit_cfg.smoothing, "pseudocount per expected-count cell");
    fit_cmd->add_option("--seed", fit_seed, "seed");
    fit_cmd->add_option("--threads", fit_threads, "worker cap");

    // decode
    std::string decode_model, decode_processes, decode_out;
    unsigned decode_threads = 0;
    auto* decode_cmd = app.add_subcommand("decode", "Viterbi-decode tactic sequences with a fitted model");
    decode_cmd->add_option("--model", decode_model, "model JSON")->required()->check(CLI::ExistingFile);
    decode_cmd->add_option("--processes", decode_processes, "process CSV")->required()->check(CLI::ExistingFile);
    decode_cmd->add_option("--out", decode_out, "output directory")->required();
    decode_cmd->add_option("--threads", decode_threads, "worker cap");

    // cluster
    std::string cluster_sequences, cluster_out, cluster_sil = "feature";
    ClusterConfig cluster_cfg;
    std::optional<std::size_t> cluster_k;
    std::uint64_t cluster_seed = 0;
    unsigned cluster_threads = 0;
    auto* cluster_cmd = app.add_subcommand("cluster", "Levenshtein/RBF/k-means clustering with elbow and phase exports");
    cluster_cmd->add_option("--sequences", cluster_sequences, "tactic_sequences.csv or a process CSV")
        ->required()
        ->check(CLI::ExistingFile);
    cluster_cmd->add_option("--out", cluster_out, "output directory")->required();
    cluster_cmd->add_option("--k", cluster_k, "final cluster count (default: elbow suggestion)");
    cluster_cmd->add_option("--k-min", cluster_cfg.k_min, "elbow scan start");
    cluster_cmd->add_option("--k-max", cluster_cfg.k_max, "elbow scan end");
    cluster_cmd->add_option("--gamma", cluster_cfg.gamma, "RBF bandwidth (default: median heuristic)");
    cluster_cmd->add_option("--landmarks", cluster_cfg.landmarks, "use a seeded subset of reference sequences");
    cluster_cmd->add_flag("--normalize", cluster_cfg.normalize_distances, "divide distances by the longer length");
    cluster_cmd->add_option("--silhouette-distance", cluster_sil, "feature | levenshtein");
    cluster_cmd->add_option("--bins", cluster_cfg.phase_bins, "phase bins");
    cluster_cmd->add_option("--seed", cluster_seed, "seed");
    cluster_cmd->add_option("--threads", cluster_threads, "worker cap");

    // stats
    std::string stats_scores, stats_labels, stats_out, stats_method = "auto";
    StatsConfig stats_cfg;
    auto* stats_cmd = app.add_subcommand("stats", "compare scores across clusters");
    stats_cmd->add_option("--scores", stats_scores, "learner_id,score CSV")->required()->check(CLI::ExistingFile);
    stats_cmd->add_option("--labels", stats_labels, "learner_id,cluster CSV")->required()->check(CLI::ExistingFile);
    stats_cmd->add_option("--out", stats_out, "output directory")->required();
    stats_cmd->add_option("--alpha", stats_cfg.alpha, "significance level");
    stats_cmd->add_option("--method", stats_method, "auto | exact | normal");
    stats_cmd->add_option("--exact-threshold", stats_cfg.exact_threshold, "auto uses the exact test up to this total n");

    // compare
    std::optional<std::string> cmp_a, cmp_b, cmp_table;
    std::optional<std::string> cmp_out;
    RunFlags cmp_flags;
    auto* cmp_cmd = app.add_subcommand("compare", "agreement between two clusterings");
    cmp_cmd->add_option("--run-a", cmp_a, "run directory (rows)");
    cmp_cmd->add_option("--run-b", cmp_b, "run directory (columns)");
    cmp_cmd->add_option("--contingency", cmp_table, "contingency CSV (rows = reference)");
    cmp_cmd->add_flag("--benchmark", cmp_flags.benchmark, "run tactic and benchmark pipelines from --config, then compare");
    cmp_cmd->add_option("--config", cmp_flags.config, "pipeline config JSON (with --benchmark)");
    cmp_cmd->add_option("--out", cmp_out, "output directory");
    cmp_cmd->add_option("--seed", cmp_flags.seed, "master seed (with --benchmark)");
    cmp_cmd->add_option("--input", cmp_flags.input, "input file override (with --benchmark)");
    cmp_cmd->add_option("--scores", cmp_flags.scores, "scores override (with --benchmark)");
    cmp_cmd->add_option("--threads", cmp_flags.threads, "worker cap");

    // synth
    std::string synth_spec, synth_out;
    std::optional<std::uint64_t> synth_seed;
    std::optional<std::size_t> synth_n;
    unsigned synth_threads = 0;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort with ground truth");
    synth_cmd->add_option("--spec", synth_spec, "cohort spec JSON")->required()->check(CLI::ExistingFile);
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--seed", synth_seed, "seed (overrides spec)");
    synth_cmd->add_option("--n", synth_n, "learner count (overrides spec)");
    synth_cmd->add_option("--threads", synth_threads, "worker cap");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*run_cmd) {
            run(resolve_config(run_flags), run_flags);
        } else if (*ingest_cmd) {
            ingest_in.mode = parse_input_mode(ingest_mode);
            fs::create_directories(ingest_out);
            StageOutput out;
            const auto r = stages::ingest(ingest_in, ingest_out, out);
            std::cout << r.processes.size() << " learners -> " << ingest_out << '\n';
        } else if (*fit_cmd) {
            fit_cfg.n_states = fit_states;
            fit_cfg.criterion = parse_criterion(fit_criterion);
            fs::create_directories(fit_out);
            const auto seqs = informative_only(read_process_csv(fit_processes));
            StageOutput out;
            const auto selection = stages::select(seqs, fit_cfg, fit_seed, fit_threads, fit_out, out);
            const auto fitted = stages::fit(selection, fit_out, out);
            std::cout << "N=" << fitted.model.n_states() << " LL=" << fitted.log_likelihood << '\n';
        } else if (*decode_cmd) {
            const auto model = hmm_from_json(jsonu::read_file(decode_model));
            fs::create_directories(decode_out);
            StageOutput out;
            stages::decode(model, informative_only(read_process_csv(decode_processes)), decode_threads, decode_out, out);
        } else if (*cluster_cmd) {
            cluster_cfg.k = cluster_k;
            if (cluster_sil == "levenshtein") {
                cluster_cfg.silhouette_distance = SilhouetteDistance::levenshtein;
            } else if (cluster_sil != "feature") {
                throw ValidationError("--silhouette-distance must be feature or levenshtein");
            }
            SymbolCohort cohort;
            const auto header = csv::read_file(cluster_sequences).header;
            if (std::find(header.begin(), header.end(), "state") != header.end()) {
                const auto tactics = read_tactic_csv(cluster_sequences);
                int max_state = 0;
                for (const auto& t : tactics)
                    for (int s : t.states) max_state = std::max(max_state, s);
                cohort = tactic_cohort(tactics, static_cast<std::size_t>(max_state) + 1);
            } else {
                cohort = process_cohort(informative_only(read_process_csv(cluster_sequences)));
            }
            fs::create_directories(cluster_out);
            StageOutput out;
            const auto feats = stages::features(cohort, cluster_cfg, derive_seed(cluster_seed, 2), cluster_threads,
                                                cluster_out, out);
            const auto c = stages::cluster(cohort, feats, cluster_cfg, derive_seed(cluster_seed, 3), cluster_threads,
                                           cluster_out, out);
            stages::phase(cohort, c.assignment.labels, cluster_cfg.phase_bins, cluster_out, out);
            std::cout << "k=" << c.assignment.k << " silhouette=" << c.assignment.silhouette << '\n';
        } else if (*stats_cmd) {
            stats_cfg.method = parse_u_method(stats_method);
            fs::create_directories(stats_out);
            StageOutput out;
            stages::stats(read_score_csv(stats_scores), read_labels_csv(stats_labels), stats_cfg, stats_out, out);
        } else if (*cmp_cmd) {
            if (cmp_table) {
                print_agreement(compare_table(read_contingency_csv(*cmp_table), cmp_out.value_or("compare")));
            } else if (cmp_flags.benchmark) {
                if (cmp_flags.config.empty()) throw ValidationError("compare --benchmark requires --config");
                cmp_flags.out = cmp_out;
                RunFlags tactic_flags = cmp_flags;
                tactic_flags.benchmark = false;
                auto tactic_cfg = resolve_config(tactic_flags);
                auto bench_cfg = tactic_cfg;
                bench_cfg.benchmark_mode = true;
                const auto a = run(tactic_cfg, cmp_flags);
                const auto b = run(bench_cfg, cmp_flags);
                const auto dir = fs::path(tactic_cfg.output_dir) / ("compare_" + a.run_id + "_" + b.run_id);
                print_agreement(compare_runs(a.run_dir, b.run_dir, dir));
            } else if (cmp_a && cmp_b) {
                print_agreement(compare_runs(*cmp_a, *cmp_b, cmp_out.value_or("compare")));
            } else {
                throw ValidationError("compare needs --run-a/--run-b, --contingency, or --benchmark --config");
            }
        } else if (*synth_cmd) {
            auto spec = cohort_spec_from_json(jsonu::read_file(synth_spec));
            if (synth_seed) spec.seed = *synth_seed;
            if (synth_n) spec.n_learners = *synth_n;
            const auto cohort = generate_cohort(spec, synth_threads);
            fs::create_directories(synth_out);
            write_process_csv((fs::path(synth_out) / "processes.csv").string(), cohort.sequences);
            write_score_csv((fs::path(synth_out) / "scores.csv").string(), cohort.scores);
            jsonu::write_file((fs::path(synth_out) / "ground_truth.json").string(), ground_truth_json(spec, cohort));
            std::cout << cohort.sequences.size() << " learners -> " << synth_out << '\n';
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitStage;
    }
    return 0;
}
