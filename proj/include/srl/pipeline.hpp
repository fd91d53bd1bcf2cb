#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "srl/agreement.hpp"
#include "srl/cluster.hpp"
#include "srl/hmm.hpp"
#include "srl/preprocess.hpp"
#include "srl/stats.hpp"
#include "srl/trace_model.hpp"

namespace srl {

// ---------------------------------------------------------------- config

enum class InputMode { raw_events, precoded_actions, precoded_processes };

std::string_view input_mode_name(InputMode m);
InputMode parse_input_mode(std::string_view name);

struct InputConfig {
    InputMode mode = InputMode::precoded_processes;
    std::string path;
    std::optional<std::string> scores;           // learner_id,score
    std::optional<std::string> action_library;   // default: bundled
    std::optional<std::string> process_library;  // default: bundled
};

struct HmmConfig {
    std::size_t min_states = 2;
    std::size_t max_states = 12;
    std::optional<std::size_t> n_states;  // pins N; selection then scores only that N
    Criterion criterion = Criterion::bic;
    std::size_t restarts = 10;
    double tol = 1e-4;
    std::size_t max_iter = 500;
    double smoothing = 1e-3;
};

enum class SilhouetteDistance { feature, levenshtein };

struct ClusterConfig {
    std::optional<std::size_t> k = 3;  // null -> use the elbow suggestion
    std::size_t k_min = 2;
    std::size_t k_max = 10;
    std::optional<double> gamma;        // null -> median heuristic
    std::optional<std::size_t> landmarks;
    bool normalize_distances = false;
    SilhouetteDistance silhouette_distance = SilhouetteDistance::feature;
    std::size_t n_init = 10;
    std::size_t max_iter = 300;
    std::size_t phase_bins = 10;
};

struct StatsConfig {
    double alpha = 0.05;
    std::size_t exact_threshold = 12;
    UTestMethod method = UTestMethod::automatic;
};

/// Whole-run configuration. JSON keys mirror the struct names; unknown keys
/// are rejected. Relative paths resolve against the config file's directory.
struct PipelineConfig {
    InputConfig input;
    PreprocessOptions preprocess;
    HmmConfig hmm;
    ClusterConfig cluster;
    StatsConfig stats;
    bool benchmark_mode = false;  // cluster process sequences directly, no HMM
    std::uint64_t seed = 0;
    std::string output_dir = "runs";

    void validate() const;
};

PipelineConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::string& path);
/// Resolved config as written to config.resolved.json (output_dir omitted:
/// it is where the file lives).
nlohmann::json to_json(const PipelineConfig& config);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

// ---------------------------------------------------------------- stages

/// Integer-coded sequences ready for clustering: tactic paths or process codes.
struct SymbolCohort {
    std::vector<std::string> ids;
    std::vector<std::vector<int>> sequences;
    std::vector<std::string> symbol_names;
};

SymbolCohort tactic_cohort(std::span<const TacticSequence> tactics, std::size_t n_states);
SymbolCohort process_cohort(std::span<const ProcessSequence> sequences);

/// Files a stage wrote (names relative to its directory) and free-form notes.
struct StageOutput {
    std::vector<std::string> files;
    std::vector<std::string> notes;
};

struct IngestResult {
    std::vector<ProcessSequence> processes;
    std::vector<ActionSequence> actions;  // empty unless coded here
};

namespace stages {

namespace fs = std::filesystem;

IngestResult ingest(const InputConfig& input, const fs::path& dir, StageOutput& out);
PreprocessResult preprocess(std::span<const ProcessSequence> sequences, const PreprocessOptions& options,
                            const fs::path& dir, StageOutput& out);

struct Selection {
    ModelSelectionReport report;
    std::vector<std::optional<FitResult>> fits;
};
Selection select(std::span<const ProcessSequence> sequences, const HmmConfig& config, std::uint64_t seed,
                 unsigned threads, const fs::path& dir, StageOutput& out);
/// Exports the fit chosen by `selection`.
FitResult fit(const Selection& selection, const fs::path& dir, StageOutput& out);
std::vector<TacticSequence> decode(const CategoricalHmm& model, std::span<const ProcessSequence> sequences,
                                   unsigned threads, const fs::path& dir, StageOutput& out);

struct Features {
    DistanceMatrix distances;
    FeatureMatrix features;
};
Features features(const SymbolCohort& cohort, const ClusterConfig& config, std::uint64_t seed, unsigned threads,
                  const fs::path& dir, StageOutput& out);

struct Clustering {
    ElbowTable elbow;
    ClusterAssignment assignment;
    std::map<std::string, int> labels;
};
Clustering cluster(const SymbolCohort& cohort, const Features& features, const ClusterConfig& config,
                   std::uint64_t seed, unsigned threads, const fs::path& dir, StageOutput& out);
PhaseDistribution phase(const SymbolCohort& cohort, std::span<const int> labels, std::size_t bins,
                        const fs::path& dir, StageOutput& out);
GroupComparison stats(const ScoreTable& scores, const std::map<std::string, int>& labels, const StatsConfig& config,
                      const fs::path& dir, StageOutput& out);

}  // namespace stages

void write_tactic_csv(const std::string& path, std::span<const TacticSequence> tactics);
std::vector<TacticSequence> read_tactic_csv(const std::string& path);
void write_labels_csv(const std::string& path, const std::map<std::string, int>& labels);
std::map<std::string, int> read_labels_csv(const std::string& path);

// ---------------------------------------------------------------- runs

struct ArtifactRecord {
    std::string path;  // relative to the run directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct StageRecord {
    std::string name;
    std::vector<ArtifactRecord> artifacts;
    std::vector<std::string> notes;
    std::optional<std::uint64_t> seed;
    double seconds = 0.0;
};

struct RunManifest {
    std::string run_id;
    std::filesystem::path run_dir;
    bool benchmark_mode = false;
    std::uint64_t seed = 0;
    std::vector<StageRecord> stages;
};

struct RunOptions {
    unsigned threads = 0;
    bool record_timings = false;  // timings make manifest.json vary between reruns
    std::function<void(std::string_view)> log;
};

/// 12-hex-digit content address from the resolved config and input file hashes.
std::string run_id(const PipelineConfig& config);

/// Runs every stage into <output_dir>/<run_id>/ and writes config.resolved.json
/// and manifest.json. A failing stage leaves a STALE marker naming the stage
/// and rethrows (ValidationError stays a ValidationError, anything else
/// becomes a ComputeError), both prefixed with the stage name.
RunManifest run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

nlohmann::json to_json(const RunManifest& manifest, bool with_timings);

struct ComparisonResult {
    ContingencyTable table;
    AgreementScores scores;
    std::filesystem::path out_dir;
};

/// Agreement between two finished runs (rows = run A). Also writes per-cell
/// drill-down tables of tactic (when run A has them) and process proportions.
ComparisonResult compare_runs(const std::filesystem::path& run_a, const std::filesystem::path& run_b,
                              const std::filesystem::path& out_dir);

/// Agreement files for a bare contingency table (rows = reference).
ComparisonResult compare_table(const ContingencyTable& table, const std::filesystem::path& out_dir,
                               const std::string& row_name = "A", const std::string& col_name = "B");

}  // namespace srl
