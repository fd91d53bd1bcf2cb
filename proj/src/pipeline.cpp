#include "srl/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "srl/csv.hpp"
#include "srl/json_util.hpp"
#include "srl/rng.hpp"
#include "srl/svg.hpp"

namespace srl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stage seed streams; fixed so adding a stage never shifts another's seed.
constexpr std::uint64_t kSelectStream = 1;
constexpr std::uint64_t kFeatureStream = 2;
constexpr std::uint64_t kClusterStream = 3;

template <class T>
std::optional<T> get_opt(const json& obj, std::string_view key, std::string_view ctx) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    return jsonu::get<T>(obj, key, ctx);
}

template <class T>
json opt_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

const json& section(const json& doc, std::string_view key) {
    static const json empty = json::object();
    const auto it = doc.find(key);
    return it == doc.end() || it->is_null() ? empty : *it;
}

std::string resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    if (path.is_relative()) path = base / path;
    return path.lexically_normal().string();
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot write file");
    return out;
}

void write_json(const fs::path& dir, const std::string& name, const json& doc, StageOutput& out) {
    jsonu::write_file((dir / name).string(), doc);
    out.files.push_back(name);
}

std::vector<double> whole_sequence_proportions(std::span<const int> seq, std::size_t n_symbols) {
    std::vector<double> p(n_symbols, 0.0);
    for (int s : seq) p[static_cast<std::size_t>(s)] += 1.0;
    for (double& x : p) x /= static_cast<double>(seq.size());
    return p;
}

}  // namespace

// ---------------------------------------------------------------- config

std::string_view input_mode_name(InputMode m) {
    switch (m) {
        case InputMode::raw_events: return "raw_events";
        case InputMode::precoded_actions: return "precoded_actions";
        case InputMode::precoded_processes: return "precoded_processes";
    }
    return "precoded_processes";
}

InputMode parse_input_mode(std::string_view name) {
    if (name == "raw_events") return InputMode::raw_events;
    if (name == "precoded_actions") return InputMode::precoded_actions;
    if (name == "precoded_processes") return InputMode::precoded_processes;
    throw ValidationError("unknown input mode '" + std::string(name) +
                          "' (expected raw_events, precoded_actions or precoded_processes)");
}

void PipelineConfig::validate() const {
    if (input.path.empty()) throw ValidationError("config: input.path is required");
    if (!(preprocess.z_max > 0.0)) throw ValidationError("config: preprocess.z_max must be positive");
    if (hmm.min_states < 1 || hmm.max_states < hmm.min_states) {
        throw ValidationError("config: hmm state range must satisfy 1 <= min_states <= max_states");
    }
    if (hmm.n_states && *hmm.n_states < 1) throw ValidationError("config: hmm.n_states must be >= 1");
    if (hmm.restarts < 1) throw ValidationError("config: hmm.restarts must be >= 1");
    if (hmm.max_iter < 1) throw ValidationError("config: hmm.max_iter must be >= 1");
    if (!(hmm.tol > 0.0)) throw ValidationError("config: hmm.tol must be positive");
    if (!(hmm.smoothing >= 0.0)) throw ValidationError("config: hmm.smoothing must be >= 0");
    if (cluster.k && *cluster.k < 2) throw ValidationError("config: cluster.k must be >= 2");
    if (cluster.k_min < 2 || cluster.k_max < cluster.k_min) {
        throw ValidationError("config: cluster k range must satisfy 2 <= k_min <= k_max");
    }
    if (cluster.gamma && !(*cluster.gamma > 0.0)) throw ValidationError("config: cluster.gamma must be positive");
    if (cluster.landmarks && *cluster.landmarks < 1) throw ValidationError("config: cluster.landmarks must be >= 1");
    if (cluster.n_init < 1) throw ValidationError("config: cluster.n_init must be >= 1");
    if (cluster.max_iter < 1) throw ValidationError("config: cluster.max_iter must be >= 1");
    if (cluster.phase_bins < 1) throw ValidationError("config: cluster.phase_bins must be >= 1");
    if (!(stats.alpha > 0.0 && stats.alpha < 1.0)) throw ValidationError("config: stats.alpha must lie in (0, 1)");
}

PipelineConfig config_from_json(const json& doc, const fs::path& base_dir) {
    jsonu::require_keys(doc, {"input", "preprocess", "hmm", "cluster", "stats", "benchmark_mode", "seed", "output_dir"},
                        "config");
    PipelineConfig c;

    const auto& in = section(doc, "input");
    jsonu::require_keys(in, {"mode", "path", "scores", "action_library", "process_library"}, "config.input");
    c.input.mode = parse_input_mode(jsonu::get_or<std::string>(in, "mode", "precoded_processes", "config.input"));
    c.input.path = resolve(base_dir, jsonu::get<std::string>(in, "path", "config.input"));
    auto resolve_opt = [&](std::string_view key) -> std::optional<std::string> {
        if (auto v = get_opt<std::string>(in, key, "config.input")) return resolve(base_dir, *v);
        return std::nullopt;
    };
    c.input.scores = resolve_opt("scores");
    c.input.action_library = resolve_opt("action_library");
    c.input.process_library = resolve_opt("process_library");

    const auto& pre = section(doc, "preprocess");
    jsonu::require_keys(pre, {"genai_filter", "z_max", "sample_sd"}, "config.preprocess");
    c.preprocess.genai_filter = jsonu::get_or<bool>(pre, "genai_filter", true, "config.preprocess");
    c.preprocess.z_max = jsonu::get_or<double>(pre, "z_max", 3.0, "config.preprocess");
    c.preprocess.sample_sd = jsonu::get_or<bool>(pre, "sample_sd", true, "config.preprocess");

    const auto& h = section(doc, "hmm");
    const std::string_view hc = "config.hmm";
    jsonu::require_keys(h, {"min_states", "max_states", "n_states", "criterion", "restarts", "tol", "max_iter", "smoothing"},
                        hc);
    c.hmm.min_states = jsonu::get_or<std::size_t>(h, "min_states", 2, hc);
    c.hmm.max_states = jsonu::get_or<std::size_t>(h, "max_states", 12, hc);
    c.hmm.n_states = get_opt<std::size_t>(h, "n_states", hc);
    c.hmm.criterion = parse_criterion(jsonu::get_or<std::string>(h, "criterion", "bic", hc));
    c.hmm.restarts = jsonu::get_or<std::size_t>(h, "restarts", 10, hc);
    c.hmm.tol = jsonu::get_or<double>(h, "tol", 1e-4, hc);
    c.hmm.max_iter = jsonu::get_or<std::size_t>(h, "max_iter", 500, hc);
    c.hmm.smoothing = jsonu::get_or<double>(h, "smoothing", 1e-3, hc);

    const auto& cl = section(doc, "cluster");
    const std::string_view cc = "config.cluster";
    jsonu::require_keys(cl, {"k", "k_min", "k_max", "gamma", "landmarks", "normalize_distances", "silhouette_distance",
                             "n_init", "max_iter", "phase_bins"},
                        cc);
    c.cluster.k = cl.contains("k") ? get_opt<std::size_t>(cl, "k", cc) : std::optional<std::size_t>(3);
    c.cluster.k_min = jsonu::get_or<std::size_t>(cl, "k_min", 2, cc);
    c.cluster.k_max = jsonu::get_or<std::size_t>(cl, "k_max", 10, cc);
    c.cluster.gamma = get_opt<double>(cl, "gamma", cc);
    c.cluster.landmarks = get_opt<std::size_t>(cl, "landmarks", cc);
    c.cluster.normalize_distances = jsonu::get_or<bool>(cl, "normalize_distances", false, cc);
    const auto sil = jsonu::get_or<std::string>(cl, "silhouette_distance", "feature", cc);
    if (sil == "feature") {
        c.cluster.silhouette_distance = SilhouetteDistance::feature;
    } else if (sil == "levenshtein") {
        c.cluster.silhouette_distance = SilhouetteDistance::levenshtein;
    } else {
        throw ValidationError("config.cluster: silhouette_distance must be 'feature' or 'levenshtein'");
    }
    c.cluster.n_init = jsonu::get_or<std::size_t>(cl, "n_init", 10, cc);
    c.cluster.max_iter = jsonu::get_or<std::size_t>(cl, "max_iter", 300, cc);
    c.cluster.phase_bins = jsonu::get_or<std::size_t>(cl, "phase_bins", 10, cc);

    const auto& st = section(doc, "stats");
    jsonu::require_keys(st, {"alpha", "exact_threshold", "method"}, "config.stats");
    c.stats.alpha = jsonu::get_or<double>(st, "alpha", 0.05, "config.stats");
    c.stats.exact_threshold = jsonu::get_or<std::size_t>(st, "exact_threshold", 12, "config.stats");
    c.stats.method = parse_u_method(jsonu::get_or<std::string>(st, "method", "auto", "config.stats"));

    c.benchmark_mode = jsonu::get_or<bool>(doc, "benchmark_mode", false, "config");
    c.seed = jsonu::get_or<std::uint64_t>(doc, "seed", 0, "config");
    c.output_dir = resolve(base_dir, jsonu::get_or<std::string>(doc, "output_dir", "runs", "config"));
    c.validate();
    return c;
}

PipelineConfig load_config(const std::string& path) {
    const auto doc = jsonu::read_file(path);
    return config_from_json(doc, fs::absolute(fs::path(path)).parent_path());
}

json to_json(const PipelineConfig& c) {
    return {
        {"input",
         {{"mode", input_mode_name(c.input.mode)},
          {"path", c.input.path},
          {"scores", opt_json(c.input.scores)},
          {"action_library", opt_json(c.input.action_library)},
          {"process_library", opt_json(c.input.process_library)}}},
        {"preprocess",
         {{"genai_filter", c.preprocess.genai_filter},
          {"z_max", c.preprocess.z_max},
          {"sample_sd", c.preprocess.sample_sd}}},
        {"hmm",
         {{"min_states", c.hmm.min_states},
          {"max_states", c.hmm.max_states},
          {"n_states", opt_json(c.hmm.n_states)},
          {"criterion", criterion_name(c.hmm.criterion)},
          {"restarts", c.hmm.restarts},
          {"tol", c.hmm.tol},
          {"max_iter", c.hmm.max_iter},
          {"smoothing", c.hmm.smoothing}}},
        {"cluster",
         {{"k", opt_json(c.cluster.k)},
          {"k_min", c.cluster.k_min},
          {"k_max", c.cluster.k_max},
          {"gamma", opt_json(c.cluster.gamma)},
          {"landmarks", opt_json(c.cluster.landmarks)},
          {"normalize_distances", c.cluster.normalize_distances},
          {"silhouette_distance",
           c.cluster.silhouette_distance == SilhouetteDistance::feature ? "feature" : "levenshtein"},
          {"n_init", c.cluster.n_init},
          {"max_iter", c.cluster.max_iter},
          {"phase_bins", c.cluster.phase_bins}}},
        {"stats",
         {{"alpha", c.stats.alpha},
          {"exact_threshold", c.stats.exact_threshold},
          {"method", method_name(c.stats.method)}}},
        {"benchmark_mode", c.benchmark_mode},
        {"seed", c.seed},
    };
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

// ------------------------------------------------------------ sequences/io

SymbolCohort tactic_cohort(std::span<const TacticSequence> tactics, std::size_t n_states) {
    SymbolCohort c;
    for (const auto& t : tactics) {
        c.ids.push_back(t.learner_id);
        c.sequences.push_back(t.states);
    }
    for (std::size_t i = 0; i < n_states; ++i) c.symbol_names.push_back("tactic_" + std::to_string(i));
    return c;
}

SymbolCohort process_cohort(std::span<const ProcessSequence> sequences) {
    SymbolCohort c;
    const auto& alphabet = informative_process_codes();
    c.symbol_names = alphabet;
    c.sequences = encode(sequences, alphabet);
    for (const auto& s : sequences) c.ids.push_back(s.learner_id);
    return c;
}

void write_tactic_csv(const std::string& path, std::span<const TacticSequence> tactics) {
    auto out = open_out(path);
    csv::write_row(out, {"learner_id", "seq_index", "state"});
    for (const auto& t : tactics)
        for (std::size_t i = 0; i < t.states.size(); ++i)
            csv::write_row(out, {t.learner_id, std::to_string(i), std::to_string(t.states[i])});
}

std::vector<TacticSequence> read_tactic_csv(const std::string& path) {
    std::vector<TacticSequence> out;
    for (auto& [id, values] : read_indexed_csv(path, "state")) {
        TacticSequence t{id, {}};
        for (const auto& v : values) {
            int s = -1;
            auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
            if (ec != std::errc() || ptr != v.data() + v.size() || s < 0) {
                throw IngestError(path + ": learner '" + id + "' has invalid state '" + v + "'");
            }
            t.states.push_back(s);
        }
        out.push_back(std::move(t));
    }
    return out;
}

void write_labels_csv(const std::string& path, const std::map<std::string, int>& labels) {
    auto out = open_out(path);
    csv::write_row(out, {"learner_id", "cluster"});
    for (const auto& [id, l] : labels) csv::write_row(out, {id, std::to_string(l)});
}

std::map<std::string, int> read_labels_csv(const std::string& path) {
    const auto table = csv::read_file(path);
    const auto c_id = table.column("learner_id", path);
    const auto c_cl = table.column("cluster", path);
    std::map<std::string, int> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& v = table.rows[r][c_cl];
        int l = -1;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), l);
        const std::string where = path + ":" + std::to_string(table.line_numbers[r]);
        if (ec != std::errc() || ptr != v.data() + v.size() || l < 0) {
            throw IngestError(where + ": invalid cluster label '" + v + "'");
        }
        if (!out.emplace(table.rows[r][c_id], l).second) {
            throw IngestError(where + ": duplicate learner '" + table.rows[r][c_id] + "'");
        }
    }
    return out;
}

// ---------------------------------------------------------------- stages

namespace stages {

IngestResult ingest(const InputConfig& input, const fs::path& dir, StageOutput& out) {
    IngestResult r;
    const auto process_lib = input.process_library ? ProcessLibrary::from_file(*input.process_library)
                                                   : ProcessLibrary::default_library();
    switch (input.mode) {
        case InputMode::raw_events: {
            const auto action_lib = input.action_library ? ActionLibrary::from_file(*input.action_library)
                                                         : ActionLibrary::default_library();
            for (const auto& trace : group_by_learner(read_trace_csv(input.path))) {
                r.actions.push_back(code_actions(trace.records, action_lib));
            }
            break;
        }
        case InputMode::precoded_actions:
            r.actions = read_action_csv(input.path);
            break;
        case InputMode::precoded_processes:
            r.processes = read_process_csv(input.path);
            break;
    }
    if (!r.actions.empty()) {
        for (const auto& a : r.actions) r.processes.push_back(code_processes(a, process_lib));
        if (input.mode == InputMode::raw_events) {
            write_action_csv((dir / "actions.csv").string(), r.actions);
            out.files.push_back("actions.csv");
        }
    }
    if (r.processes.empty()) throw ValidationError(input.path + ": no learners found");
    write_process_csv((dir / "processes.csv").string(), r.processes);
    out.files.push_back("processes.csv");
    out.notes.push_back(std::to_string(r.processes.size()) + " learners ingested");
    return r;
}

PreprocessResult preprocess(std::span<const ProcessSequence> sequences, const PreprocessOptions& options,
                            const fs::path& dir, StageOutput& out) {
    auto result = preprocess_cohort(sequences, options);
    write_json(dir, "filter_report.json", to_json(result.report), out);
    write_process_csv((dir / "clean_processes.csv").string(), result.sequences);
    out.files.push_back("clean_processes.csv");
    for (const auto& w : result.report.warnings) out.notes.push_back(w);
    return result;
}

Selection select(std::span<const ProcessSequence> sequences, const HmmConfig& config, std::uint64_t seed,
                 unsigned threads, const fs::path& dir, StageOutput& out) {
    SelectionOptions opts;
    opts.min_states = config.n_states.value_or(config.min_states);
    opts.max_states = config.n_states.value_or(config.max_states);
    opts.criterion = config.criterion;
    opts.fit.seed = seed;
    opts.fit.restarts = config.restarts;
    opts.fit.tol = config.tol;
    opts.fit.max_iter = config.max_iter;
    opts.fit.smoothing = config.smoothing;
    opts.fit.threads = threads;
    const auto obs = encode(sequences, informative_process_codes());
    Selection s;
    s.report = select_state_count(obs, informative_process_codes(), opts, &s.fits);
    write_json(dir, "model_selection.json", to_json(s.report), out);
    write_selection_csv((dir / "model_selection.csv").string(), s.report);
    out.files.push_back("model_selection.csv");
    out.notes.insert(out.notes.end(), s.report.notes.begin(), s.report.notes.end());
    return s;
}

FitResult fit(const Selection& selection, const fs::path& dir, StageOutput& out) {
    const auto& candidates = selection.report.candidates;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].n_states != selection.report.selected) continue;
        if (!selection.fits[i]) break;
        const FitResult& f = *selection.fits[i];
        write_json(dir, "hmm_model.json", to_json(f), out);
        write_emission_csv((dir / "emission_matrix.csv").string(), f.model);
        write_transition_csv((dir / "transition_matrix.csv").string(), f.model);
        out.files.push_back("emission_matrix.csv");
        out.files.push_back("transition_matrix.csv");
        out.notes.push_back("selected N=" + std::to_string(f.model.n_states()) + " by " +
                            std::string(criterion_name(selection.report.criterion)));
        out.notes.insert(out.notes.end(), f.warnings.begin(), f.warnings.end());
        return f;
    }
    throw ComputeError("no fitted model for the selected state count");
}

std::vector<TacticSequence> decode(const CategoricalHmm& model, std::span<const ProcessSequence> sequences,
                                   unsigned threads, const fs::path& dir, StageOutput& out) {
    std::vector<TacticSequence> tactics(sequences.size());
    parallel_for(sequences.size(), threads, [&](std::size_t i) { tactics[i] = srl::decode(model, sequences[i]); });
    write_tactic_csv((dir / "tactic_sequences.csv").string(), tactics);
    out.files.push_back("tactic_sequences.csv");
    return tactics;
}

Features features(const SymbolCohort& cohort, const ClusterConfig& config, std::uint64_t seed, unsigned threads,
                  const fs::path& dir, StageOutput& out) {
    Features f;
    f.distances = distance_matrix<std::vector<int>>(cohort.sequences, cohort.ids,
                                                    {config.normalize_distances, threads});
    f.features = rbf_features(f.distances, {config.gamma, config.landmarks, seed});
    {
        auto file = open_out(dir / "distances.csv");
        csv::Row header{"learner_id"};
        header.insert(header.end(), cohort.ids.begin(), cohort.ids.end());
        csv::write_row(file, header);
        for (std::size_t i = 0; i < f.distances.n; ++i) {
            csv::Row row{cohort.ids[i]};
            for (std::size_t j = 0; j < f.distances.n; ++j) row.push_back(csv::format_double(f.distances(i, j)));
            csv::write_row(file, row);
        }
    }
    {
        auto file = open_out(dir / "features.csv");
        csv::Row header{"learner_id"};
        for (std::size_t r : f.features.references) header.push_back("ref_" + cohort.ids[r]);
        csv::write_row(file, header);
        for (std::size_t i = 0; i < f.features.values.rows(); ++i) {
            csv::Row row{cohort.ids[i]};
            for (double v : f.features.values.row(i)) row.push_back(csv::format_double(v));
            csv::write_row(file, row);
        }
    }
    out.files.push_back("distances.csv");
    out.files.push_back("features.csv");
    out.notes.push_back("gamma=" + csv::format_double(f.features.gamma));
    out.notes.insert(out.notes.end(), f.features.warnings.begin(), f.features.warnings.end());
    return f;
}

Clustering cluster(const SymbolCohort& cohort, const Features& features, const ClusterConfig& config,
                   std::uint64_t seed, unsigned threads, const fs::path& dir, StageOutput& out) {
    const std::size_t n = cohort.ids.size();
    if (n < 2) throw ValidationError("clustering needs at least 2 learners");
    KMeansOptions base;
    base.seed = seed;
    base.n_init = config.n_init;
    base.max_iter = config.max_iter;
    base.threads = threads;
    const std::size_t k_max = std::min(config.k_max, n);
    if (k_max < config.k_max) out.notes.push_back("k_max capped at n=" + std::to_string(n));
    const DistanceMatrix* sil =
        config.silhouette_distance == SilhouetteDistance::levenshtein ? &features.distances : nullptr;

    Clustering c;
    c.elbow = elbow_scan(features.features.values, std::min(config.k_min, k_max), k_max, base, sil);
    const std::size_t k = config.k.value_or(c.elbow.suggested_k);
    KMeansOptions final_opts = base;
    final_opts.k = k;
    final_opts.seed = derive_seed(seed, k);  // same run as the elbow row for this k
    c.assignment = kmeans(features.features.values, final_opts);
    if (sil) c.assignment.silhouette = silhouette(*sil, c.assignment.labels);
    for (std::size_t i = 0; i < n; ++i) c.labels[cohort.ids[i]] = c.assignment.labels[i];

    {
        auto file = open_out(dir / "elbow.csv");
        csv::write_row(file, {"k", "inertia", "silhouette"});
        for (const auto& r : c.elbow.rows) {
            csv::write_row(file, {std::to_string(r.k), csv::format_double(r.inertia), csv::format_double(r.silhouette)});
        }
    }
    svg::write_file((dir / "elbow.svg").string(), svg::elbow(c.elbow));
    write_labels_csv((dir / "labels.csv").string(), c.labels);
    std::vector<std::size_t> sizes(k, 0);
    for (int l : c.assignment.labels) ++sizes[static_cast<std::size_t>(l)];
    write_json(dir, "clustering.json",
               {{"k", k},
                {"k_source", config.k ? "config" : "elbow_suggestion"},
                {"suggested_k", c.elbow.suggested_k},
                {"knee_k", opt_json(c.elbow.knee_k)},
                {"inertia", c.assignment.inertia},
                {"silhouette", c.assignment.silhouette},
                {"silhouette_distance",
                 config.silhouette_distance == SilhouetteDistance::feature ? "feature" : "levenshtein"},
                {"cluster_sizes", sizes},
                {"gamma", features.features.gamma}},
               out);
    out.files.insert(out.files.end(), {"elbow.csv", "elbow.svg", "labels.csv"});
    out.notes.push_back("k=" + std::to_string(k) + ", silhouette=" + csv::format_double(c.assignment.silhouette));
    return c;
}

PhaseDistribution phase(const SymbolCohort& cohort, std::span<const int> labels, std::size_t bins,
                        const fs::path& dir, StageOutput& out) {
    const auto dist = phase_distribution(cohort.sequences, labels, cohort.symbol_names.size(), bins);
    {
        auto file = open_out(dir / "phase_distribution.csv");
        csv::Row header{"cluster", "bin", "n_learners"};
        header.insert(header.end(), cohort.symbol_names.begin(), cohort.symbol_names.end());
        csv::write_row(file, header);
        for (std::size_t c = 0; c < dist.n_clusters; ++c) {
            for (std::size_t b = 0; b < dist.bins; ++b) {
                csv::Row row{std::to_string(c), std::to_string(b), std::to_string(dist.learners_per_bin[c][b])};
                for (double p : dist.phase[c][b]) row.push_back(csv::format_double(p));
                csv::write_row(file, row);
            }
        }
    }
    {
        auto file = open_out(dir / "tactic_proportions.csv");
        csv::Row header{"cluster", "n_learners"};
        header.insert(header.end(), cohort.symbol_names.begin(), cohort.symbol_names.end());
        csv::write_row(file, header);
        for (std::size_t c = 0; c < dist.n_clusters; ++c) {
            csv::Row row{std::to_string(c), std::to_string(dist.cluster_sizes[c])};
            for (double p : dist.overall[c]) row.push_back(csv::format_double(p));
            csv::write_row(file, row);
        }
    }
    svg::write_file((dir / "phase.svg").string(), svg::phase(dist, cohort.symbol_names));
    out.files.insert(out.files.end(), {"phase_distribution.csv", "tactic_proportions.csv", "phase.svg"});
    return dist;
}

GroupComparison stats(const ScoreTable& scores, const std::map<std::string, int>& labels, const StatsConfig& config,
                      const fs::path& dir, StageOutput& out) {
    GroupSummaryOptions opts;
    opts.alpha = config.alpha;
    opts.test.method = config.method;
    opts.test.exact_threshold = config.exact_threshold;
    auto result = group_summary(scores, labels, opts);
    write_json(dir, "group_stats.json", to_json(result), out);
    write_group_stats_csv((dir / "group_stats.csv").string(), result);
    out.files.push_back("group_stats.csv");
    out.notes.insert(out.notes.end(), result.warnings.begin(), result.warnings.end());
    return result;
}

}  // namespace stages

// ------------------------------------------------------------------ runs

namespace {

// Resolved config plus content hashes of every input file.
json resolved_with_hashes(const PipelineConfig& config) {
    json doc = to_json(config);
    json inputs = json::object();
    inputs["path"] = sha256_file(config.input.path);
    if (config.input.scores) inputs["scores"] = sha256_file(*config.input.scores);
    if (config.input.action_library) inputs["action_library"] = sha256_file(*config.input.action_library);
    if (config.input.process_library) inputs["process_library"] = sha256_file(*config.input.process_library);
    doc["input_sha256"] = std::move(inputs);
    return doc;
}

}  // namespace

std::string run_id(const PipelineConfig& config) { return sha256_hex(resolved_with_hashes(config).dump()).substr(0, 12); }

json to_json(const RunManifest& m, bool with_timings) {
    json stages = json::array();
    for (const auto& s : m.stages) {
        json artifacts = json::array();
        for (const auto& a : s.artifacts) artifacts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"bytes", a.bytes}});
        json item = {{"name", s.name}, {"artifacts", std::move(artifacts)}, {"notes", s.notes}, {"seed", opt_json(s.seed)}};
        if (with_timings) item["seconds"] = s.seconds;
        stages.push_back(std::move(item));
    }
    return {{"run_id", m.run_id},
            {"mode", m.benchmark_mode ? "benchmark" : "tactic"},
            {"seed", m.seed},
            {"status", "complete"},
            {"stages", std::move(stages)}};
}

RunManifest run_pipeline(const PipelineConfig& config, const RunOptions& options) {
    config.validate();
    RunManifest m;
    m.run_id = run_id(config);  // hashes inputs; a missing file fails here, before any stage
    m.run_dir = fs::path(config.output_dir) / m.run_id;
    m.benchmark_mode = config.benchmark_mode;
    m.seed = config.seed;
    fs::create_directories(m.run_dir);
    fs::remove(m.run_dir / "STALE");
    fs::remove(m.run_dir / "manifest.json");

    jsonu::write_file((m.run_dir / "config.resolved.json").string(), resolved_with_hashes(config));

    const unsigned threads = options.threads;
    auto log = [&](const std::string& msg) {
        if (options.log) options.log(msg);
    };

    // Each stage writes into the run directory and is recorded with artifact hashes.
    auto run_stage = [&](const std::string& name, std::optional<std::uint64_t> seed, auto&& body) {
        log("stage " + name);
        const auto t0 = std::chrono::steady_clock::now();
        StageOutput out;
        try {
            body(out);
        } catch (const std::exception& e) {
            std::ofstream stale(m.run_dir / "STALE", std::ios::binary);
            stale << "stage: " << name << "\nerror: " << e.what() << "\n";
            if (dynamic_cast<const ValidationError*>(&e)) throw ValidationError("stage '" + name + "': " + e.what());
            throw ComputeError("stage '" + name + "': " + e.what());
        }
        StageRecord rec{name, {}, std::move(out.notes), seed, 0.0};
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const auto& f : out.files) {
            const auto p = m.run_dir / f;
            rec.artifacts.push_back({f, sha256_file(p.string()), fs::file_size(p)});
        }
        m.stages.push_back(std::move(rec));
    };

    IngestResult ingested;
    ScoreTable scores;
    run_stage("ingest", std::nullopt, [&](StageOutput& out) {
        ingested = stages::ingest(config.input, m.run_dir, out);
        if (config.input.scores) scores = read_score_csv(*config.input.scores);
    });
    PreprocessResult clean;
    run_stage("preprocess", std::nullopt,
              [&](StageOutput& out) { clean = stages::preprocess(ingested.processes, config.preprocess, m.run_dir, out); });

    SymbolCohort cohort;
    if (config.benchmark_mode) {
        cohort = process_cohort(clean.sequences);
    } else {
        const std::uint64_t select_seed = derive_seed(config.seed, kSelectStream);
        stages::Selection selection;
        run_stage("select", select_seed, [&](StageOutput& out) {
            selection = stages::select(clean.sequences, config.hmm, select_seed, threads, m.run_dir, out);
        });
        FitResult fitted;
        run_stage("fit", std::nullopt, [&](StageOutput& out) { fitted = stages::fit(selection, m.run_dir, out); });
        std::vector<TacticSequence> tactics;
        run_stage("decode", std::nullopt, [&](StageOutput& out) {
            tactics = stages::decode(fitted.model, clean.sequences, threads, m.run_dir, out);
        });
        cohort = tactic_cohort(tactics, fitted.model.n_states());
    }

    const std::uint64_t feature_seed = derive_seed(config.seed, kFeatureStream);
    stages::Features feats;
    run_stage("features", feature_seed, [&](StageOutput& out) {
        feats = stages::features(cohort, config.cluster, feature_seed, threads, m.run_dir, out);
    });
    const std::uint64_t cluster_seed = derive_seed(config.seed, kClusterStream);
    stages::Clustering clustering;
    run_stage("cluster", cluster_seed, [&](StageOutput& out) {
        clustering = stages::cluster(cohort, feats, config.cluster, cluster_seed, threads, m.run_dir, out);
    });
    run_stage("phase", std::nullopt, [&](StageOutput& out) {
        stages::phase(cohort, clustering.assignment.labels, config.cluster.phase_bins, m.run_dir, out);
    });
    run_stage("stats", std::nullopt, [&](StageOutput& out) {
        if (!config.input.scores) {
            out.notes.push_back("skipped: no scores file configured");
            return;
        }
        stages::stats(scores, clustering.labels, config.stats, m.run_dir, out);
    });

    jsonu::write_file((m.run_dir / "manifest.json").string(), to_json(m, options.record_timings));
    return m;
}

// -------------------------------------------------------------- compare

namespace {

// Mean per-learner whole-sequence proportions for each nonzero cell.
void write_drilldown(const fs::path& path, const ContingencyTable& table, const std::map<std::string, int>& a,
                     const std::map<std::string, int>& b, const SymbolCohort& cohort, json& summary,
                     const std::string& kind) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < cohort.ids.size(); ++i) index[cohort.ids[i]] = i;
    const std::size_t m = cohort.symbol_names.size();
    auto file = open_out(path);
    csv::Row header{"cluster_a", "cluster_b", "n_learners"};
    header.insert(header.end(), cohort.symbol_names.begin(), cohort.symbol_names.end());
    csv::write_row(file, header);
    json cells = json::array();
    for (int ra : table.row_labels) {
        for (int cb : table.col_labels) {
            std::vector<double> mean(m, 0.0);
            std::size_t n = 0;
            for (const auto& [id, la] : a) {
                if (la != ra || b.at(id) != cb) continue;
                const auto it = index.find(id);
                if (it == index.end() || cohort.sequences[it->second].empty()) continue;
                const auto p = whole_sequence_proportions(cohort.sequences[it->second], m);
                for (std::size_t s = 0; s < m; ++s) mean[s] += p[s];
                ++n;
            }
            if (n == 0) continue;
            for (double& x : mean) x /= static_cast<double>(n);
            csv::Row row{std::to_string(ra), std::to_string(cb), std::to_string(n)};
            for (double x : mean) row.push_back(csv::format_double(x));
            csv::write_row(file, row);
            cells.push_back({{"cluster_a", ra}, {"cluster_b", cb}, {"n_learners", n}, {"proportions", mean}});
        }
    }
    summary[kind] = {{"symbols", cohort.symbol_names}, {"cells", std::move(cells)}};
}

}  // namespace

ComparisonResult compare_table(const ContingencyTable& table, const fs::path& out_dir, const std::string& row_name,
                               const std::string& col_name) {
    fs::create_directories(out_dir);
    ComparisonResult r{table, homogeneity_completeness_v(table), out_dir};
    write_contingency_csv((out_dir / "contingency.csv").string(), table, row_name, col_name);
    json agreement = to_json(r.scores, table);
    agreement["row_clustering"] = row_name;
    agreement["col_clustering"] = col_name;
    jsonu::write_file((out_dir / "agreement.json").string(), agreement);
    jsonu::write_file((out_dir / "sankey.json").string(), sankey_json(table, row_name, col_name));
    svg::write_file((out_dir / "sankey.svg").string(), svg::sankey(table, row_name, col_name));
    return r;
}

ComparisonResult compare_runs(const fs::path& run_a, const fs::path& run_b, const fs::path& out_dir) {
    const auto labels_a = read_labels_csv((run_a / "labels.csv").string());
    const auto labels_b = read_labels_csv((run_b / "labels.csv").string());
    const auto table = contingency(labels_a, labels_b);
    auto result = compare_table(table, out_dir, "run_a", "run_b");

    // Subgroup drill-down: which tactics and processes distinguish learners
    // that one method groups together and the other splits.
    json summary = {{"run_a", run_a.filename().string()}, {"run_b", run_b.filename().string()}};
    json splits = json::array();
    for (std::size_t i = 0; i < table.rows(); ++i) {
        std::vector<int> targets;
        for (std::size_t j = 0; j < table.cols(); ++j)
            if (table.counts[i][j] > 0) targets.push_back(table.col_labels[j]);
        if (targets.size() > 1) splits.push_back({{"cluster_a", table.row_labels[i]}, {"split_into_b", targets}});
    }
    summary["splits_of_a"] = std::move(splits);
    const auto processes_path = run_a / "clean_processes.csv";
    if (fs::exists(processes_path)) {
        const auto processes = read_process_csv(processes_path.string());
        write_drilldown(out_dir / "drilldown_processes.csv", table, labels_a, labels_b, process_cohort(processes),
                        summary, "processes");
    }
    for (const auto& run : {run_a, run_b}) {
        const auto tactic_path = run / "tactic_sequences.csv";
        const auto model_path = run / "hmm_model.json";
        if (!fs::exists(tactic_path) || !fs::exists(model_path)) continue;
        const auto model = hmm_from_json(jsonu::read_file(model_path.string()));
        const auto tactics = read_tactic_csv(tactic_path.string());
        write_drilldown(out_dir / "drilldown_tactics.csv", table, labels_a, labels_b,
                        tactic_cohort(tactics, model.n_states()), summary, "tactics");
        summary["tactics_from"] = run == run_a ? "run_a" : "run_b";
        break;
    }
    jsonu::write_file((out_dir / "drilldown.json").string(), summary);
    return result;
}

}  // namespace srl
