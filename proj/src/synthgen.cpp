#include "srl/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "srl/json_util.hpp"
#include "srl/parallel.hpp"
#include "srl/rng.hpp"

namespace srl {

namespace {

void check_same_shape(const CategoricalHmm& a, const CategoricalHmm& b) {
    if (a.n_states() != b.n_states()) throw ValidationError("models differ in state count");
    if (a.alphabet != b.alphabet) throw ValidationError("models differ in alphabet");
}

double emission_cost(const CategoricalHmm& truth, const CategoricalHmm& fitted, std::size_t i, std::size_t j) {
    double c = 0.0;
    for (std::size_t k = 0; k < truth.n_symbols(); ++k) c += std::abs(truth.emission(i, k) - fitted.emission(j, k));
    return c;
}

std::string learner_name(std::size_t i, std::size_t n) {
    const int width = std::max(4, static_cast<int>(std::to_string(n).size()));
    char buf[32];
    std::snprintf(buf, sizeof buf, "L%0*zu", width, i + 1);
    return buf;
}

double draw_score(const Archetype& a, ScoreShape shape, Rng& rng) {
    if (a.score_sd == 0.0) return std::max(0.0, a.score_mean);
    if (shape == ScoreShape::gamma) {
        const double k = (a.score_mean / a.score_sd) * (a.score_mean / a.score_sd);
        return rng.gamma(k) * a.score_sd * a.score_sd / a.score_mean;
    }
    // rejection gives an exact zero-truncated normal
    for (int attempt = 0; attempt < 10000; ++attempt) {
        const double s = rng.normal(a.score_mean, a.score_sd);
        if (s >= 0.0) return s;
    }
    return 0.0;
}

}  // namespace

void CohortSpec::validate() const {
    if (n_learners < 1) throw ValidationError("cohort spec: n_learners must be >= 1");
    if (archetypes.empty()) throw ValidationError("cohort spec: archetypes must be nonempty");
    if (min_length < 1) throw ValidationError("cohort spec: length.min must be >= 1");
    if (max_length < min_length) throw ValidationError("cohort spec: length.max must be >= length.min");
    double total = 0.0;
    for (std::size_t i = 0; i < archetypes.size(); ++i) {
        const auto& a = archetypes[i];
        const std::string where = "cohort spec: archetypes[" + std::to_string(i) + "]";
        if (!(a.weight >= 0.0) || !std::isfinite(a.weight)) throw ValidationError(where + ".weight must be >= 0");
        if (!(a.score_sd >= 0.0)) throw ValidationError(where + ".score.sd must be >= 0");
        if (score_shape == ScoreShape::gamma && a.score_sd > 0.0 && !(a.score_mean > 0.0)) {
            throw ValidationError(where + ".score.mean must be > 0 for gamma scores");
        }
        try {
            a.generator.validate(1e-6);
        } catch (const ValidationError& e) {
            throw ValidationError(where + ".hmm: " + e.what());
        }
        if (a.generator.alphabet != archetypes[0].generator.alphabet) {
            throw ValidationError(where + ".hmm.alphabet differs from archetypes[0]");
        }
        total += a.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("cohort spec: archetype weights must sum to 1");
}

CohortSpec cohort_spec_from_json(const nlohmann::json& doc) {
    const std::string_view ctx = "cohort spec";
    jsonu::require_keys(doc, {"n_learners", "seed", "length", "score_shape", "archetypes"}, ctx);
    CohortSpec spec;
    spec.n_learners = jsonu::get<std::size_t>(doc, "n_learners", ctx);
    spec.seed = jsonu::get_or<std::uint64_t>(doc, "seed", 0, ctx);
    const auto shape = jsonu::get_or<std::string>(doc, "score_shape", "truncated_normal", ctx);
    if (shape == "truncated_normal") {
        spec.score_shape = ScoreShape::truncated_normal;
    } else if (shape == "gamma") {
        spec.score_shape = ScoreShape::gamma;
    } else {
        throw ValidationError("cohort spec: score_shape must be truncated_normal or gamma");
    }
    if (!doc.contains("length")) throw ValidationError("cohort spec: missing key 'length'");
    const auto& len = doc.at("length");
    jsonu::require_keys(len, {"min", "max"}, "cohort spec.length");
    spec.min_length = jsonu::get<std::size_t>(len, "min", "cohort spec.length");
    spec.max_length = jsonu::get<std::size_t>(len, "max", "cohort spec.length");
    if (!doc.contains("archetypes") || !doc.at("archetypes").is_array()) {
        throw ValidationError("cohort spec: 'archetypes' must be an array");
    }
    for (const auto& item : doc.at("archetypes")) {
        const std::string_view actx = "cohort spec.archetypes[]";
        jsonu::require_keys(item, {"name", "weight", "score", "hmm"}, actx);
        Archetype a;
        a.name = jsonu::get_or<std::string>(item, "name", "archetype" + std::to_string(spec.archetypes.size()), actx);
        a.weight = jsonu::get<double>(item, "weight", actx);
        if (!item.contains("score")) throw ValidationError("cohort spec.archetypes[]: missing key 'score'");
        jsonu::require_keys(item.at("score"), {"mean", "sd"}, "cohort spec.archetypes[].score");
        a.score_mean = jsonu::get<double>(item.at("score"), "mean", "cohort spec.archetypes[].score");
        a.score_sd = jsonu::get<double>(item.at("score"), "sd", "cohort spec.archetypes[].score");
        if (!item.contains("hmm")) throw ValidationError("cohort spec.archetypes[]: missing key 'hmm'");
        a.generator = hmm_from_json(item.at("hmm"));
        spec.archetypes.push_back(std::move(a));
    }
    spec.validate();
    return spec;
}

nlohmann::json to_json(const CohortSpec& spec) {
    nlohmann::json archetypes = nlohmann::json::array();
    for (const auto& a : spec.archetypes) {
        archetypes.push_back({{"name", a.name},
                              {"weight", a.weight},
                              {"score", {{"mean", a.score_mean}, {"sd", a.score_sd}}},
                              {"hmm", to_json(a.generator)}});
    }
    return {{"n_learners", spec.n_learners},
            {"seed", spec.seed},
            {"length", {{"min", spec.min_length}, {"max", spec.max_length}}},
            {"score_shape", spec.score_shape == ScoreShape::gamma ? "gamma" : "truncated_normal"},
            {"archetypes", std::move(archetypes)}};
}

SyntheticCohort generate_cohort(const CohortSpec& spec, unsigned threads) {
    spec.validate();
    const std::size_t n = spec.n_learners;
    std::vector<double> weights;
    for (const auto& a : spec.archetypes) weights.push_back(a.weight);

    SyntheticCohort cohort;
    cohort.sequences.resize(n);
    cohort.tactic_paths.resize(n);
    cohort.archetypes.resize(n);
    std::vector<double> scores(n);
    parallel_for(n, threads, [&](std::size_t i) {
        Rng rng(derive_seed(spec.seed, i));
        const std::size_t arch = rng.categorical(weights);
        const auto& a = spec.archetypes[arch];
        const std::size_t length = spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
        auto drawn = sample(a.generator, length, rng);
        cohort.sequences[i] = to_process_sequence(a.generator, learner_name(i, n), drawn.symbols);
        cohort.tactic_paths[i] = std::move(drawn.states);
        cohort.archetypes[i] = static_cast<int>(arch);
        scores[i] = draw_score(a, spec.score_shape, rng);
    });
    for (std::size_t i = 0; i < n; ++i) cohort.scores.emplace(cohort.sequences[i].learner_id, scores[i]);
    return cohort;
}

nlohmann::json ground_truth_json(const CohortSpec& spec, const SyntheticCohort& cohort) {
    nlohmann::json learners = nlohmann::json::array();
    for (std::size_t i = 0; i < cohort.sequences.size(); ++i) {
        const auto arch = static_cast<std::size_t>(cohort.archetypes[i]);
        learners.push_back({{"learner_id", cohort.sequences[i].learner_id},
                            {"archetype", cohort.archetypes[i]},
                            {"archetype_name", spec.archetypes[arch].name},
                            {"score", cohort.scores.at(cohort.sequences[i].learner_id)},
                            {"tactic_path", cohort.tactic_paths[i]}});
    }
    return {{"spec", to_json(spec)}, {"learners", std::move(learners)}};
}

std::vector<std::size_t> align_states(const CategoricalHmm& truth, const CategoricalHmm& fitted) {
    check_same_shape(truth, fitted);
    const std::size_t n = truth.n_states();
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cost[i][j] = emission_cost(truth, fitted, i, j);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    if (n <= 8) {
        std::vector<std::size_t> best = perm;
        double best_cost = std::numeric_limits<double>::infinity();
        do {
            double c = 0.0;
            for (std::size_t i = 0; i < n; ++i) c += cost[i][perm[i]];
            if (c < best_cost) {  // strict: first permutation in lexicographic order wins ties
                best_cost = c;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        return best;
    }
    // greedy: repeatedly take the cheapest remaining (true, fitted) pair
    std::vector<bool> used_true(n, false);
    std::vector<bool> used_fit(n, false);
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t bi = 0;
        std::size_t bj = 0;
        double bc = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (used_true[i]) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (!used_fit[j] && cost[i][j] < bc) {
                    bc = cost[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        perm[bi] = bj;
        used_true[bi] = true;
        used_fit[bj] = true;
    }
    return perm;
}

CategoricalHmm apply_alignment(const CategoricalHmm& fitted, std::span<const std::size_t> perm) {
    // permuted() sends old state i to p[i]; here old state perm[i] must become i
    std::vector<std::size_t> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
    return fitted.permuted(inverse);
}

RecoveryError recovery_error(const CategoricalHmm& truth, const CategoricalHmm& fitted,
                             std::span<const std::size_t> perm) {
    check_same_shape(truth, fitted);
    const std::size_t n = truth.n_states();
    if (perm.size() != n) throw ValidationError("recovery_error: permutation size differs from state count");
    RecoveryError e;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t fi = perm[i];
        double em = 0.0;
        for (std::size_t k = 0; k < truth.n_symbols(); ++k) em += std::abs(truth.emission(i, k) - fitted.emission(fi, k));
        double tr = 0.0;
        for (std::size_t j = 0; j < n; ++j) tr += std::abs(truth.transition(i, j) - fitted.transition(fi, perm[j]));
        e.emission_max_row_l1 = std::max(e.emission_max_row_l1, em);
        e.transition_max_row_l1 = std::max(e.transition_max_row_l1, tr);
        e.initial_l1 += std::abs(truth.initial[i] - fitted.initial[fi]);
    }
    return e;
}

}  // namespace srl
