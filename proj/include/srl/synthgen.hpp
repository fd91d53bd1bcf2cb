#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "srl/hmm.hpp"
#include "srl/stats.hpp"

namespace srl {

enum class ScoreShape { truncated_normal, gamma };

struct Archetype {
    std::string name;
    double weight = 1.0;
    CategoricalHmm generator;
    double score_mean = 0.0;
    double score_sd = 1.0;
};

/// Recipe for a synthetic cohort with known tactics, strategies and scores.
struct CohortSpec {
    std::size_t n_learners = 0;
    std::vector<Archetype> archetypes;
    std::size_t min_length = 1;  // sequence length ~ uniform on [min, max]
    std::size_t max_length = 1;
    ScoreShape score_shape = ScoreShape::truncated_normal;
    std::uint64_t seed = 0;

    /// Throws ValidationError naming the offending field.
    void validate() const;
};

CohortSpec cohort_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CohortSpec& spec);

struct SyntheticCohort {
    std::vector<ProcessSequence> sequences;
    std::vector<std::vector<int>> tactic_paths;  // generator states, same length as sequences
    std::vector<int> archetypes;                 // index into spec.archetypes
    ScoreTable scores;
};

/// Learner i ("L0001", ...) draws everything from derive_seed(spec.seed, i):
/// archetype, length, the HMM sample, then the score.
SyntheticCohort generate_cohort(const CohortSpec& spec, unsigned threads = 0);

/// ground_truth.json: archetype and tactic path per learner plus the spec.
nlohmann::json ground_truth_json(const CohortSpec& spec, const SyntheticCohort& cohort);

/// perm[i] = fitted state matched to true state i, minimizing the summed L1
/// distance between emission rows. Exhaustive for N <= 8, greedy above.
std::vector<std::size_t> align_states(const CategoricalHmm& truth, const CategoricalHmm& fitted);

/// `fitted` relabeled so that its state i corresponds to true state i.
CategoricalHmm apply_alignment(const CategoricalHmm& fitted, std::span<const std::size_t> perm);

struct RecoveryError {
    double emission_max_row_l1 = 0.0;
    double transition_max_row_l1 = 0.0;
    double initial_l1 = 0.0;
};

RecoveryError recovery_error(const CategoricalHmm& truth, const CategoricalHmm& fitted,
                             std::span<const std::size_t> perm);

}  // namespace srl
