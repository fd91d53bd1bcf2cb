#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "srl/core.hpp"
#include "srl/trace_model.hpp"

namespace srl {

class Rng;

/// Integer-coded observation sequence (indices into a model alphabet).
using Observations = std::vector<int>;

/// Hidden Markov model with categorical emissions.
///
/// `transition(i, j)` is P(state j at t+1 | state i at t) and
/// `emission(i, k)` is P(symbol k | state i); both are row-stochastic.
struct CategoricalHmm {
    std::vector<std::string> alphabet;
    std::vector<double> initial;
    Matrix transition;
    Matrix emission;

    std::size_t n_states() const noexcept { return initial.size(); }
    std::size_t n_symbols() const noexcept { return alphabet.size(); }

    /// Index of `symbol` in the alphabet, or -1.
    int symbol_index(std::string_view symbol) const;

    /// Throws ValidationError unless dimensions agree, N >= 1, M >= 2, all
    /// entries are >= 0 and pi and every row sum to 1 within `tol`.
    void validate(double tol = 1e-9) const;

    /// Model with hidden states relabeled: new state p[i] is old state i.
    CategoricalHmm permuted(std::span<const std::size_t> p) const;
};

/// Encodes sequences against `alphabet`; a symbol outside it raises
/// ValidationError naming the learner and position.
std::vector<Observations> encode(std::span<const ProcessSequence> sequences, std::span<const std::string> alphabet);

// ------------------------------------------------------------ likelihood

/// log P(obs | model) by the log-space forward recursion (log-sum-exp).
/// Returns -inf when the sequence is impossible under the model.
double log_likelihood(const CategoricalHmm& model, std::span<const int> obs);

/// Sum over sequences (treated as independent draws from one model).
double log_likelihood(const CategoricalHmm& model, std::span<const Observations> sequences);
double log_likelihood(const CategoricalHmm& model, std::span<const ProcessSequence> sequences);

/// Full log-space forward-backward pass for one sequence.
struct Posteriors {
    Matrix log_alpha;         // T x N
    Matrix log_beta;          // T x N
    Matrix state_marginals;   // T x N, P(state at t | obs)
    double log_likelihood = 0.0;           // forward termination
    double log_likelihood_backward = 0.0;  // from beta at t = 0
};

Posteriors forward_backward(const CategoricalHmm& model, std::span<const int> obs);

// -------------------------------------------------------------- decoding

struct DecodedPath {
    std::vector<int> states;
    double log_probability = 0.0;  // joint log P(states, obs)
};

/// MAP state path. On ties the lower state index wins, both for the final
/// state and at every backtrack step. Throws ComputeError if the sequence
/// has zero probability under the model.
DecodedPath viterbi(const CategoricalHmm& model, std::span<const int> obs);

struct TacticSequence {
    std::string learner_id;
    std::vector<int> states;

    bool operator==(const TacticSequence&) const = default;
};

TacticSequence decode(const CategoricalHmm& model, const ProcessSequence& sequence);

// ------------------------------------------------------------ estimation

struct FitOptions {
    std::size_t n_states = 2;
    std::uint64_t seed = 0;
    std::size_t restarts = 10;
    double tol = 1e-4;          // stop when the LL gain of an iteration is below this (nats)
    std::size_t max_iter = 500;
    double smoothing = 1e-3;    // pseudocount added to every expected-count cell
    double init_concentration = 1.0;  // symmetric Dirichlet for random initialization
    unsigned threads = 0;       // 0 = hardware concurrency
};

/// One EM run from one random initialization.
struct RestartTrace {
    std::uint64_t seed = 0;
    /// LL of the model at each iteration; entry 0 is the initialization.
    std::vector<double> ll_trace;
    std::size_t iterations = 0;
    bool converged = false;
    bool discarded = false;  // non-finite likelihood
    double log_likelihood = 0.0;
    /// Largest |row sum - 1| seen over all M-steps (pi, A and B rows).
    double max_stochastic_deviation = 0.0;
};

struct FitResult {
    CategoricalHmm model;
    double log_likelihood = 0.0;
    std::size_t n_iterations = 0;
    bool converged = false;
    std::size_t restart_index = 0;
    std::vector<RestartTrace> restarts;
    std::vector<std::string> warnings;
};

/// Baum-Welch EM from `restarts` seeded Dirichlet initializations; returns the
/// run with the highest final LL (lowest restart index on ties). Restart r
/// uses seed derive_seed(options.seed, r), so the result does not depend on
/// the thread count.
FitResult fit(std::span<const Observations> sequences, std::span<const std::string> alphabet,
              const FitOptions& options);
FitResult fit(std::span<const ProcessSequence> sequences, std::span<const std::string> alphabet,
              const FitOptions& options);

// ------------------------------------------------------- model selection

/// Free parameters of an N-state, M-symbol model:
/// (N-1) initial + N(N-1) transition + N(M-1) emission.
constexpr std::size_t free_parameters(std::size_t n_states, std::size_t n_symbols) noexcept {
    return n_states * n_states + n_states * n_symbols - n_states - 1;
}

enum class Criterion { aic, bic, ll };

std::string_view criterion_name(Criterion c);
Criterion parse_criterion(std::string_view name);

struct CandidateScore {
    std::size_t n_states = 0;
    bool failed = false;
    std::string error;
    double log_likelihood = 0.0;
    double aic = 0.0;
    double bic = 0.0;
    std::size_t k = 0;                // free parameters
    std::size_t n_observations = 0;   // total symbols across sequences
};

struct ModelSelectionReport {
    std::vector<CandidateScore> candidates;
    std::optional<std::size_t> best_aic;
    std::optional<std::size_t> best_bic;
    std::optional<std::size_t> best_ll;
    Criterion criterion = Criterion::bic;
    std::size_t selected = 0;  // state count chosen by `criterion`
    std::vector<std::string> notes;
};

struct SelectionOptions {
    std::size_t min_states = 2;
    std::size_t max_states = 12;
    Criterion criterion = Criterion::bic;
    FitOptions fit;  // n_states ignored; seed is the master seed
};

/// Fits every N in [min_states, max_states] with the full restart budget.
/// The fit for N uses master seed derive_seed(seed, N). Candidates that fail
/// are marked and skipped; ComputeError if all fail. When `fits` is given it
/// receives the FitResult for each candidate (same order, empty model on failure).
ModelSelectionReport select_state_count(std::span<const Observations> sequences,
                                        std::span<const std::string> alphabet, const SelectionOptions& options,
                                        std::vector<std::optional<FitResult>>* fits = nullptr);

// -------------------------------------------------------------- sampling

struct SampledSequence {
    std::vector<int> symbols;
    std::vector<int> states;
};

/// Draws a state path from pi/A and symbols from B. Throws ValidationError for length 0.
SampledSequence sample(const CategoricalHmm& model, std::size_t length, std::uint64_t seed);
SampledSequence sample(const CategoricalHmm& model, std::size_t length, Rng& rng);

ProcessSequence to_process_sequence(const CategoricalHmm& model, std::string learner_id, std::span<const int> symbols);

// ------------------------------------------------------------- exports

nlohmann::json to_json(const CategoricalHmm& model);
CategoricalHmm hmm_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const FitResult& fit);
nlohmann::json to_json(const ModelSelectionReport& report);

/// Row = state. Header `state,<symbol...>` for emission and `state,<state...>`
/// for transition.
void write_emission_csv(const std::string& path, const CategoricalHmm& model);
void write_transition_csv(const std::string& path, const CategoricalHmm& model);
void write_selection_csv(const std::string& path, const ModelSelectionReport& report);

}  // namespace srl
