#include "srl/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "srl/csv.hpp"
#include "srl/json_util.hpp"
#include "srl/parallel.hpp"
#include "srl/rng.hpp"

namespace srl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

double log_sum_exp(std::span<const double> values) {
    double m = kNegInf;
    for (double v : values) m = std::max(m, v);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double v : values) s += std::exp(v - m);
    return m + std::log(s);
}

struct LogModel {
    std::vector<double> initial;
    Matrix transition;
    Matrix emission;
};

LogModel to_log(const CategoricalHmm& model) {
    LogModel lm{std::vector<double>(model.n_states()), Matrix(model.n_states(), model.n_states()),
                Matrix(model.n_states(), model.n_symbols())};
    for (std::size_t i = 0; i < model.n_states(); ++i) {
        lm.initial[i] = safe_log(model.initial[i]);
        for (std::size_t j = 0; j < model.n_states(); ++j) lm.transition(i, j) = safe_log(model.transition(i, j));
        for (std::size_t k = 0; k < model.n_symbols(); ++k) lm.emission(i, k) = safe_log(model.emission(i, k));
    }
    return lm;
}

void check_observations(const CategoricalHmm& model, std::span<const int> obs) {
    const int m = static_cast<int>(model.n_symbols());
    for (std::size_t t = 0; t < obs.size(); ++t) {
        if (obs[t] < 0 || obs[t] >= m) {
            throw ValidationError("observation " + std::to_string(obs[t]) + " at position " + std::to_string(t) +
                                  " is outside the model alphabet of size " + std::to_string(m));
        }
    }
}

// Expected sufficient statistics accumulated by the E-step.
struct Counts {
    std::vector<double> initial;
    Matrix transition;
    Matrix emission;

    Counts(std::size_t n, std::size_t m) : initial(n, 0.0), transition(n, n, 0.0), emission(n, m, 0.0) {}
};

// Scratch buffers reused across sequences within one EM run.
struct Workspace {
    std::vector<double> alpha;  // T x N, each row normalized
    std::vector<double> beta;   // T x N, scaled by the same constants
    std::vector<double> scale;  // T
};

// E-step for one sequence with per-position normalization: alpha rows are
// kept as probability vectors and log P(obs) = sum_t log c_t, where c_t is
// the normalizer at t. Equivalent to the log-space recursion (the scale
// factors carry the logarithm) without an exp/log per cell.
double accumulate_sequence(const CategoricalHmm& model, const Matrix& emission_t, std::span<const int> obs,
                           Workspace& ws, Counts& counts) {
    const std::size_t n = model.n_states();
    const std::size_t len = obs.size();
    if (len == 0) return 0.0;
    ws.alpha.assign(len * n, 0.0);
    ws.beta.assign(len * n, 0.0);
    ws.scale.assign(len, 0.0);
    const auto& a = model.transition;

    double ll = 0.0;
    {
        const auto b = emission_t.row(static_cast<std::size_t>(obs[0]));
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ws.alpha[i] = model.initial[i] * b[i];
            c += ws.alpha[i];
        }
        if (!(c > 0.0)) return kNegInf;
        for (std::size_t i = 0; i < n; ++i) ws.alpha[i] /= c;
        ws.scale[0] = c;
        ll += std::log(c);
    }
    for (std::size_t t = 1; t < len; ++t) {
        const double* prev = &ws.alpha[(t - 1) * n];
        double* cur = &ws.alpha[t * n];
        const auto b = emission_t.row(static_cast<std::size_t>(obs[t]));
        for (std::size_t i = 0; i < n; ++i) {
            const double p = prev[i];
            if (p == 0.0) continue;
            const auto row = a.row(i);
            for (std::size_t j = 0; j < n; ++j) cur[j] += p * row[j];
        }
        double c = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            cur[j] *= b[j];
            c += cur[j];
        }
        if (!(c > 0.0)) return kNegInf;
        for (std::size_t j = 0; j < n; ++j) cur[j] /= c;
        ws.scale[t] = c;
        ll += std::log(c);
    }

    for (std::size_t i = 0; i < n; ++i) ws.beta[(len - 1) * n + i] = 1.0;
    std::vector<double> weighted(n);
    for (std::size_t t = len - 1; t-- > 0;) {
        const double* next = &ws.beta[(t + 1) * n];
        double* cur = &ws.beta[t * n];
        const auto b = emission_t.row(static_cast<std::size_t>(obs[t + 1]));
        const double inv_c = 1.0 / ws.scale[t + 1];
        for (std::size_t j = 0; j < n; ++j) weighted[j] = b[j] * next[j] * inv_c;
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = a.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += row[j] * weighted[j];
            cur[i] = s;
        }
        // xi_t(i, j) = alpha_t(i) * A(i, j) * weighted(j)
        const double* alpha_t = &ws.alpha[t * n];
        for (std::size_t i = 0; i < n; ++i) {
            const double ai = alpha_t[i];
            if (ai == 0.0) continue;
            const auto row = a.row(i);
            auto out = counts.transition.row(i);
            for (std::size_t j = 0; j < n; ++j) out[j] += ai * row[j] * weighted[j];
        }
    }
    for (std::size_t t = 0; t < len; ++t) {
        const double* alpha_t = &ws.alpha[t * n];
        const double* beta_t = &ws.beta[t * n];
        const auto sym = static_cast<std::size_t>(obs[t]);
        for (std::size_t i = 0; i < n; ++i) {
            const double g = alpha_t[i] * beta_t[i];
            counts.emission(i, sym) += g;
            if (t == 0) counts.initial[i] += g;
        }
    }
    return ll;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
    return out;
}

double e_step(const CategoricalHmm& model, std::span<const Observations> sequences, Workspace& ws, Counts& counts) {
    const Matrix emission_t = transpose(model.emission);
    double total = 0.0;
    for (const auto& obs : sequences) {
        const double ll = accumulate_sequence(model, emission_t, obs, ws, counts);
        if (!std::isfinite(ll)) return kNegInf;
        total += ll;
    }
    return total;
}

// Normalizes counts + pseudocount into a probability row; returns |sum - 1|.
double normalize_row(std::span<const double> counts, std::span<double> out, double pseudocount) {
    double total = 0.0;
    for (double c : counts) total += c + pseudocount;
    if (!(total > 0.0)) {
        // no mass at all (zero smoothing and an unvisited state): keep uniform
        for (double& x : out) x = 1.0 / static_cast<double>(out.size());
    } else {
        for (std::size_t k = 0; k < counts.size(); ++k) out[k] = (counts[k] + pseudocount) / total;
    }
    double s = 0.0;
    for (double x : out) s += x;
    return std::abs(s - 1.0);
}

double m_step(const Counts& counts, double smoothing, CategoricalHmm& model) {
    const std::size_t n = model.n_states();
    double deviation = normalize_row(counts.initial, model.initial, smoothing);
    for (std::size_t i = 0; i < n; ++i) {
        deviation = std::max(deviation, normalize_row(counts.transition.row(i), model.transition.row(i), smoothing));
        deviation = std::max(deviation, normalize_row(counts.emission.row(i), model.emission.row(i), smoothing));
    }
    return deviation;
}

CategoricalHmm random_model(std::span<const std::string> alphabet, std::size_t n, double concentration, Rng& rng) {
    const std::size_t m = alphabet.size();
    CategoricalHmm model{std::vector<std::string>(alphabet.begin(), alphabet.end()), rng.dirichlet(n, concentration),
                         Matrix(n, n), Matrix(n, m)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = rng.dirichlet(n, concentration);
        std::copy(row.begin(), row.end(), model.transition.row(i).begin());
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = rng.dirichlet(m, concentration);
        std::copy(row.begin(), row.end(), model.emission.row(i).begin());
    }
    return model;
}

struct RestartRun {
    CategoricalHmm model;
    RestartTrace trace;
};

constexpr double kStochasticTol = 1e-9;

RestartRun run_em(std::span<const Observations> sequences, std::span<const std::string> alphabet, std::size_t n,
                  std::uint64_t seed, const FitOptions& options) {
    Rng rng(seed);
    RestartRun run{random_model(alphabet, n, options.init_concentration, rng), {}};
    auto& trace = run.trace;
    trace.seed = seed;
    Workspace ws;
    Counts counts(n, alphabet.size());

    double ll = e_step(run.model, sequences, ws, counts);
    trace.ll_trace.push_back(ll);
    if (!std::isfinite(ll)) {
        trace.discarded = true;
        trace.log_likelihood = ll;
        return run;
    }
    for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
        const double dev = m_step(counts, options.smoothing, run.model);
        trace.max_stochastic_deviation = std::max(trace.max_stochastic_deviation, dev);
        if (dev > kStochasticTol) {
            throw ComputeError("M-step produced a row that is not stochastic (deviation " + std::to_string(dev) + ")");
        }
        counts = Counts(n, alphabet.size());
        const double next = e_step(run.model, sequences, ws, counts);
        trace.ll_trace.push_back(next);
        ++trace.iterations;
        if (!std::isfinite(next)) {
            trace.discarded = true;
            trace.log_likelihood = next;
            return run;
        }
        const double gain = next - ll;
        ll = next;
        if (gain < options.tol) {
            trace.converged = true;
            break;
        }
    }
    trace.log_likelihood = ll;
    return run;
}

std::size_t total_symbols(std::span<const Observations> sequences) {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.size();
    return n;
}

void validate_fit_input(std::span<const Observations> sequences, std::span<const std::string> alphabet,
                        const FitOptions& options) {
    if (sequences.empty()) throw ValidationError("fit: no sequences");
    if (options.n_states < 1) throw ValidationError("fit: n_states must be >= 1");
    if (alphabet.size() < 2) throw ValidationError("fit: alphabet needs at least 2 symbols");
    if (options.restarts < 1) throw ValidationError("fit: restarts must be >= 1");
    if (options.smoothing < 0.0) throw ValidationError("fit: smoothing must be >= 0");
    const int m = static_cast<int>(alphabet.size());
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        for (std::size_t t = 0; t < sequences[s].size(); ++t) {
            const int o = sequences[s][t];
            if (o < 0 || o >= m) {
                throw ValidationError("fit: sequence " + std::to_string(s) + " position " + std::to_string(t) +
                                      " holds symbol index " + std::to_string(o) + " outside the alphabet");
            }
        }
    }
    if (total_symbols(sequences) == 0) throw ValidationError("fit: all sequences are empty");
}

FitResult assemble(std::vector<RestartRun> runs, std::size_t n_states, std::size_t n_observed) {
    FitResult result;
    std::optional<std::size_t> best;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto& t = runs[r].trace;
        if (t.discarded) continue;
        if (!best || t.log_likelihood > runs[*best].trace.log_likelihood) best = r;
    }
    for (auto& run : runs) result.restarts.push_back(run.trace);
    if (!best) {
        throw ComputeError("fit: every EM restart produced a non-finite log-likelihood for N=" +
                           std::to_string(n_states) + "; increase smoothing");
    }
    result.model = std::move(runs[*best].model);
    result.log_likelihood = result.restarts[*best].log_likelihood;
    result.n_iterations = result.restarts[*best].iterations;
    result.converged = result.restarts[*best].converged;
    result.restart_index = *best;
    const std::size_t discarded = static_cast<std::size_t>(
        std::count_if(result.restarts.begin(), result.restarts.end(), [](const auto& t) { return t.discarded; }));
    if (discarded > 0) {
        result.warnings.push_back(std::to_string(discarded) + " restart(s) discarded for non-finite likelihood");
    }
    if (n_states > n_observed) {
        result.warnings.push_back("n_states (" + std::to_string(n_states) + ") exceeds the number of observed symbols (" +
                                  std::to_string(n_observed) + ")");
    }
    if (!result.converged) {
        result.warnings.push_back("best restart stopped at max_iter without reaching tol");
    }
    return result;
}

}  // namespace

// ------------------------------------------------------------------ model

int CategoricalHmm::symbol_index(std::string_view symbol) const {
    for (std::size_t k = 0; k < alphabet.size(); ++k) {
        if (alphabet[k] == symbol) return static_cast<int>(k);
    }
    return -1;
}

void CategoricalHmm::validate(double tol) const {
    const std::size_t n = n_states();
    const std::size_t m = n_symbols();
    if (n < 1) throw ValidationError("hmm: needs at least one state");
    if (m < 2) throw ValidationError("hmm: alphabet needs at least 2 symbols");
    if (transition.rows() != n || transition.cols() != n) throw ValidationError("hmm: transition must be N x N");
    if (emission.rows() != n || emission.cols() != m) throw ValidationError("hmm: emission must be N x M");
    auto check_row = [&](std::span<const double> row, const std::string& what) {
        double s = 0.0;
        for (double x : row) {
            if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError("hmm: " + what + " has a negative or non-finite entry");
            s += x;
        }
        if (std::abs(s - 1.0) > tol) throw ValidationError("hmm: " + what + " sums to " + csv::format_double(s));
    };
    check_row(initial, "initial distribution");
    for (std::size_t i = 0; i < n; ++i) {
        check_row(transition.row(i), "transition row " + std::to_string(i));
        check_row(emission.row(i), "emission row " + std::to_string(i));
    }
}

CategoricalHmm CategoricalHmm::permuted(std::span<const std::size_t> p) const {
    const std::size_t n = n_states();
    if (p.size() != n) throw ValidationError("hmm: permutation size mismatch");
    CategoricalHmm out{alphabet, std::vector<double>(n), Matrix(n, n), Matrix(n, n_symbols())};
    for (std::size_t i = 0; i < n; ++i) {
        out.initial[p[i]] = initial[i];
        for (std::size_t j = 0; j < n; ++j) out.transition(p[i], p[j]) = transition(i, j);
        for (std::size_t k = 0; k < n_symbols(); ++k) out.emission(p[i], k) = emission(i, k);
    }
    return out;
}

std::vector<Observations> encode(std::span<const ProcessSequence> sequences, std::span<const std::string> alphabet) {
    std::vector<Observations> out;
    out.reserve(sequences.size());
    for (const auto& seq : sequences) {
        Observations obs;
        obs.reserve(seq.codes.size());
        for (std::size_t t = 0; t < seq.codes.size(); ++t) {
            const auto it = std::find(alphabet.begin(), alphabet.end(), seq.codes[t]);
            if (it == alphabet.end()) {
                throw ValidationError("learner '" + seq.learner_id + "' index " + std::to_string(t) + ": symbol '" +
                                      seq.codes[t] + "' is not in the model alphabet");
            }
            obs.push_back(static_cast<int>(it - alphabet.begin()));
        }
        out.push_back(std::move(obs));
    }
    return out;
}

// ------------------------------------------------------------- likelihood

double log_likelihood(const CategoricalHmm& model, std::span<const int> obs) {
    check_observations(model, obs);
    if (obs.empty()) return 0.0;
    const std::size_t n = model.n_states();
    const LogModel lm = to_log(model);
    std::vector<double> alpha(n), next(n), terms(n);
    for (std::size_t i = 0; i < n; ++i) alpha[i] = lm.initial[i] + lm.emission(i, static_cast<std::size_t>(obs[0]));
    for (std::size_t t = 1; t < obs.size(); ++t) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) terms[i] = alpha[i] + lm.transition(i, j);
            next[j] = log_sum_exp(terms) + lm.emission(j, static_cast<std::size_t>(obs[t]));
        }
        std::swap(alpha, next);
    }
    return log_sum_exp(alpha);
}

double log_likelihood(const CategoricalHmm& model, std::span<const Observations> sequences) {
    double total = 0.0;
    for (const auto& obs : sequences) total += log_likelihood(model, obs);
    return total;
}

double log_likelihood(const CategoricalHmm& model, std::span<const ProcessSequence> sequences) {
    const auto encoded = encode(sequences, model.alphabet);
    return log_likelihood(model, std::span<const Observations>(encoded));
}

Posteriors forward_backward(const CategoricalHmm& model, std::span<const int> obs) {
    check_observations(model, obs);
    const std::size_t n = model.n_states();
    const std::size_t len = obs.size();
    const LogModel lm = to_log(model);
    Posteriors post{Matrix(len, n, kNegInf), Matrix(len, n, kNegInf), Matrix(len, n, 0.0), 0.0, 0.0};
    if (len == 0) return post;
    std::vector<double> terms(n);

    for (std::size_t i = 0; i < n; ++i) {
        post.log_alpha(0, i) = lm.initial[i] + lm.emission(i, static_cast<std::size_t>(obs[0]));
    }
    for (std::size_t t = 1; t < len; ++t) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < n; ++i) terms[i] = post.log_alpha(t - 1, i) + lm.transition(i, j);
            post.log_alpha(t, j) = log_sum_exp(terms) + lm.emission(j, static_cast<std::size_t>(obs[t]));
        }
    }
    for (std::size_t i = 0; i < n; ++i) post.log_beta(len - 1, i) = 0.0;
    for (std::size_t t = len - 1; t-- > 0;) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                terms[j] = lm.transition(i, j) + lm.emission(j, static_cast<std::size_t>(obs[t + 1])) +
                           post.log_beta(t + 1, j);
            }
            post.log_beta(t, i) = log_sum_exp(terms);
        }
    }
    post.log_likelihood = log_sum_exp(post.log_alpha.row(len - 1));
    for (std::size_t i = 0; i < n; ++i) {
        terms[i] = lm.initial[i] + lm.emission(i, static_cast<std::size_t>(obs[0])) + post.log_beta(0, i);
    }
    post.log_likelihood_backward = log_sum_exp(terms);
    if (std::isfinite(post.log_likelihood)) {
        for (std::size_t t = 0; t < len; ++t)
            for (std::size_t i = 0; i < n; ++i)
                post.state_marginals(t, i) =
                    std::exp(post.log_alpha(t, i) + post.log_beta(t, i) - post.log_likelihood);
    }
    return post;
}

// --------------------------------------------------------------- decoding

DecodedPath viterbi(const CategoricalHmm& model, std::span<const int> obs) {
    check_observations(model, obs);
    DecodedPath out;
    const std::size_t len = obs.size();
    if (len == 0) return out;
    const std::size_t n = model.n_states();
    const LogModel lm = to_log(model);
    std::vector<double> delta(n), next(n);
    std::vector<int> back(len * n, 0);

    for (std::size_t i = 0; i < n; ++i) delta[i] = lm.initial[i] + lm.emission(i, static_cast<std::size_t>(obs[0]));
    for (std::size_t t = 1; t < len; ++t) {
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t arg = 0;
            double best = delta[0] + lm.transition(0, j);
            for (std::size_t i = 1; i < n; ++i) {
                const double v = delta[i] + lm.transition(i, j);
                if (v > best) {  // strict: lower index wins ties
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + lm.emission(j, static_cast<std::size_t>(obs[t]));
            back[t * n + j] = static_cast<int>(arg);
        }
        std::swap(delta, next);
    }
    std::size_t last = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (delta[i] > delta[last]) last = i;
    }
    if (delta[last] == kNegInf) {
        throw ComputeError("viterbi: sequence has zero probability under the model; refit with smoothing > 0");
    }
    out.log_probability = delta[last];
    out.states.resize(len);
    out.states[len - 1] = static_cast<int>(last);
    for (std::size_t t = len - 1; t > 0; --t) {
        out.states[t - 1] = back[t * n + static_cast<std::size_t>(out.states[t])];
    }
    return out;
}

TacticSequence decode(const CategoricalHmm& model, const ProcessSequence& sequence) {
    const auto encoded = encode(std::span<const ProcessSequence>(&sequence, 1), model.alphabet);
    try {
        return {sequence.learner_id, viterbi(model, encoded.front()).states};
    } catch (const ComputeError& e) {
        throw ComputeError("learner '" + sequence.learner_id + "': " + e.what());
    }
}

// ------------------------------------------------------------- estimation

FitResult fit(std::span<const Observations> sequences, std::span<const std::string> alphabet,
              const FitOptions& options) {
    validate_fit_input(sequences, alphabet, options);
    std::vector<RestartRun> runs(options.restarts);
    parallel_for(options.restarts, options.threads, [&](std::size_t r) {
        runs[r] = run_em(sequences, alphabet, options.n_states, derive_seed(options.seed, r), options);
    });
    return assemble(std::move(runs), options.n_states, total_symbols(sequences));
}

FitResult fit(std::span<const ProcessSequence> sequences, std::span<const std::string> alphabet,
              const FitOptions& options) {
    const auto encoded = encode(sequences, alphabet);
    return fit(std::span<const Observations>(encoded), alphabet, options);
}

std::string_view criterion_name(Criterion c) {
    switch (c) {
        case Criterion::aic: return "aic";
        case Criterion::bic: return "bic";
        case Criterion::ll: return "ll";
    }
    return "bic";
}

Criterion parse_criterion(std::string_view name) {
    if (name == "aic") return Criterion::aic;
    if (name == "bic") return Criterion::bic;
    if (name == "ll") return Criterion::ll;
    throw ValidationError("unknown selection criterion '" + std::string(name) + "' (expected aic|bic|ll)");
}

ModelSelectionReport select_state_count(std::span<const Observations> sequences,
                                        std::span<const std::string> alphabet, const SelectionOptions& options,
                                        std::vector<std::optional<FitResult>>* fits) {
    if (options.min_states < 1 || options.max_states < options.min_states) {
        throw ValidationError("select_state_count: empty or invalid state range");
    }
    {
        FitOptions probe = options.fit;
        probe.n_states = options.min_states;
        validate_fit_input(sequences, alphabet, probe);
    }
    const std::size_t n_candidates = options.max_states - options.min_states + 1;
    const std::size_t restarts = options.fit.restarts;
    const std::size_t n_obs = total_symbols(sequences);

    // Every (candidate, restart) pair is an independent work unit.
    std::vector<RestartRun> runs(n_candidates * restarts);
    std::vector<std::string> errors(n_candidates * restarts);
    parallel_for(runs.size(), options.fit.threads, [&](std::size_t unit) {
        const std::size_t c = unit / restarts;
        const std::size_t r = unit % restarts;
        const std::size_t n_states = options.min_states + c;
        try {
            runs[unit] = run_em(sequences, alphabet, n_states,
                                derive_seed(derive_seed(options.fit.seed, n_states), r), options.fit);
        } catch (const std::exception& e) {
            errors[unit] = e.what();
        }
    });

    ModelSelectionReport report;
    report.criterion = options.criterion;
    if (fits) fits->assign(n_candidates, std::nullopt);
    for (std::size_t c = 0; c < n_candidates; ++c) {
        CandidateScore score;
        score.n_states = options.min_states + c;
        score.k = free_parameters(score.n_states, alphabet.size());
        score.n_observations = n_obs;
        try {
            for (std::size_t r = 0; r < restarts; ++r) {
                if (!errors[c * restarts + r].empty()) throw ComputeError(errors[c * restarts + r]);
            }
            std::vector<RestartRun> group(std::make_move_iterator(runs.begin() + static_cast<std::ptrdiff_t>(c * restarts)),
                                          std::make_move_iterator(runs.begin() + static_cast<std::ptrdiff_t>((c + 1) * restarts)));
            FitResult result = assemble(std::move(group), score.n_states, n_obs);
            score.log_likelihood = result.log_likelihood;
            const double k = static_cast<double>(score.k);
            score.aic = 2.0 * k - 2.0 * score.log_likelihood;
            score.bic = k * std::log(static_cast<double>(n_obs)) - 2.0 * score.log_likelihood;
            if (fits) (*fits)[c] = std::move(result);
        } catch (const std::exception& e) {
            score.failed = true;
            score.error = e.what();
        }
        report.candidates.push_back(std::move(score));
    }

    for (const auto& s : report.candidates) {
        if (s.failed) continue;
        auto better = [&](std::optional<std::size_t>& best, double value, double current, bool lower) {
            if (!best || (lower ? value < current : value > current)) best = s.n_states;
        };
        auto score_of = [&](std::size_t n_states) -> const CandidateScore& {
            return report.candidates[n_states - options.min_states];
        };
        better(report.best_aic, s.aic, report.best_aic ? score_of(*report.best_aic).aic : 0.0, true);
        better(report.best_bic, s.bic, report.best_bic ? score_of(*report.best_bic).bic : 0.0, true);
        better(report.best_ll, s.log_likelihood, report.best_ll ? score_of(*report.best_ll).log_likelihood : 0.0,
               false);
    }
    if (!report.best_bic) throw ComputeError("select_state_count: every candidate state count failed to fit");
    switch (options.criterion) {
        case Criterion::aic: report.selected = *report.best_aic; break;
        case Criterion::bic: report.selected = *report.best_bic; break;
        case Criterion::ll: report.selected = *report.best_ll; break;
    }
    if (*report.best_aic != *report.best_bic || *report.best_bic != *report.best_ll) {
        report.notes.push_back("criteria disagree: AIC selects " + std::to_string(*report.best_aic) + ", BIC selects " +
                               std::to_string(*report.best_bic) + ", LL selects " + std::to_string(*report.best_ll));
    }
    for (const auto& s : report.candidates) {
        if (s.failed) report.notes.push_back("N=" + std::to_string(s.n_states) + " failed: " + s.error);
    }
    return report;
}

// --------------------------------------------------------------- sampling

SampledSequence sample(const CategoricalHmm& model, std::size_t length, Rng& rng) {
    if (length == 0) throw ValidationError("sample: length must be >= 1");
    SampledSequence out;
    out.states.resize(length);
    out.symbols.resize(length);
    std::size_t state = rng.categorical(model.initial);
    for (std::size_t t = 0; t < length; ++t) {
        if (t > 0) state = rng.categorical(model.transition.row(state));
        out.states[t] = static_cast<int>(state);
        out.symbols[t] = static_cast<int>(rng.categorical(model.emission.row(state)));
    }
    return out;
}

SampledSequence sample(const CategoricalHmm& model, std::size_t length, std::uint64_t seed) {
    Rng rng(seed);
    return sample(model, length, rng);
}

ProcessSequence to_process_sequence(const CategoricalHmm& model, std::string learner_id, std::span<const int> symbols) {
    ProcessSequence out{std::move(learner_id), {}};
    out.codes.reserve(symbols.size());
    for (int s : symbols) out.codes.push_back(model.alphabet.at(static_cast<std::size_t>(s)));
    return out;
}

// ---------------------------------------------------------------- exports

namespace {

nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& doc, std::string_view what) {
    if (!doc.is_array() || doc.empty()) throw ValidationError("hmm: '" + std::string(what) + "' must be a nonempty array");
    const std::size_t cols = doc[0].size();
    Matrix m(doc.size(), cols);
    for (std::size_t r = 0; r < doc.size(); ++r) {
        if (!doc[r].is_array() || doc[r].size() != cols) {
            throw ValidationError("hmm: '" + std::string(what) + "' rows must have equal length");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            if (!doc[r][c].is_number()) throw ValidationError("hmm: '" + std::string(what) + "' holds a non-number");
            m(r, c) = doc[r][c].get<double>();
        }
    }
    return m;
}

}  // namespace

nlohmann::json to_json(const CategoricalHmm& model) {
    return {{"alphabet", model.alphabet},
            {"n_states", model.n_states()},
            {"initial", model.initial},
            {"transition", matrix_json(model.transition)},
            {"emission", matrix_json(model.emission)}};
}

CategoricalHmm hmm_from_json(const nlohmann::json& doc) {
    const std::string_view ctx = "hmm";
    jsonu::require_keys(doc, {"alphabet", "n_states", "initial", "transition", "emission", "fit"}, ctx);
    CategoricalHmm model{jsonu::get<std::vector<std::string>>(doc, "alphabet", ctx),
                         jsonu::get<std::vector<double>>(doc, "initial", ctx),
                         matrix_from_json(doc.at("transition"), "transition"),
                         matrix_from_json(doc.at("emission"), "emission")};
    if (doc.contains("n_states") && jsonu::get<std::size_t>(doc, "n_states", ctx) != model.n_states()) {
        throw ValidationError("hmm: n_states disagrees with the initial distribution length");
    }
    model.validate(1e-6);
    return model;
}

nlohmann::json to_json(const FitResult& fit) {
    nlohmann::json restarts = nlohmann::json::array();
    for (const auto& t : fit.restarts) {
        restarts.push_back({{"seed", t.seed},
                            {"iterations", t.iterations},
                            {"converged", t.converged},
                            {"discarded", t.discarded},
                            {"log_likelihood", std::isfinite(t.log_likelihood) ? nlohmann::json(t.log_likelihood)
                                                                                : nlohmann::json(nullptr)}});
    }
    nlohmann::json doc = to_json(fit.model);
    doc["fit"] = {{"log_likelihood", fit.log_likelihood},
                  {"n_iterations", fit.n_iterations},
                  {"converged", fit.converged},
                  {"restart_index", fit.restart_index},
                  {"restarts", std::move(restarts)},
                  {"warnings", fit.warnings}};
    return doc;
}

nlohmann::json to_json(const ModelSelectionReport& report) {
    nlohmann::json candidates = nlohmann::json::array();
    for (const auto& c : report.candidates) {
        nlohmann::json item = {{"n_states", c.n_states}, {"failed", c.failed}, {"k", c.k},
                               {"n_observations", c.n_observations}};
        if (c.failed) {
            item["error"] = c.error;
        } else {
            item["log_likelihood"] = c.log_likelihood;
            item["aic"] = c.aic;
            item["bic"] = c.bic;
        }
        candidates.push_back(std::move(item));
    }
    auto opt = [](const std::optional<std::size_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"candidates", std::move(candidates)},
            {"best_aic", opt(report.best_aic)},
            {"best_bic", opt(report.best_bic)},
            {"best_ll", opt(report.best_ll)},
            {"criterion", criterion_name(report.criterion)},
            {"selected", report.selected},
            {"notes", report.notes}};
}

void write_emission_csv(const std::string& path, const CategoricalHmm& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write file");
    csv::Row header{"state"};
    header.insert(header.end(), model.alphabet.begin(), model.alphabet.end());
    csv::write_row(out, header);
    for (std::size_t i = 0; i < model.n_states(); ++i) {
        csv::Row row{std::to_string(i)};
        for (double p : model.emission.row(i)) row.push_back(csv::format_double(p));
        csv::write_row(out, row);
    }
}

void write_transition_csv(const std::string& path, const CategoricalHmm& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write file");
    csv::Row header{"state"};
    for (std::size_t j = 0; j < model.n_states(); ++j) header.push_back(std::to_string(j));
    csv::write_row(out, header);
    for (std::size_t i = 0; i < model.n_states(); ++i) {
        csv::Row row{std::to_string(i)};
        for (double p : model.transition.row(i)) row.push_back(csv::format_double(p));
        csv::write_row(out, row);
    }
}

void write_selection_csv(const std::string& path, const ModelSelectionReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write file");
    csv::write_row(out, {"n_states", "k", "n_observations", "log_likelihood", "aic", "bic", "failed"});
    for (const auto& c : report.candidates) {
        csv::write_row(out, {std::to_string(c.n_states), std::to_string(c.k), std::to_string(c.n_observations),
                             c.failed ? "" : csv::format_double(c.log_likelihood),
                             c.failed ? "" : csv::format_double(c.aic), c.failed ? "" : csv::format_double(c.bic),
                             c.failed ? "true" : "false"});
    }
}

}  // namespace srl
