#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "srl/core.hpp"
#include "srl/hmm.hpp"
#include "srl/rng.hpp"
#include "srl/trace_model.hpp"

using namespace srl;

namespace {

CategoricalHmm identity_hmm(std::size_t n, std::size_t start) {
    CategoricalHmm h;
    h.alphabet = test::symbols(n);
    h.initial.assign(n, 0.0);
    h.initial[start] = 1.0;
    h.transition = Matrix(n, n);
    h.emission = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) h.transition(i, i) = h.emission(i, i) = 1.0;
    return h;
}

std::vector<int> random_obs(std::size_t t, std::size_t m, Rng& rng) {
    std::vector<int> o(t);
    for (auto& x : o) x = static_cast<int>(rng.below(m));
    return o;
}

}  // namespace

TEST_CASE("single uniform state gives T ln(1/M)") {
    CategoricalHmm h;
    h.alphabet = test::symbols(4);
    h.initial = {1.0};
    h.transition = Matrix(1, 1, 1.0);
    h.emission = Matrix(1, 4, 0.25);
    const std::vector<int> obs{0, 3, 2};
    CHECK(log_likelihood(h, obs) == doctest::Approx(3.0 * std::log(0.25)).epsilon(1e-14));
}

TEST_CASE("forward LL equals the brute-force path sum") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const auto h = test::random_hmm(2, 3, rng);
        const auto obs = random_obs(6, 3, rng);
        const double want = test::brute_force_ll(h, obs);
        CHECK(log_likelihood(h, obs) == doctest::Approx(want).epsilon(1e-10));
        const auto fb = forward_backward(h, obs);
        CHECK(fb.log_likelihood == doctest::Approx(want).epsilon(1e-10));
        CHECK(fb.log_likelihood_backward == doctest::Approx(want).epsilon(1e-10));
        for (std::size_t t = 0; t < obs.size(); ++t) {
            double s = 0.0;
            for (std::size_t i = 0; i < 2; ++i) s += fb.state_marginals(t, i);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("LL of independent sequences adds up") {
    Rng rng(6);
    const auto h = test::random_hmm(3, 4, rng);
    const std::vector<Observations> seqs{random_obs(5, 4, rng), random_obs(9, 4, rng)};
    CHECK(log_likelihood(h, seqs) ==
          doctest::Approx(log_likelihood(h, seqs[0]) + log_likelihood(h, seqs[1])).epsilon(1e-13));
}

TEST_CASE("impossible sequences have LL -inf and Viterbi refuses them") {
    const auto h = identity_hmm(2, 0);
    const std::vector<int> obs{0, 1};
    CHECK(log_likelihood(h, obs) == -std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(viterbi(h, obs), ComputeError);
}

TEST_CASE("Viterbi on a deterministic chain") {
    const auto h = identity_hmm(3, 0);
    const std::vector<int> obs{0, 0, 0};
    const auto path = viterbi(h, obs);
    CHECK(path.states == std::vector<int>{0, 0, 0});
    CHECK(path.log_probability == doctest::Approx(0.0));
}

TEST_CASE("Viterbi equals the exhaustive argmax over 3^7 paths") {
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        const auto h = test::random_hmm(3, 4, rng);
        const auto obs = random_obs(7, 4, rng);
        const auto path = viterbi(h, obs);
        CHECK(path.states.size() == obs.size());
        const double best = test::brute_force_max(h, obs);
        CHECK(test::path_probability(h, path.states, obs) == doctest::Approx(best).epsilon(1e-12));
        CHECK(path.log_probability == doctest::Approx(std::log(best)).epsilon(1e-12));
    }
}

TEST_CASE("Viterbi ties go to the lower state index") {
    CategoricalHmm h;
    h.alphabet = test::symbols(2);
    h.initial = {0.5, 0.5};
    h.transition = Matrix(2, 2, 0.5);
    h.emission = Matrix(2, 2, 0.5);
    const std::vector<int> obs{1, 0, 1, 1};
    CHECK(viterbi(h, obs).states == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("decode preserves sequence length") {
    Rng rng(8);
    const auto h = test::random_hmm(3, 4, rng);
    const auto s = sample(h, 40, 99);
    const auto ps = to_process_sequence(h, "x", s.symbols);
    const auto t = decode(h, ps);
    CHECK(t.learner_id == "x");
    CHECK(t.states.size() == 40);
}

TEST_CASE("symbols outside the alphabet are named") {
    const auto h = identity_hmm(2, 0);
    const std::vector<ProcessSequence> seqs{{"L7", {"s0", "zz"}}};
    try {
        encode(seqs, h.alphabet);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("L7") != std::string::npos);
        CHECK(msg.find('1') != std::string::npos);
    }
}

TEST_CASE("free parameter count") {
    CHECK(free_parameters(9, 8) == 143);
    CHECK(free_parameters(1, 4) == 3);
}

TEST_CASE("sampling") {
    SUBCASE("B = I, A = I, pi = e1 emits only symbol 1") {
        const auto s = sample(identity_hmm(3, 1), 25, 1);
        for (int x : s.symbols) CHECK(x == 1);
        for (int x : s.states) CHECK(x == 1);
    }
    SUBCASE("empirical frequencies converge") {
        CategoricalHmm h;
        h.alphabet = test::symbols(3);
        h.initial = {1.0};
        h.transition = Matrix(1, 1, 1.0);
        h.emission = Matrix(1, 3);
        h.emission(0, 0) = 0.2;
        h.emission(0, 1) = 0.3;
        h.emission(0, 2) = 0.5;
        const auto s = sample(h, 100000, 3);
        std::vector<double> freq(3, 0.0);
        for (int x : s.symbols) freq[x] += 1.0 / 100000.0;
        CHECK(std::abs(freq[0] - 0.2) < 0.01);
        CHECK(std::abs(freq[1] - 0.3) < 0.01);
        CHECK(std::abs(freq[2] - 0.5) < 0.01);
    }
    SUBCASE("same seed, same output; T = 0 is an error") {
        Rng rng(9);
        const auto h = test::random_hmm(3, 4, rng);
        CHECK(sample(h, 30, 42).symbols == sample(h, 30, 42).symbols);
        CHECK(sample(h, 30, 42).states == sample(h, 30, 42).states);
        CHECK_THROWS_AS(sample(h, 0, 42), ValidationError);
    }
}

TEST_CASE("model validation and permutation") {
    Rng rng(10);
    auto h = test::random_hmm(3, 4, rng);
    CHECK_NOTHROW(h.validate());
    const std::vector<std::size_t> p{2, 0, 1};
    const auto q = h.permuted(p);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(q.initial[p[i]] == h.initial[i]);
        for (std::size_t k = 0; k < 4; ++k) CHECK(q.emission(p[i], k) == h.emission(i, k));
        for (std::size_t j = 0; j < 3; ++j) CHECK(q.transition(p[i], p[j]) == h.transition(i, j));
    }
    const std::vector<int> obs{0, 1, 2, 3, 0};
    CHECK(log_likelihood(q, obs) == doctest::Approx(log_likelihood(h, obs)).epsilon(1e-12));
    h.emission(0, 0) += 0.1;
    CHECK_THROWS_AS(h.validate(), ValidationError);
    CHECK(hmm_from_json(to_json(q)).emission == q.emission);
}

TEST_CASE("fit on a degenerate single-symbol source") {
    CategoricalHmm gen;
    gen.alphabet = informative_process_codes();
    gen.initial = {1.0};
    gen.transition = Matrix(1, 1, 1.0);
    gen.emission = Matrix(1, gen.alphabet.size(), 0.0);
    const int lcf = gen.symbol_index("LCF");
    REQUIRE(lcf >= 0);
    gen.emission(0, static_cast<std::size_t>(lcf)) = 1.0;

    std::vector<Observations> data;
    for (int i = 0; i < 20; ++i) data.push_back(sample(gen, 30, static_cast<std::uint64_t>(i)).symbols);
    FitOptions opts;
    opts.n_states = 1;
    opts.restarts = 2;
    opts.seed = 3;
    const auto fit1 = fit(data, gen.alphabet, opts);
    CHECK(fit1.model.emission(0, static_cast<std::size_t>(lcf)) > 0.99);
    CHECK_NOTHROW(fit1.model.validate(1e-9));

    // more states than observed symbols: warns, still fits
    const std::vector<Observations> tiny{{static_cast<int>(lcf), static_cast<int>(lcf), static_cast<int>(lcf)}};
    opts.n_states = 5;
    opts.max_iter = 20;
    const auto fit10 = fit(tiny, gen.alphabet, opts);
    bool warned = false;
    for (const auto& w : fit10.warnings) warned |= w.find("exceeds") != std::string::npos;
    CHECK(warned);
}

TEST_CASE("EM never decreases the likelihood and keeps rows stochastic") {
    Rng rng(12);
    const auto gen = test::random_hmm(3, 5, rng, 0.5);
    std::vector<Observations> data;
    for (int i = 0; i < 30; ++i) data.push_back(sample(gen, 40, 100 + static_cast<std::uint64_t>(i)).symbols);
    FitOptions opts;
    opts.n_states = 3;
    opts.restarts = 3;
    opts.seed = 77;
    opts.max_iter = 100;
    const auto r = fit(data, gen.alphabet, opts);
    for (const auto& tr : r.restarts) {
        for (std::size_t i = 1; i < tr.ll_trace.size(); ++i) CHECK(tr.ll_trace[i] >= tr.ll_trace[i - 1] - 1e-8);
        CHECK(tr.max_stochastic_deviation < 1e-9);
    }
    CHECK_NOTHROW(r.model.validate(1e-9));
    CHECK(r.log_likelihood == doctest::Approx(log_likelihood(r.model, data)).epsilon(1e-9));

    // thread count does not matter
    opts.threads = 1;
    const auto r1 = fit(data, gen.alphabet, opts);
    opts.threads = 3;
    const auto r3 = fit(data, gen.alphabet, opts);
    CHECK(r1.model.emission == r3.model.emission);
    CHECK(r1.log_likelihood == r3.log_likelihood);
}

TEST_CASE("model selection scores every N") {
    Rng rng(13);
    const auto gen = test::random_hmm(2, 4, rng, 0.3);
    std::vector<Observations> data;
    for (int i = 0; i < 20; ++i) data.push_back(sample(gen, 30, 500 + static_cast<std::uint64_t>(i)).symbols);
    SelectionOptions opts;
    opts.min_states = 1;
    opts.max_states = 4;
    opts.fit.restarts = 3;
    opts.fit.max_iter = 100;
    opts.fit.seed = 4;
    std::vector<std::optional<FitResult>> fits;
    const auto rep = select_state_count(data, gen.alphabet, opts, &fits);
    REQUIRE(rep.candidates.size() == 4);
    REQUIRE(fits.size() == 4);
    std::size_t total = 0;
    for (const auto& s : data) total += s.size();
    for (std::size_t i = 0; i < rep.candidates.size(); ++i) {
        const auto& c = rep.candidates[i];
        CHECK_FALSE(c.failed);
        CHECK(c.n_observations == total);
        CHECK(c.k == free_parameters(c.n_states, 4));
        CHECK(c.bic == doctest::Approx(-2.0 * c.log_likelihood + static_cast<double>(c.k) * std::log(total)));
        CHECK(c.aic == doctest::Approx(-2.0 * c.log_likelihood + 2.0 * static_cast<double>(c.k)));
        // a larger model can represent every smaller one; allow restart noise
        if (i > 0) CHECK(c.log_likelihood >= rep.candidates[i - 1].log_likelihood - 2.0);
    }
    REQUIRE(rep.best_bic);
    CHECK(rep.selected == *rep.best_bic);
    CHECK(to_json(rep).contains("candidates"));
}
