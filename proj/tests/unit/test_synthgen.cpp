#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "srl/core.hpp"
#include "srl/json_util.hpp"
#include "srl/synthgen.hpp"

using namespace srl;

namespace {

CategoricalHmm deterministic(std::size_t m, int symbol) {
    CategoricalHmm h;
    h.alphabet = test::symbols(m);
    h.initial = {1.0};
    h.transition = Matrix(1, 1, 1.0);
    h.emission = Matrix(1, m, 0.0);
    h.emission(0, static_cast<std::size_t>(symbol)) = 1.0;
    return h;
}

CohortSpec two_archetypes(std::size_t n, std::uint64_t seed) {
    CohortSpec spec;
    spec.n_learners = n;
    spec.seed = seed;
    spec.min_length = 5;
    spec.max_length = 15;
    spec.archetypes = {{"a", 0.6, deterministic(3, 0), 10.0, 1.0}, {"b", 0.4, deterministic(3, 1), 20.0, 1.0}};
    return spec;
}

double emission_cost(const CategoricalHmm& t, const CategoricalHmm& f, const std::vector<std::size_t>& perm) {
    double cost = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t k = 0; k < t.n_symbols(); ++k) cost += std::abs(t.emission(i, k) - f.emission(perm[i], k));
    return cost;
}

}  // namespace

TEST_CASE("a deterministic single archetype gives identical streams") {
    CohortSpec spec;
    spec.n_learners = 20;
    spec.min_length = spec.max_length = 12;
    spec.archetypes = {{"only", 1.0, deterministic(4, 2), 10.0, 2.0}};
    const auto c = generate_cohort(spec);
    REQUIRE(c.sequences.size() == 20);
    for (const auto& s : c.sequences) CHECK(s.codes == c.sequences[0].codes);
    CHECK(c.sequences[0].codes == std::vector<std::string>(12, "s2"));
    CHECK(c.sequences[0].learner_id == "L0001");
    for (const auto& [id, score] : c.scores) CHECK(score >= 0.0);
}

TEST_CASE("archetype mix follows the weights") {
    const auto c = generate_cohort(two_archetypes(1000, 5));
    const auto first = std::count(c.archetypes.begin(), c.archetypes.end(), 0);
    CHECK(std::abs(static_cast<double>(first) - 600.0) <= 50.0);
    for (std::size_t i = 0; i < c.sequences.size(); ++i) {
        CHECK(c.sequences[i].codes.size() >= 5);
        CHECK(c.sequences[i].codes.size() <= 15);
        CHECK(c.tactic_paths[i].size() == c.sequences[i].codes.size());
    }
}

TEST_CASE("same seed gives the same cohort regardless of threads") {
    const auto a = generate_cohort(two_archetypes(200, 9), 1);
    const auto b = generate_cohort(two_archetypes(200, 9), 4);
    CHECK(a.sequences == b.sequences);
    CHECK(a.scores == b.scores);
    CHECK(a.archetypes == b.archetypes);
    const auto c = generate_cohort(two_archetypes(200, 10), 1);
    CHECK(a.archetypes != c.archetypes);
}

TEST_CASE("spec validation names the field") {
    auto spec = two_archetypes(10, 1);
    spec.min_length = 20;
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("length"), ValidationError);
    spec = two_archetypes(10, 1);
    spec.archetypes[1].weight = -1.0;
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("weight"), ValidationError);
    spec = two_archetypes(10, 1);
    spec.archetypes[1].generator.alphabet = test::symbols(4);
    CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("spec JSON round-trips; bundled spec loads") {
    const auto spec = two_archetypes(10, 3);
    const auto again = cohort_spec_from_json(to_json(spec));
    CHECK(to_json(again) == to_json(spec));
    auto bad = to_json(spec);
    bad["surprise"] = true;
    CHECK_THROWS_AS(cohort_spec_from_json(bad), ValidationError);

    const auto bundled =
        cohort_spec_from_json(jsonu::read_file(std::string(SRL_SOURCE_DIR) + "/data/synth/paperlike.json"));
    CHECK(bundled.archetypes.size() == 3);
    CHECK_NOTHROW(bundled.validate());
}

TEST_CASE("state alignment") {
    Rng rng(4);
    const auto truth = test::random_hmm(4, 6, rng);
    SUBCASE("identity") {
        const auto perm = align_states(truth, truth);
        CHECK(perm == std::vector<std::size_t>{0, 1, 2, 3});
        const auto e = recovery_error(truth, truth, perm);
        CHECK(e.emission_max_row_l1 == 0.0);
        CHECK(e.transition_max_row_l1 == 0.0);
        CHECK(e.initial_l1 == 0.0);
    }
    SUBCASE("swapped states") {
        const std::vector<std::size_t> p{1, 0, 2, 3};
        const auto fitted = truth.permuted(p);
        const auto perm = align_states(truth, fitted);
        CHECK(perm == p);
        const auto e = recovery_error(truth, fitted, perm);
        CHECK(e.emission_max_row_l1 == doctest::Approx(0.0));
        CHECK(e.transition_max_row_l1 == doctest::Approx(0.0));
        const auto aligned = apply_alignment(fitted, perm);
        CHECK(aligned.emission == truth.emission);
    }
    SUBCASE("brute force over all 24 permutations") {
        for (int rep = 0; rep < 20; ++rep) {
            const auto other = test::random_hmm(4, 6, rng);
            std::vector<std::size_t> p{0, 1, 2, 3};
            double best = 1e300;
            do best = std::min(best, emission_cost(truth, other, p));
            while (std::next_permutation(p.begin(), p.end()));
            CHECK(emission_cost(truth, other, align_states(truth, other)) == doctest::Approx(best).epsilon(1e-12));
        }
    }
    SUBCASE("mismatched dimensions") {
        CHECK_THROWS_AS(align_states(truth, test::random_hmm(3, 6, rng)), ValidationError);
    }
}

TEST_CASE("perturbations within rows bound the recovery error") {
    Rng rng(6);
    const auto truth = test::random_hmm(3, 4, rng, 5.0);
    const double eps = 0.01;
    auto fitted = truth;
    // move eps of mass from one cell to another in every row
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t k = i % 4;
        const std::size_t k2 = (i + 1) % 4;
        const double moved = std::min(eps, fitted.emission(i, k));
        fitted.emission(i, k) -= moved;
        fitted.emission(i, k2) += moved;
        const double tmoved = std::min(eps, fitted.transition(i, i));
        fitted.transition(i, i) -= tmoved;
        fitted.transition(i, (i + 1) % 3) += tmoved;
    }
    const auto e = recovery_error(truth, fitted, align_states(truth, fitted));
    CHECK(e.emission_max_row_l1 <= 2.0 * eps + 1e-12);
    CHECK(e.transition_max_row_l1 <= 2.0 * eps + 1e-12);
}
