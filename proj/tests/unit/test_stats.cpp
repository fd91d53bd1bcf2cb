#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "helpers.hpp"
#include "srl/core.hpp"
#include "srl/json_util.hpp"
#include "srl/rng.hpp"
#include "srl/stats.hpp"

using namespace srl;
using nlohmann::json;

namespace {

json oracle(const char* name) { return jsonu::read_file(std::string(SRL_TEST_DATA_DIR) + "/" + name); }

std::vector<double> draw_normal(Rng& rng, std::size_t n, double mean, double sd) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(mean, sd);
    return v;
}

}  // namespace

TEST_CASE("Shapiro-Wilk preconditions") {
    const std::vector<double> two{1.0, 2.0};
    CHECK_THROWS_AS(shapiro_wilk(two), ValidationError);
    const std::vector<double> flat{3.0, 3.0, 3.0, 3.0};
    CHECK_THROWS_AS(shapiro_wilk(flat), ValidationError);
    const std::vector<double> big(5001, 1.0);
    CHECK_THROWS_AS(shapiro_wilk(big), ValidationError);
}

TEST_CASE("Shapiro-Wilk matches the reference on a seeded uniform sample of 50") {
    const auto fx = oracle("shapiro_oracle.json")["uniform_n50"];
    const auto values = fx["values"].get<std::vector<double>>();
    const auto r = shapiro_wilk(values);
    CHECK(r.n == 50);
    CHECK(std::abs(r.w - fx["W"].get<double>()) < 1e-3);
    CHECK(std::abs(r.p - fx["p"].get<double>()) < 0.10 * fx["p"].get<double>());
}

TEST_CASE("Shapiro-Wilk matches the reference across sizes and shapes") {
    for (const auto& c : oracle("shapiro_oracle.json")["cases"]) {
        const auto values = c["values"].get<std::vector<double>>();
        const auto r = shapiro_wilk(values);
        INFO("n = " << values.size() << ", kind = " << c["kind"].get<std::string>());
        CHECK(std::abs(r.w - c["W"].get<double>()) < 1e-3);
        const double p = c["p"].get<double>();
        if (p > 1e-6) CHECK(std::abs(r.p - p) < 0.10 * p + 1e-4);
    }
}

TEST_CASE("Shapiro-Wilk rarely rejects Gaussian samples") {
    int accepted = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(31, seed));
        const auto x = draw_normal(rng, 100, 10.0, 3.0);
        if (shapiro_wilk(x).p > 0.05) ++accepted;
    }
    CHECK(accepted >= 18);
}

TEST_CASE("Mann-Whitney basic cases") {
    SUBCASE("complete separation") {
        const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
        const auto r = mann_whitney_u(a, b, {.method = UTestMethod::exact});
        CHECK(r.u == 0.0);
        CHECK(r.u_a == 0.0);
        CHECK(r.u_b == 9.0);
        REQUIRE(r.p_exact);
        CHECK(*r.p_exact == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(r.method == "exact");
        CHECK(r.z < 0.0);
    }
    SUBCASE("identical multisets") {
        const std::vector<double> a{1, 2, 3, 4}, b{4, 3, 2, 1};
        const auto r = mann_whitney_u(a, b);
        CHECK(r.u == 8.0);
        CHECK(r.p == doctest::Approx(1.0));
    }
    SUBCASE("all values equal") {
        const std::vector<double> a{2, 2}, b{2, 2, 2};
        const auto r = mann_whitney_u(a, b);
        CHECK(r.z == 0.0);
        CHECK(r.p == 1.0);
    }
    SUBCASE("method selection") {
        const std::vector<double> a{1, 2, 3, 4, 5, 6, 7}, b{8, 9, 10, 11, 12, 13};
        CHECK(mann_whitney_u(a, b).method == "normal");  // 13 > 12
        CHECK(mann_whitney_u(a, b, {.exact_threshold = 13}).method == "exact");
        CHECK(mann_whitney_u(a, b, {.method = UTestMethod::normal}).method == "normal");
        CHECK_THROWS_AS(mann_whitney_u(std::vector<double>{}, b), ValidationError);
    }
}

TEST_CASE("Mann-Whitney matches reference values") {
    for (const auto& c : oracle("mwu_oracle.json")["cases"]) {
        const auto a = c["a"].get<std::vector<double>>();
        const auto b = c["b"].get<std::vector<double>>();
        const auto r = mann_whitney_u(a, b, {.method = UTestMethod::exact});
        INFO("n_a = " << a.size() << ", n_b = " << b.size());
        CHECK(r.u_a == doctest::Approx(c["U_a"].get<double>()));
        CHECK(r.p_normal == doctest::Approx(c["p_normal"].get<double>()).epsilon(1e-9));
        if (c.contains("p_exact")) {
            REQUIRE(r.p_exact);
            CHECK(*r.p_exact == doctest::Approx(c["p_exact"].get<double>()).epsilon(1e-9));
        }
    }
}

TEST_CASE("Mann-Whitney normal approximation is close to exact for 6 vs 6") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(41, seed));
        const auto a = draw_normal(rng, 6, 0.0, 1.0);
        const auto b = draw_normal(rng, 6, 0.5, 1.0);
        const auto r = mann_whitney_u(a, b, {.method = UTestMethod::exact});
        REQUIRE(r.p_exact);
        CHECK(std::abs(r.p_normal - *r.p_exact) <= 0.02);
    }
}

TEST_CASE("Mann-Whitney invariants") {
    Rng rng(51);
    for (int rep = 0; rep < 50; ++rep) {
        auto a = draw_normal(rng, 1 + rng.below(15), 0.0, 1.0);
        auto b = draw_normal(rng, 1 + rng.below(15), 0.3, 1.0);
        for (auto& x : a) x = std::round(x * 2.0);  // force some ties
        const auto r = mann_whitney_u(a, b);
        CHECK(r.u_a + r.u_b == doctest::Approx(static_cast<double>(a.size() * b.size())));
        CHECK(r.u == std::min(r.u_a, r.u_b));
        CHECK(r.p >= 0.0);
        CHECK(r.p <= 1.0);
        auto ea = a, eb = b;
        for (auto& x : ea) x = std::exp(x);
        for (auto& x : eb) x = std::exp(x);
        const auto e = mann_whitney_u(ea, eb);
        CHECK(e.u_a == r.u_a);
        CHECK(e.p == r.p);
    }
}

TEST_CASE("rank-biserial effect size") {
    CHECK(std::abs(effect_size_r(481.5, 89, 16) - 0.324) <= 0.001);
    CHECK(std::abs(effect_size_r(402.0, 16, 34) - 0.478) <= 0.001);
    CHECK(std::abs(effect_size_r(1726.5, 34, 89) - 0.141) <= 0.001);
    CHECK(effect_size_r(12.0, 4, 6) == 0.0);
    CHECK_THROWS_AS(effect_size_r(25.0, 4, 6), ValidationError);
}

TEST_CASE("Holm adjustment") {
    const std::vector<double> p{0.01, 0.04, 0.03};
    const auto adj = holm_adjust(p);
    CHECK(adj[0] == doctest::Approx(0.03));
    CHECK(adj[2] == doctest::Approx(0.06));
    CHECK(adj[1] == doctest::Approx(0.06));
}

TEST_CASE("group summary") {
    SUBCASE("identical score distributions give no significant pairs") {
        ScoreTable scores;
        std::map<std::string, int> labels;
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < 10; ++i) {
                const std::string id = std::to_string(c) + "_" + std::to_string(i);
                scores[id] = 10.0 + i;
                labels[id] = c;
            }
        }
        const auto g = group_summary(scores, labels);
        CHECK(g.pairs.size() == 3);
        for (const auto& p : g.pairs) CHECK_FALSE(p.significant);
        CHECK(g.groups.size() == 3);
        CHECK(g.groups[0].mean == doctest::Approx(14.5));
        CHECK(g.groups[0].sd == doctest::Approx(std::sqrt(82.5 / 9.0)));
    }
    SUBCASE("a shifted cluster is detected") {
        int detected = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(derive_seed(61, seed));
            ScoreTable scores;
            std::map<std::string, int> labels;
            const std::size_t sizes[] = {89, 16, 34};
            const double means[] = {15.0, 18.0, 15.0};
            for (int c = 0; c < 3; ++c) {
                for (std::size_t i = 0; i < sizes[c]; ++i) {
                    const std::string id = "c" + std::to_string(c) + "_" + std::to_string(i);
                    scores[id] = std::max(0.0, rng.normal(means[c], 2.0));
                    labels[id] = c;
                }
            }
            const auto g = group_summary(scores, labels);
            REQUIRE(g.pairs.size() == 3);
            bool both = true;
            for (const auto& p : g.pairs) {
                if (p.cluster_a == 1 || p.cluster_b == 1) both = both && p.significant;
            }
            if (both) ++detected;
        }
        CHECK(detected >= 18);
    }
    SUBCASE("unscored learners and empty clusters are warned about") {
        ScoreTable scores{{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}};
        std::map<std::string, int> labels{{"a", 0}, {"b", 0}, {"c", 1}, {"d", 1}, {"e", 1}, {"f", 2}};
        const auto g = group_summary(scores, labels);
        CHECK(g.pairs.size() == 1);
        CHECK(g.warnings.size() >= 2);
        const std::map<std::string, int> single{{"a", 0}, {"b", 0}};
        CHECK_THROWS_AS(group_summary(scores, single), ValidationError);
    }
}

TEST_CASE("score CSV") {
    test::TempDir dir("scores");
    const auto s = read_score_csv(dir.write("s.csv", "learner_id,score\nA,12.5\nB,0\n"));
    CHECK(s.at("A") == 12.5);
    CHECK_THROWS_AS(read_score_csv(dir.write("d.csv", "learner_id,score\nA,1\nA,2\n")), IngestError);
    CHECK_THROWS_AS(read_score_csv(dir.write("n.csv", "learner_id,score\nA,-1\n")), IngestError);
    CHECK_THROWS_AS(read_score_csv(dir.write("x.csv", "learner_id,score\nA,abc\n")), IngestError);
    CHECK_THROWS_AS(read_score_csv(dir.write("i.csv", "learner_id,score\nA,inf\n")), IngestError);
    write_score_csv(dir.file("o.csv"), s);
    CHECK(read_score_csv(dir.file("o.csv")) == s);
}
