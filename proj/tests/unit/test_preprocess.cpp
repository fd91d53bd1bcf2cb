#include <doctest.h>

#include <cmath>
#include <set>

#include "srl/core.hpp"
#include "srl/preprocess.hpp"
#include "srl/rng.hpp"

using namespace srl;

namespace {

ProcessSequence seq(std::string id, std::vector<std::string> codes) { return {std::move(id), std::move(codes)}; }

ProcessSequence of_length(std::string id, std::size_t n) { return {std::move(id), std::vector<std::string>(n, "LCF")}; }

}  // namespace

TEST_CASE("GenAI filter keeps only learners with a CHATGPT code") {
    const std::vector<ProcessSequence> in{seq("a", {"LCF", "CHATGPT", "HCEO"}), seq("b", {"LCF", "HCEO"})};
    std::vector<Exclusion> excluded;
    const auto kept = filter_genai_users(in, &excluded);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].learner_id == "a");
    REQUIRE(excluded.size() == 1);
    CHECK(excluded[0].learner_id == "b");
    CHECK(excluded[0].reason == "no_genai_use");
}

TEST_CASE("a 241-learner cohort with 165 GenAI users keeps 165") {
    std::vector<ProcessSequence> in;
    for (int i = 0; i < 241; ++i) {
        auto s = seq("L" + std::to_string(i), {"LCF", "HCEO"});
        if (i % 241 < 165) s.codes.push_back("CHATGPT");
        in.push_back(s);
    }
    CHECK(filter_genai_users(in).size() == 165);
}

TEST_CASE("uninformative entries are removed") {
    CHECK(drop_uninformative(seq("a", {"LCF", "NOT_RECOGNIZED", "HCEO"})).codes ==
          std::vector<std::string>{"LCF", "HCEO"});
    CHECK(drop_uninformative(seq("a", {"nan", "MCO"})).codes == std::vector<std::string>{"MCO"});
    CHECK(drop_uninformative(seq("a", {"MCO", "MCP"})).codes == std::vector<std::string>{"MCO", "MCP"});
    CHECK(drop_uninformative(seq("a", {"NOT_RECOGNIZED"})).codes.empty());

    PreprocessOptions opts;
    opts.genai_filter = false;
    const auto r = preprocess_cohort(std::vector{seq("a", {"NOT_RECOGNIZED"}), of_length("b", 3), of_length("c", 3)},
                                     opts);
    CHECK(r.sequences.size() == 2);
    REQUIRE(r.report.exclusions.size() == 1);
    CHECK(r.report.exclusions[0].reason == "empty_after_cleaning");
}

TEST_CASE("equal lengths remove nothing") {
    std::vector<ProcessSequence> in;
    for (int i = 0; i < 10; ++i) in.push_back(of_length("L" + std::to_string(i), 50));
    const auto r = remove_length_outliers(in);
    CHECK(r.kept.size() == 10);
    CHECK(r.sd == 0.0);
}

TEST_CASE("a length-600 learner among N(200,10) lengths is removed") {
    Rng rng(11);
    std::vector<ProcessSequence> in;
    std::vector<double> lengths;
    for (int i = 0; i < 49; ++i) {
        const auto n = static_cast<std::size_t>(std::lround(rng.normal(200.0, 10.0)));
        in.push_back(of_length("L" + std::to_string(i), n));
        lengths.push_back(static_cast<double>(n));
    }
    in.push_back(of_length("big", 600));
    lengths.push_back(600.0);

    // direct-formula oracle
    double mean = 0.0;
    for (double x : lengths) mean += x;
    mean /= static_cast<double>(lengths.size());
    double ss = 0.0;
    for (double x : lengths) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(lengths.size() - 1));
    std::set<std::string> expected_out;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (std::abs(lengths[i] - mean) / sd > 3.0) expected_out.insert(in[i].learner_id);
    }
    CHECK(expected_out == std::set<std::string>{"big"});

    const auto r = remove_length_outliers(in, 3.0, true);
    CHECK(r.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(r.sd == doctest::Approx(sd).epsilon(1e-12));
    std::set<std::string> got;
    for (const auto& e : r.excluded) got.insert(e.learner_id);
    CHECK(got == expected_out);
    CHECK(r.kept.size() == 49);
}

TEST_CASE("outlier filter needs two sequences") {
    CHECK_THROWS_AS(remove_length_outliers(std::vector{of_length("a", 3)}), ValidationError);
}

TEST_CASE("full cohort preprocessing reports counts in filter order") {
    std::vector<ProcessSequence> in{seq("nogen", {"LCF"}), seq("short", {"CHATGPT", "NOT_RECOGNIZED"})};
    for (int i = 0; i < 20; ++i) {
        auto s = of_length("L" + std::to_string(i), 30 + static_cast<std::size_t>(i % 3));
        s.codes.push_back("CHATGPT");
        in.push_back(s);
    }
    const auto r = preprocess_cohort(in);
    CHECK(r.report.n_input == 22);
    CHECK(r.report.n_after_genai_filter == 21);
    CHECK(r.report.n_after_uninformative == 21);
    // "short" (length 1 against ~32) has z = 4.33
    CHECK(r.report.n_after_outlier_removal == 20);
    CHECK(r.sequences.size() == 20);
    const auto j = to_json(r.report);
    CHECK(j.contains("exclusions"));
}
