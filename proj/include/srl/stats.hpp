#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace srl {

/// learner_id -> score (nonnegative).
using ScoreTable = std::map<std::string, double>;

/// Reads `learner_id,score`. Rejects duplicate ids, non-numeric, negative and
/// non-finite scores with file:line messages.
ScoreTable read_score_csv(const std::string& path);
void write_score_csv(const std::string& path, const ScoreTable& scores);

struct ShapiroWilkResult {
    double w = 0.0;
    double p = 0.0;
    std::size_t n = 0;
};

/// Shapiro-Wilk W with Royston's (1995, AS R94) coefficient and p-value
/// approximations. Requires 3 <= n <= 5000 and nonzero range.
ShapiroWilkResult shapiro_wilk(std::span<const double> values);

enum class UTestMethod { automatic, exact, normal };

struct MannWhitneyOptions {
    UTestMethod method = UTestMethod::automatic;
    /// `automatic` enumerates exactly when n_a + n_b <= this.
    std::size_t exact_threshold = 12;
};

struct MannWhitneyResult {
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    double u_a = 0.0;  // R_a - n_a(n_a+1)/2
    double u_b = 0.0;  // n_a n_b - u_a
    double u = 0.0;    // min(u_a, u_b), the reported statistic
    /// Continuity-corrected, tie-corrected z; positive when group a ranks higher.
    double z = 0.0;
    double p = 1.0;         // two-sided, from `method`
    double p_normal = 1.0;  // always computed
    std::optional<double> p_exact;
    std::string method;     // "exact" or "normal"
};

/// Two-sided Mann-Whitney U test on midranks. The exact p-value is the
/// permutation probability (conditional on ties) of |U - n_a n_b / 2| at
/// least as large as observed.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 const MannWhitneyOptions& options = {});

/// Absolute rank-biserial correlation |1 - 2U / (n_a n_b)|.
double effect_size_r(double u, std::size_t n_a, std::size_t n_b);

/// Holm step-down adjusted p-values, returned in input order.
std::vector<double> holm_adjust(std::span<const double> p);

struct GroupSummary {
    int cluster = 0;
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;  // sample (n - 1); 0 when n == 1
};

struct PairComparison {
    int cluster_a = 0;
    int cluster_b = 0;
    MannWhitneyResult test;
    double r = 0.0;    // rank-biserial effect size
    double r_z = 0.0;  // |z| / sqrt(n_a + n_b)
    bool significant = false;
    double p_holm = 1.0;
    bool significant_holm = false;
};

struct GroupComparison {
    std::optional<ShapiroWilkResult> normality;  // pooled scores
    std::vector<GroupSummary> groups;
    std::vector<PairComparison> pairs;  // (a, b) with a < b
    double alpha = 0.05;
    std::vector<std::string> warnings;
};

struct GroupSummaryOptions {
    double alpha = 0.05;
    MannWhitneyOptions test;
};

/// Per-cluster summaries, pooled normality test and every pairwise U test.
/// Labeled learners without a score are excluded with a warning, as are
/// clusters left with no scores. Needs >= 2 scored clusters.
GroupComparison group_summary(const ScoreTable& scores, const std::map<std::string, int>& labels,
                              const GroupSummaryOptions& options = {});

nlohmann::json to_json(const GroupComparison& comparison);
/// One row per ordered pair (a, b), mirroring a cluster-vs-cluster table.
void write_group_stats_csv(const std::string& path, const GroupComparison& comparison);

std::string_view method_name(UTestMethod m);
UTestMethod parse_u_method(std::string_view name);

}  // namespace srl
