#include "srl/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "srl/core.hpp"
#include "srl/csv.hpp"

namespace srl {

namespace {

double upper_normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

// c[0] + c[1] x + c[2] x^2 + ...
double poly(std::initializer_list<double> c, double x) {
    double result = 0.0;
    for (auto it = std::rbegin(c); it != std::rend(c); ++it) result = result * x + *it;
    return result;
}

// Midranks (1-based) of `pooled`; `tie_term` receives sum(t^3 - t) over tie groups.
std::vector<double> midranks(std::span<const double> pooled, double* tie_term) {
    const std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return pooled[x] < pooled[y]; });
    std::vector<double> ranks(n);
    double ties = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        const double t = static_cast<double>(j - i + 1);
        ties += t * t * t - t;
        i = j + 1;
    }
    if (tie_term) *tie_term = ties;
    return ranks;
}

double binomial(std::size_t n, std::size_t k) {
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

// Exact two-sided p by enumerating every assignment of n_a of the pooled
// midranks to group a. Ranks are doubled so sums stay integral.
double exact_p(std::span<const double> ranks, std::size_t n_a, double u_a_obs) {
    const std::size_t n = ranks.size();
    const std::size_t n_b = n - n_a;
    std::vector<long long> twice(n);
    for (std::size_t i = 0; i < n; ++i) twice[i] = std::llround(2.0 * ranks[i]);
    // 2 U_a = 2 R_a - n_a (n_a + 1); compare |2 U_a - n_a n_b| in integers.
    const long long offset = static_cast<long long>(n_a * (n_a + 1));
    const long long center = static_cast<long long>(n_a * n_b);
    const long long observed = std::llabs(std::llround(2.0 * u_a_obs) - center);

    std::vector<std::size_t> idx(n_a);
    std::iota(idx.begin(), idx.end(), 0);
    std::size_t extreme = 0;
    std::size_t total = 0;
    while (true) {
        long long sum = 0;
        for (std::size_t i : idx) sum += twice[i];
        if (std::llabs(sum - offset - center) >= observed) ++extreme;
        ++total;
        // next combination in lexicographic order
        std::size_t pos = n_a;
        while (pos > 0 && idx[pos - 1] == n - n_a + pos - 1) --pos;
        if (pos == 0) break;
        ++idx[pos - 1];
        for (std::size_t i = pos; i < n_a; ++i) idx[i] = idx[i - 1] + 1;
    }
    return static_cast<double>(extreme) / static_cast<double>(total);
}

double parse_score(const std::string& text, const std::string& where) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) throw IngestError(where + ": score '" + text + "' is not a number");
    if (!std::isfinite(value)) throw IngestError(where + ": score must be finite");
    if (value < 0.0) throw IngestError(where + ": score must be nonnegative");
    return value;
}

}  // namespace

ScoreTable read_score_csv(const std::string& path) {
    const auto table = csv::read_file(path);
    const auto id_col = table.column("learner_id", path);
    const auto score_col = table.column("score", path);
    ScoreTable out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = path + ":" + std::to_string(table.line_numbers[r]);
        const auto& id = table.rows[r][id_col];
        if (id.empty()) throw IngestError(where + ": empty learner_id");
        if (!out.emplace(id, parse_score(table.rows[r][score_col], where)).second) {
            throw IngestError(where + ": duplicate score for learner '" + id + "'");
        }
    }
    return out;
}

void write_score_csv(const std::string& path, const ScoreTable& scores) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write file");
    csv::write_row(out, {"learner_id", "score"});
    for (const auto& [id, score] : scores) csv::write_row(out, {id, csv::format_double(score)});
}

ShapiroWilkResult shapiro_wilk(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 3 || n > 5000) {
        throw ValidationError("shapiro_wilk: sample size must be in [3, 5000], got " + std::to_string(n));
    }
    std::vector<double> x(values.begin(), values.end());
    std::sort(x.begin(), x.end());
    const double range = x.back() - x.front();
    if (!(range > 0.0)) throw ValidationError("shapiro_wilk: all values are identical");

    const double an = static_cast<double>(n);
    const std::size_t half = n / 2;
    std::vector<double> a(half);
    if (n == 3) {
        a[0] = std::sqrt(0.5);
    } else {
        std::vector<double> m(half);
        double summ2 = 0.0;
        for (std::size_t i = 0; i < half; ++i) {
            m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) / (an + 0.25));
            summ2 += m[i] * m[i];
        }
        summ2 *= 2.0;
        const double ssumm2 = std::sqrt(summ2);
        const double rsn = 1.0 / std::sqrt(an);
        const double a1 = poly({0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056}, rsn) - m[0] / ssumm2;
        std::size_t first;
        double fac;
        if (n > 5) {
            const double a2 = -m[1] / ssumm2 + poly({0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633}, rsn);
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
            a[1] = a2;
            first = 2;
        } else {
            fac = std::sqrt((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
            first = 1;
        }
        a[0] = a1;
        for (std::size_t i = first; i < half; ++i) a[i] = -m[i] / fac;
    }

    // W = (sum a_i (x_(n+1-i) - x_(i)))^2 / (sum a^2 * SS), on range-scaled data
    double mean = 0.0;
    for (double v : x) mean += v / range;
    mean /= an;
    double ssx = 0.0;
    for (double v : x) ssx += (v / range - mean) * (v / range - mean);
    double sax = 0.0;
    double ssa = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
        sax += a[i] * (x[n - 1 - i] - x[i]) / range;
        ssa += 2.0 * a[i] * a[i];
    }
    double w = sax * sax / (ssa * ssx);
    w = std::min(w, 1.0);

    ShapiroWilkResult out{w, 1.0, n};
    if (n == 3) {
        const double pi6 = 6.0 / std::acos(-1.0);
        const double stqr = std::acos(-1.0) / 3.0;
        out.p = std::max(0.0, pi6 * (std::asin(std::sqrt(w)) - stqr));
        return out;
    }
    double y = std::log1p(-w);
    double mu;
    double sigma;
    if (n <= 11) {
        const double gamma = poly({-2.273, 0.459}, an);
        if (y >= gamma) {
            out.p = 1e-99;
            return out;
        }
        y = -std::log(gamma - y);
        mu = poly({0.5440, -0.39978, 0.025054, -6.714e-4}, an);
        sigma = std::exp(poly({1.3822, -0.77857, 0.062767, -0.0020322}, an));
    } else {
        const double ln = std::log(an);
        mu = poly({-1.5861, -0.31082, -0.083751, 0.0038915}, ln);
        sigma = std::exp(poly({-0.4803, -0.082676, 0.0030302}, ln));
    }
    out.p = upper_normal_tail((y - mu) / sigma);
    return out;
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 const MannWhitneyOptions& options) {
    if (a.empty() || b.empty()) throw ValidationError("mann_whitney_u: both groups must be nonempty");
    for (double v : a)
        if (!std::isfinite(v)) throw ValidationError("mann_whitney_u: non-finite value");
    for (double v : b)
        if (!std::isfinite(v)) throw ValidationError("mann_whitney_u: non-finite value");

    MannWhitneyResult out;
    out.n_a = a.size();
    out.n_b = b.size();
    const double na = static_cast<double>(out.n_a);
    const double nb = static_cast<double>(out.n_b);
    const double n = na + nb;

    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    double tie_term = 0.0;
    const auto ranks = midranks(pooled, &tie_term);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < out.n_a; ++i) rank_sum += ranks[i];
    out.u_a = rank_sum - na * (na + 1.0) / 2.0;
    out.u_b = na * nb - out.u_a;
    out.u = std::min(out.u_a, out.u_b);

    const double mu = na * nb / 2.0;
    const double variance = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (variance > 0.0) {
        const double dev = std::max(0.0, std::abs(out.u_a - mu) - 0.5);
        out.z = std::copysign(dev / std::sqrt(variance), out.u_a - mu);
        out.p_normal = std::min(1.0, 2.0 * upper_normal_tail(std::abs(out.z)));
    } else {
        out.z = 0.0;  // every value identical
        out.p_normal = 1.0;
    }

    const std::size_t total = out.n_a + out.n_b;
    const bool use_exact = options.method == UTestMethod::exact ||
                           (options.method == UTestMethod::automatic && total <= options.exact_threshold);
    if (use_exact) {
        if (binomial(total, std::min(out.n_a, out.n_b)) > 5e7) {
            throw ValidationError("mann_whitney_u: exact test too large for n_a=" + std::to_string(out.n_a) +
                                  ", n_b=" + std::to_string(out.n_b));
        }
        out.p_exact = variance > 0.0 ? exact_p(ranks, out.n_a, out.u_a) : 1.0;
        out.p = *out.p_exact;
        out.method = "exact";
    } else {
        out.p = out.p_normal;
        out.method = "normal";
    }
    return out;
}

double effect_size_r(double u, std::size_t n_a, std::size_t n_b) {
    if (n_a < 1 || n_b < 1) throw ValidationError("effect_size_r: group sizes must be >= 1");
    const double prod = static_cast<double>(n_a) * static_cast<double>(n_b);
    if (u < 0.0 || u > prod) {
        throw ValidationError("effect_size_r: U must lie in [0, n_a*n_b]");
    }
    return std::abs(1.0 - 2.0 * u / prod);
}

std::vector<double> holm_adjust(std::span<const double> p) {
    const std::size_t m = p.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return p[x] < p[y]; });
    std::vector<double> out(m);
    double running = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        running = std::max(running, std::min(1.0, static_cast<double>(m - k) * p[order[k]]));
        out[order[k]] = running;
    }
    return out;
}

GroupComparison group_summary(const ScoreTable& scores, const std::map<std::string, int>& labels,
                              const GroupSummaryOptions& options) {
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    GroupComparison out;
    out.alpha = options.alpha;

    std::map<int, std::vector<double>> by_cluster;
    std::set<int> all_clusters;
    std::size_t missing = 0;
    for (const auto& [id, cluster] : labels) {
        all_clusters.insert(cluster);
        const auto it = scores.find(id);
        if (it == scores.end()) {
            ++missing;
            continue;
        }
        by_cluster[cluster].push_back(it->second);
    }
    if (missing > 0) {
        out.warnings.push_back(std::to_string(missing) + " labeled learner(s) have no score and were excluded");
    }
    for (int c : all_clusters) {
        if (!by_cluster.count(c)) {
            out.warnings.push_back("cluster " + std::to_string(c) + " has no scored learners and was excluded");
        }
    }
    if (by_cluster.size() < 2) throw ValidationError("group_summary: needs at least 2 clusters with scores");

    std::vector<double> pooled;
    for (const auto& [c, v] : by_cluster) {
        GroupSummary g{c, v.size(), 0.0, 0.0};
        for (double x : v) g.mean += x;
        g.mean /= static_cast<double>(v.size());
        if (v.size() > 1) {
            double ss = 0.0;
            for (double x : v) ss += (x - g.mean) * (x - g.mean);
            g.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
        }
        out.groups.push_back(g);
        pooled.insert(pooled.end(), v.begin(), v.end());
    }
    try {
        out.normality = shapiro_wilk(pooled);
    } catch (const ValidationError& e) {
        out.warnings.push_back(std::string("normality test skipped: ") + e.what());
    }

    for (auto i = by_cluster.begin(); i != by_cluster.end(); ++i) {
        for (auto j = std::next(i); j != by_cluster.end(); ++j) {
            PairComparison pc;
            pc.cluster_a = i->first;
            pc.cluster_b = j->first;
            pc.test = mann_whitney_u(i->second, j->second, options.test);
            pc.r = effect_size_r(pc.test.u, pc.test.n_a, pc.test.n_b);
            pc.r_z = std::abs(pc.test.z) / std::sqrt(static_cast<double>(pc.test.n_a + pc.test.n_b));
            pc.significant = pc.test.p < options.alpha;
            out.pairs.push_back(std::move(pc));
        }
    }
    std::vector<double> p;
    for (const auto& pc : out.pairs) p.push_back(pc.test.p);
    const auto adjusted = holm_adjust(p);
    for (std::size_t k = 0; k < out.pairs.size(); ++k) {
        out.pairs[k].p_holm = adjusted[k];
        out.pairs[k].significant_holm = adjusted[k] < options.alpha;
    }
    return out;
}

nlohmann::json to_json(const GroupComparison& comparison) {
    nlohmann::json doc;
    doc["alpha"] = comparison.alpha;
    if (comparison.normality) {
        doc["normality"] = {{"test", "shapiro_wilk"},
                            {"n", comparison.normality->n},
                            {"W", comparison.normality->w},
                            {"p", comparison.normality->p},
                            {"normal_at_alpha", comparison.normality->p >= comparison.alpha}};
    } else {
        doc["normality"] = nullptr;
    }
    doc["groups"] = nlohmann::json::array();
    for (const auto& g : comparison.groups) {
        doc["groups"].push_back({{"cluster", g.cluster}, {"n", g.n}, {"mean", g.mean}, {"sd", g.sd}});
    }
    doc["pairs"] = nlohmann::json::array();
    for (const auto& pc : comparison.pairs) {
        const auto& t = pc.test;
        nlohmann::json row = {
            {"cluster_a", pc.cluster_a},
            {"cluster_b", pc.cluster_b},
            {"n_a", t.n_a},
            {"n_b", t.n_b},
            {"U", t.u},
            {"U_reported_orientation", t.u_a <= t.u_b ? "a_vs_b" : "b_vs_a"},
            {"U_a_vs_b", t.u_a},
            {"U_b_vs_a", t.u_b},
            {"z", t.z},
            {"p", t.p},
            {"p_method", t.method},
            {"p_normal", t.p_normal},
            {"p_exact", t.p_exact ? nlohmann::json(*t.p_exact) : nlohmann::json(nullptr)},
            {"effect_size_r", pc.r},
            {"effect_size_r_z", pc.r_z},
            {"significant", pc.significant},
            {"p_holm", pc.p_holm},
            {"significant_holm", pc.significant_holm},
        };
        doc["pairs"].push_back(std::move(row));
    }
    doc["warnings"] = comparison.warnings;
    return doc;
}

void write_group_stats_csv(const std::string& path, const GroupComparison& comparison) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot write file");
    csv::write_row(out, {"cluster", "n", "mean", "sd", "vs_cluster", "n_vs", "U", "U_cluster_vs", "U_vs_cluster", "z",
                         "p", "p_method", "effect_size_r", "effect_size_r_z", "significant", "p_holm",
                         "significant_holm"});
    std::map<int, GroupSummary> groups;
    for (const auto& g : comparison.groups) groups[g.cluster] = g;
    const auto fmt = csv::format_double;
    for (const auto& pc : comparison.pairs) {
        for (int side = 0; side < 2; ++side) {
            const int own = side == 0 ? pc.cluster_a : pc.cluster_b;
            const int other = side == 0 ? pc.cluster_b : pc.cluster_a;
            const auto& g = groups.at(own);
            const double u_own = side == 0 ? pc.test.u_a : pc.test.u_b;
            const double u_other = side == 0 ? pc.test.u_b : pc.test.u_a;
            const double z = side == 0 ? pc.test.z : -pc.test.z;
            csv::write_row(out, {std::to_string(own), std::to_string(g.n), fmt(g.mean), fmt(g.sd), std::to_string(other),
                                 std::to_string(groups.at(other).n), fmt(pc.test.u), fmt(u_own), fmt(u_other), fmt(z),
                                 fmt(pc.test.p), pc.test.method, fmt(pc.r), fmt(pc.r_z),
                                 pc.significant ? "true" : "false", fmt(pc.p_holm),
                                 pc.significant_holm ? "true" : "false"});
        }
    }
}

std::string_view method_name(UTestMethod m) {
    switch (m) {
        case UTestMethod::automatic: return "auto";
        case UTestMethod::exact: return "exact";
        case UTestMethod::normal: return "normal";
    }
    return "auto";
}

UTestMethod parse_u_method(std::string_view name) {
    if (name == "auto") return UTestMethod::automatic;
    if (name == "exact") return UTestMethod::exact;
    if (name == "normal") return UTestMethod::normal;
    throw ValidationError("unknown U-test method '" + std::string(name) + "' (expected auto, exact or normal)");
}

}  // namespace srl
