#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srl/core.hpp"
#include "srl/parallel.hpp"

namespace srl {

/// Unit-cost edit distance (insertions, deletions, substitutions) over any
/// equality-comparable symbol type. O(|a||b|) time, O(min(|a|,|b|)) memory.
template <class T>
std::size_t levenshtein(std::span<const T> a, std::span<const T> b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

template <class Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
    using T = typename Seq::value_type;
    return levenshtein<T>(std::span<const T>(a.data(), a.size()), std::span<const T>(b.data(), b.size()));
}

/// Symmetric n x n matrix of pairwise sequence distances.
struct DistanceMatrix {
    std::size_t n = 0;
    std::vector<double> values;     // row-major n x n
    std::vector<std::string> ids;   // sequence index -> learner id

    double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

struct DistanceOptions {
    /// Divide each distance by max(|a|, |b|), giving values in [0, 1].
    bool normalize = false;
    unsigned threads = 0;
};

/// Pairwise Levenshtein distances. Works for sequences over any symbol
/// type, so tactic paths and raw process sequences share this code.
template <class Seq>
DistanceMatrix distance_matrix(std::span<const Seq> sequences, std::vector<std::string> ids,
                               const DistanceOptions& options = {}) {
    const std::size_t n = sequences.size();
    if (ids.size() != n) throw ValidationError("distance_matrix: id count does not match sequence count");
    DistanceMatrix out{n, std::vector<double>(n * n, 0.0), std::move(ids)};
    // row i fills the upper triangle (i, j > i); rows are independent
    parallel_for(n, options.threads, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = static_cast<double>(levenshtein(sequences[i], sequences[j]));
            if (options.normalize) {
                const double longest = static_cast<double>(std::max(sequences[i].size(), sequences[j].size()));
                d = longest > 0.0 ? d / longest : 0.0;
            }
            out.values[i * n + j] = d;
        }
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) out.values[j * n + i] = out.values[i * n + j];
    return out;
}

/// Row i holds exp(-gamma * d(i, ref_j)^2) for each reference sequence j.
struct FeatureMatrix {
    Matrix values;
    double gamma = 1.0;
    std::vector<std::size_t> references;
    std::vector<std::string> warnings;
};

struct RbfOptions {
    /// Bandwidth; default is 1 / (2 * median(nonzero distances)^2).
    std::optional<double> gamma;
    /// Use a seeded sample of this many sequences as references instead of all.
    std::optional<std::size_t> landmarks;
    std::uint64_t seed = 0;
};

/// Median over pairs i < j of the nonzero distances; nullopt if all are zero.
std::optional<double> median_nonzero_distance(const DistanceMatrix& dist);

FeatureMatrix rbf_features(const DistanceMatrix& dist, const RbfOptions& options = {});

struct ClusterAssignment {
    std::vector<int> labels;  // in [0, k)
    Matrix centroids;         // k x dim
    double inertia = 0.0;     // sum of squared distances to the assigned centroid
    double silhouette = 0.0;  // Euclidean, in feature space
    std::size_t k = 0;
    std::size_t iterations = 0;  // Lloyd iterations of the winning initialization
};

struct KMeansOptions {
    std::size_t k = 2;
    std::uint64_t seed = 0;
    std::size_t n_init = 10;
    std::size_t max_iter = 300;
    double tol = 1e-6;  // stop when every centroid moves less than this
    unsigned threads = 0;
};

/// k-means++ seeding followed by Lloyd iterations; best of n_init runs by
/// inertia (lowest init index on ties). Init r uses derive_seed(seed, r).
/// A cluster left empty takes the point farthest from its centroid.
ClusterAssignment kmeans(const Matrix& points, const KMeansOptions& options);

/// Euclidean distances between all rows of `points`, as a DistanceMatrix.
DistanceMatrix pairwise_euclidean(const Matrix& points, unsigned threads = 0);

/// Mean silhouette (b - a) / max(a, b) using Euclidean distance between rows;
/// points alone in their cluster score 0. Throws unless >= 2 clusters.
double silhouette(const Matrix& points, std::span<const int> labels);
/// Same, using precomputed distances (e.g. raw Levenshtein).
double silhouette(const DistanceMatrix& dist, std::span<const int> labels);

struct ElbowRow {
    std::size_t k = 0;
    double inertia = 0.0;
    double silhouette = 0.0;
};

struct ElbowTable {
    std::vector<ElbowRow> rows;
    std::size_t suggested_k = 0;         // highest silhouette (lowest k on ties)
    std::optional<std::size_t> knee_k;   // largest second difference of inertia
};

/// k-means for every k in [k_min, k_max] with seed derive_seed(base.seed, k).
/// When `silhouette_distances` is given, silhouettes use it instead of the
/// feature-space Euclidean distance.
ElbowTable elbow_scan(const Matrix& points, std::size_t k_min, std::size_t k_max, const KMeansOptions& base,
                      const DistanceMatrix* silhouette_distances = nullptr);

/// Relative-position profile of symbols per cluster.
struct PhaseDistribution {
    std::size_t n_clusters = 0;
    std::size_t bins = 0;
    std::size_t n_symbols = 0;
    /// [cluster][bin][symbol]: mean over learners with positions in the bin
    /// of that learner's within-bin symbol proportion.
    std::vector<std::vector<std::vector<double>>> phase;
    /// [cluster][bin]: learners that had at least one position in the bin.
    std::vector<std::vector<std::size_t>> learners_per_bin;
    /// [cluster][symbol]: mean over learners of whole-sequence proportions.
    std::vector<std::vector<double>> overall;
    std::vector<std::size_t> cluster_sizes;
};

/// Position p of a length-L sequence falls in bin floor(p * bins / L).
PhaseDistribution phase_distribution(std::span<const std::vector<int>> sequences, std::span<const int> labels,
                                     std::size_t n_symbols, std::size_t bins = 10);

}  // namespace srl
