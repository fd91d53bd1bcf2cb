#include "srl/cluster.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "srl/rng.hpp"

namespace srl {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

std::size_t cluster_count(std::span<const int> labels) {
    int k = -1;
    for (int l : labels) {
        if (l < 0) throw ValidationError("cluster labels must be nonnegative");
        k = std::max(k, l);
    }
    return static_cast<std::size_t>(k + 1);
}

// Silhouette from any pairwise distance accessor.
template <class Dist>
double silhouette_impl(std::size_t n, std::span<const int> labels, Dist&& dist) {
    if (labels.size() != n) throw ValidationError("silhouette: label count does not match point count");
    const std::size_t k = cluster_count(labels);
    std::vector<std::size_t> sizes(k, 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    const auto nonempty = std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; });
    if (nonempty < 2) throw ValidationError("silhouette: needs at least 2 nonempty clusters");

    double total = 0.0;
    std::vector<double> sums(k);
    for (std::size_t i = 0; i < n; ++i) {
        const auto own = static_cast<std::size_t>(labels[i]);
        if (sizes[own] == 1) continue;  // singleton scores 0
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sums[static_cast<std::size_t>(labels[j])] += dist(i, j);
        }
        const double a = sums[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == own || sizes[c] == 0) continue;
            b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

struct Assignment {
    std::vector<int> labels;
    Matrix centroids;
    double inertia = 0.0;
    std::size_t iterations = 0;
};

// Nearest centroid per point (lower index on ties); returns inertia.
double assign(const Matrix& points, const Matrix& centroids, std::vector<int>& labels, std::vector<double>& d2) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        std::size_t best = 0;
        double best_d = squared_distance(points.row(i), centroids.row(0));
        for (std::size_t c = 1; c < centroids.rows(); ++c) {
            const double d = squared_distance(points.row(i), centroids.row(c));
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        labels[i] = static_cast<int>(best);
        d2[i] = best_d;
        inertia += best_d;
    }
    return inertia;
}

// Moves the farthest point (from a cluster with >= 2 members) into each empty
// cluster and places that cluster's centroid on it.
void repair_empty(const Matrix& points, Matrix& centroids, std::vector<int>& labels, std::vector<double>& d2) {
    const std::size_t k = centroids.rows();
    std::vector<std::size_t> sizes(k, 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] > 0) continue;
        std::optional<std::size_t> far;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            if (sizes[static_cast<std::size_t>(labels[i])] < 2) continue;
            if (!far || d2[i] > d2[*far]) far = i;
        }
        if (!far) break;  // fewer points than clusters; cannot happen with k <= n
        --sizes[static_cast<std::size_t>(labels[*far])];
        labels[*far] = static_cast<int>(c);
        ++sizes[c];
        d2[*far] = 0.0;
        std::copy(points.row(*far).begin(), points.row(*far).end(), centroids.row(c).begin());
    }
}

Matrix kmeans_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
    const std::size_t n = points.rows();
    Matrix centers(k, points.cols());
    std::vector<bool> chosen(n, false);
    std::size_t first = rng.below(n);
    chosen[first] = true;
    std::copy(points.row(first).begin(), points.row(first).end(), centers.row(0).begin());
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centers.row(0));
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double d : d2) total += d;
        std::size_t pick;
        if (total > 0.0) {
            pick = rng.categorical(d2);
        } else {
            // every point coincides with a chosen center: pick an unused index uniformly
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) free.push_back(i);
            pick = free[rng.below(free.size())];
        }
        chosen[pick] = true;
        std::copy(points.row(pick).begin(), points.row(pick).end(), centers.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), centers.row(c)));
    }
    return centers;
}

Assignment lloyd(const Matrix& points, std::size_t k, std::uint64_t seed, const KMeansOptions& options) {
    Rng rng(seed);
    const std::size_t n = points.rows();
    const std::size_t dim = points.cols();
    Assignment run{std::vector<int>(n, 0), kmeans_plus_plus(points, k, rng), 0.0, 0};
    std::vector<double> d2(n);
    Matrix next(k, dim);
    std::vector<std::size_t> sizes(k);
    for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
        assign(points, run.centroids, run.labels, d2);
        repair_empty(points, run.centroids, run.labels, d2);
        std::fill(next.data().begin(), next.data().end(), 0.0);
        std::fill(sizes.begin(), sizes.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(run.labels[i]);
            ++sizes[c];
            auto row = next.row(c);
            const auto p = points.row(i);
            for (std::size_t d = 0; d < dim; ++d) row[d] += p[d];
        }
        double max_shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            auto row = next.row(c);
            for (double& x : row) x /= static_cast<double>(sizes[c]);
            max_shift = std::max(max_shift, std::sqrt(squared_distance(row, run.centroids.row(c))));
        }
        std::swap(run.centroids, next);
        ++run.iterations;
        if (max_shift < options.tol) break;
    }
    run.inertia = assign(points, run.centroids, run.labels, d2);
    repair_empty(points, run.centroids, run.labels, d2);
    run.inertia = 0.0;
    for (double d : d2) run.inertia += d;
    return run;
}

}  // namespace

std::optional<double> median_nonzero_distance(const DistanceMatrix& dist) {
    std::vector<double> nonzero;
    for (std::size_t i = 0; i < dist.n; ++i)
        for (std::size_t j = i + 1; j < dist.n; ++j)
            if (dist(i, j) > 0.0) nonzero.push_back(dist(i, j));
    if (nonzero.empty()) return std::nullopt;
    std::sort(nonzero.begin(), nonzero.end());
    const std::size_t m = nonzero.size();
    return m % 2 == 1 ? nonzero[m / 2] : 0.5 * (nonzero[m / 2 - 1] + nonzero[m / 2]);
}

FeatureMatrix rbf_features(const DistanceMatrix& dist, const RbfOptions& options) {
    FeatureMatrix out;
    if (dist.n == 0) throw ValidationError("rbf_features: empty distance matrix");
    if (options.gamma) {
        if (!(*options.gamma > 0.0)) throw ValidationError("rbf_features: gamma must be positive");
        out.gamma = *options.gamma;
    } else if (const auto median = median_nonzero_distance(dist)) {
        out.gamma = 1.0 / (2.0 * *median * *median);
    } else {
        out.gamma = 1.0;
        out.warnings.push_back("all pairwise distances are zero; gamma falls back to 1");
    }

    if (options.landmarks && *options.landmarks < dist.n) {
        if (*options.landmarks == 0) throw ValidationError("rbf_features: landmark count must be >= 1");
        // seeded partial Fisher-Yates, then sorted for a stable column order
        std::vector<std::size_t> idx(dist.n);
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(options.seed);
        for (std::size_t i = 0; i < *options.landmarks; ++i) {
            const std::size_t j = i + rng.below(dist.n - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(*options.landmarks);
        std::sort(idx.begin(), idx.end());
        out.references = std::move(idx);
    } else {
        out.references.resize(dist.n);
        std::iota(out.references.begin(), out.references.end(), 0);
    }

    out.values = Matrix(dist.n, out.references.size());
    for (std::size_t i = 0; i < dist.n; ++i) {
        for (std::size_t j = 0; j < out.references.size(); ++j) {
            const double d = dist(i, out.references[j]);
            out.values(i, j) = std::exp(-out.gamma * d * d);
        }
    }
    return out;
}

ClusterAssignment kmeans(const Matrix& points, const KMeansOptions& options) {
    const std::size_t n = points.rows();
    if (options.k < 2) throw ValidationError("kmeans: k must be >= 2");
    if (options.k > n) {
        throw ValidationError("kmeans: k (" + std::to_string(options.k) + ") exceeds the number of points (" +
                              std::to_string(n) + ")");
    }
    if (options.n_init < 1) throw ValidationError("kmeans: n_init must be >= 1");

    std::vector<Assignment> runs(options.n_init);
    parallel_for(options.n_init, options.threads,
                 [&](std::size_t r) { runs[r] = lloyd(points, options.k, derive_seed(options.seed, r), options); });
    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (runs[r].inertia < runs[best].inertia) best = r;
    }
    ClusterAssignment out;
    out.labels = std::move(runs[best].labels);
    out.centroids = std::move(runs[best].centroids);
    out.inertia = runs[best].inertia;
    out.iterations = runs[best].iterations;
    out.k = options.k;
    out.silhouette = silhouette(points, out.labels);
    return out;
}

DistanceMatrix pairwise_euclidean(const Matrix& points, unsigned threads) {
    const std::size_t n = points.rows();
    DistanceMatrix out{n, std::vector<double>(n * n, 0.0), std::vector<std::string>(n)};
    parallel_for(n, threads, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) out.values[i * n + j] = std::sqrt(squared_distance(points.row(i), points.row(j)));
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) out.values[j * n + i] = out.values[i * n + j];
    return out;
}

double silhouette(const Matrix& points, std::span<const int> labels) {
    return silhouette_impl(points.rows(), labels, [&](std::size_t i, std::size_t j) {
        return std::sqrt(squared_distance(points.row(i), points.row(j)));
    });
}

double silhouette(const DistanceMatrix& dist, std::span<const int> labels) {
    return silhouette_impl(dist.n, labels, [&](std::size_t i, std::size_t j) { return dist(i, j); });
}

ElbowTable elbow_scan(const Matrix& points, std::size_t k_min, std::size_t k_max, const KMeansOptions& base,
                      const DistanceMatrix* silhouette_distances) {
    if (k_min < 2 || k_max < k_min || k_max > points.rows()) {
        throw ValidationError("elbow_scan: k range must lie within [2, n]");
    }
    const DistanceMatrix euclid = silhouette_distances ? DistanceMatrix{} : pairwise_euclidean(points, base.threads);
    const DistanceMatrix& sil_dist = silhouette_distances ? *silhouette_distances : euclid;

    ElbowTable table;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        KMeansOptions opts = base;
        opts.k = k;
        opts.seed = derive_seed(base.seed, k);
        const auto result = kmeans(points, opts);
        table.rows.push_back({k, result.inertia, silhouette(sil_dist, result.labels)});
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        if (table.rows[i].silhouette > table.rows[best].silhouette) best = i;
    }
    table.suggested_k = table.rows[best].k;
    if (table.rows.size() >= 3) {
        std::size_t knee = 1;
        double best_curv = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i + 1 < table.rows.size(); ++i) {
            const double curv = table.rows[i - 1].inertia - 2.0 * table.rows[i].inertia + table.rows[i + 1].inertia;
            if (curv > best_curv) {
                best_curv = curv;
                knee = i;
            }
        }
        table.knee_k = table.rows[knee].k;
    }
    return table;
}

PhaseDistribution phase_distribution(std::span<const std::vector<int>> sequences, std::span<const int> labels,
                                     std::size_t n_symbols, std::size_t bins) {
    if (sequences.size() != labels.size()) {
        throw ValidationError("phase_distribution: sequences and labels cover different learner counts");
    }
    if (bins < 1) throw ValidationError("phase_distribution: bins must be >= 1");
    PhaseDistribution out;
    out.n_clusters = labels.empty() ? 0 : cluster_count(labels);
    out.bins = bins;
    out.n_symbols = n_symbols;
    out.phase.assign(out.n_clusters, std::vector<std::vector<double>>(bins, std::vector<double>(n_symbols, 0.0)));
    out.learners_per_bin.assign(out.n_clusters, std::vector<std::size_t>(bins, 0));
    out.overall.assign(out.n_clusters, std::vector<double>(n_symbols, 0.0));
    out.cluster_sizes.assign(out.n_clusters, 0);

    std::vector<std::vector<std::size_t>> counts(bins, std::vector<std::size_t>(n_symbols));
    std::vector<std::size_t> bin_totals(bins);
    std::vector<std::size_t> whole(n_symbols);
    for (std::size_t s = 0; s < sequences.size(); ++s) {
        const auto& seq = sequences[s];
        const auto c = static_cast<std::size_t>(labels[s]);
        ++out.cluster_sizes[c];
        if (seq.empty()) continue;
        for (auto& row : counts) std::fill(row.begin(), row.end(), 0);
        std::fill(bin_totals.begin(), bin_totals.end(), 0);
        std::fill(whole.begin(), whole.end(), 0);
        const std::size_t len = seq.size();
        for (std::size_t pos = 0; pos < len; ++pos) {
            const int sym = seq[pos];
            if (sym < 0 || static_cast<std::size_t>(sym) >= n_symbols) {
                throw ValidationError("phase_distribution: symbol " + std::to_string(sym) + " out of range");
            }
            const std::size_t b = pos * bins / len;
            ++counts[b][static_cast<std::size_t>(sym)];
            ++bin_totals[b];
            ++whole[static_cast<std::size_t>(sym)];
        }
        for (std::size_t b = 0; b < bins; ++b) {
            if (bin_totals[b] == 0) continue;
            ++out.learners_per_bin[c][b];
            for (std::size_t t = 0; t < n_symbols; ++t) {
                out.phase[c][b][t] += static_cast<double>(counts[b][t]) / static_cast<double>(bin_totals[b]);
            }
        }
        for (std::size_t t = 0; t < n_symbols; ++t) {
            out.overall[c][t] += static_cast<double>(whole[t]) / static_cast<double>(len);
        }
    }
    for (std::size_t c = 0; c < out.n_clusters; ++c) {
        for (std::size_t b = 0; b < bins; ++b) {
            if (out.learners_per_bin[c][b] == 0) continue;
            for (double& x : out.phase[c][b]) x /= static_cast<double>(out.learners_per_bin[c][b]);
        }
        std::size_t nonempty = 0;
        for (std::size_t s = 0; s < sequences.size(); ++s)
            if (static_cast<std::size_t>(labels[s]) == c && !sequences[s].empty()) ++nonempty;
        if (nonempty > 0)
            for (double& x : out.overall[c]) x /= static_cast<double>(nonempty);
    }
    return out;
}

}  // namespace srl
