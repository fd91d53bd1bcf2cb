#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "srl/hmm.hpp"
#include "srl/rng.hpp"

namespace srl::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("srl_test_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

    std::string write(const std::string& name, const std::string& content) const {
        std::ofstream(path_ / name, std::ios::binary) << content;
        return file(name);
    }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::string> symbols(std::size_t m) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < m; ++i) out.push_back("s" + std::to_string(i));
    return out;
}

/// Dirichlet-random model; used by oracle tests.
inline CategoricalHmm random_hmm(std::size_t n, std::size_t m, Rng& rng, double alpha = 1.0) {
    CategoricalHmm h;
    h.alphabet = symbols(m);
    h.initial = rng.dirichlet(n, alpha);
    h.transition = Matrix(n, n);
    h.emission = Matrix(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = rng.dirichlet(n, alpha);
        const auto b = rng.dirichlet(m, alpha);
        for (std::size_t j = 0; j < n; ++j) h.transition(i, j) = a[j];
        for (std::size_t k = 0; k < m; ++k) h.emission(i, k) = b[k];
    }
    return h;
}

/// Calls fn(path) for every state path of length t over n states.
template <class Fn>
void for_each_path(std::size_t n, std::size_t t, Fn&& fn) {
    std::vector<int> path(t, 0);
    for (;;) {
        fn(path);
        std::size_t i = t;
        while (i > 0) {
            --i;
            if (static_cast<std::size_t>(++path[i]) < n) break;
            path[i] = 0;
            if (i == 0) return;
        }
        if (t == 0) return;
    }
}

/// Joint P(path, obs), in linear space.
inline double path_probability(const CategoricalHmm& h, const std::vector<int>& path, const std::vector<int>& obs) {
    double p = h.initial[path[0]] * h.emission(path[0], obs[0]);
    for (std::size_t i = 1; i < obs.size(); ++i) p *= h.transition(path[i - 1], path[i]) * h.emission(path[i], obs[i]);
    return p;
}

/// Brute-force log P(obs): sum over all N^T paths.
inline double brute_force_ll(const CategoricalHmm& h, const std::vector<int>& obs) {
    long double total = 0.0L;
    for_each_path(h.n_states(), obs.size(), [&](const std::vector<int>& path) { total += path_probability(h, path, obs); });
    return std::log(static_cast<double>(total));
}

/// Brute-force MAP path probability.
inline double brute_force_max(const CategoricalHmm& h, const std::vector<int>& obs) {
    double best = 0.0;
    for_each_path(h.n_states(), obs.size(),
                  [&](const std::vector<int>& path) { best = std::max(best, path_probability(h, path, obs)); });
    return best;
}

}  // namespace srl::test
