#pragma once

// Shared helpers and independent oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fluxjump/embedding.hpp"
#include "fluxjump/log.hpp"

namespace testsupport {

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("fluxjump_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << bytes;
}

/// Captures log lines for the lifetime of the object.
class LogCapture {
public:
    LogCapture() {
        fluxjump::Log::set_sink([this](fluxjump::LogLevel, const std::string& m) { lines.push_back(m); });
    }
    ~LogCapture() { fluxjump::Log::reset(); }

    bool contains(const std::string& needle) const {
        return std::any_of(lines.begin(), lines.end(), [&](const auto& l) { return l.find(needle) != std::string::npos; });
    }

    std::vector<std::string> lines;
};

inline std::vector<double> unit(std::vector<double> v) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

inline std::vector<std::vector<double>> random_points(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
    for (auto& p : pts)
        for (double& x : p) x = nd(rng);
    return pts;
}

inline fluxjump::EmbeddingStore store_of(const std::vector<std::vector<double>>& vecs, const std::string& prefix = "t") {
    fluxjump::EmbeddingStore s("test", vecs.empty() ? 0 : vecs.front().size());
    for (std::size_t i = 0; i < vecs.size(); ++i) s.add(prefix + std::to_string(i), unit(vecs[i]));
    return s;
}

// ---------------------------------------------------------------------------
// Brute-force Ward oracle: recompute every cluster centroid from its members at
// every step and merge the pair minimising sqrt(2|A||B|/(|A|+|B|)) * ||cA - cB||.

struct OracleMerge {
    std::size_t a, b;  // a < b, node ids in linkage convention
    double distance;
    std::size_t size;
};

inline std::vector<OracleMerge> brute_ward(const std::vector<std::vector<double>>& pts) {
    const std::size_t n = pts.size(), dim = pts.front().size();
    struct Cl {
        std::size_t id;
        std::vector<std::size_t> members;
    };
    std::vector<Cl> active;
    for (std::size_t i = 0; i < n; ++i) active.push_back({i, {i}});
    auto centroid = [&](const Cl& c) {
        std::vector<double> m(dim, 0.0);
        for (auto i : c.members)
            for (std::size_t k = 0; k < dim; ++k) m[k] += pts[i][k];
        for (double& x : m) x /= static_cast<double>(c.members.size());
        return m;
    };
    std::vector<OracleMerge> out;
    for (std::size_t step = 0; step + 1 < n; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < active.size(); ++i)
            for (std::size_t j = i + 1; j < active.size(); ++j) {
                auto ci = centroid(active[i]), cj = centroid(active[j]);
                double d2 = 0;
                for (std::size_t k = 0; k < dim; ++k) d2 += (ci[k] - cj[k]) * (ci[k] - cj[k]);
                double na = static_cast<double>(active[i].members.size()), nb = static_cast<double>(active[j].members.size());
                double d = std::sqrt(2.0 * na * nb / (na + nb) * d2);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        Cl merged{n + step, active[bi].members};
        merged.members.insert(merged.members.end(), active[bj].members.begin(), active[bj].members.end());
        out.push_back({std::min(active[bi].id, active[bj].id), std::max(active[bi].id, active[bj].id), best,
                       merged.members.size()});
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bi));
        active.push_back(std::move(merged));
    }
    return out;
}

/// Smallest gap between the best and second-best candidate distance over all
/// steps of the oracle run; instances with near ties are ambiguous by nature.
inline double oracle_min_gap(const std::vector<std::vector<double>>& pts) {
    const std::size_t n = pts.size(), dim = pts.front().size();
    std::vector<std::vector<std::size_t>> active;
    for (std::size_t i = 0; i < n; ++i) active.push_back({i});
    double gap = std::numeric_limits<double>::infinity();
    while (active.size() > 1) {
        std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
        for (std::size_t i = 0; i < active.size(); ++i)
            for (std::size_t j = i + 1; j < active.size(); ++j) {
                std::vector<double> ci(dim, 0), cj(dim, 0);
                for (auto m : active[i])
                    for (std::size_t k = 0; k < dim; ++k) ci[k] += pts[m][k] / static_cast<double>(active[i].size());
                for (auto m : active[j])
                    for (std::size_t k = 0; k < dim; ++k) cj[k] += pts[m][k] / static_cast<double>(active[j].size());
                double d2 = 0;
                for (std::size_t k = 0; k < dim; ++k) d2 += (ci[k] - cj[k]) * (ci[k] - cj[k]);
                double na = static_cast<double>(active[i].size()), nb = static_cast<double>(active[j].size());
                cand.emplace_back(std::sqrt(2.0 * na * nb / (na + nb) * d2), i, j);
            }
        std::sort(cand.begin(), cand.end());
        if (cand.size() > 1) gap = std::min(gap, std::get<0>(cand[1]) - std::get<0>(cand[0]));
        auto [d, i, j] = cand.front();
        auto merged = active[i];
        merged.insert(merged.end(), active[j].begin(), active[j].end());
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(j));
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(i));
        active.push_back(merged);
    }
    return gap;
}

// ---------------------------------------------------------------------------
// Label agreement oracles.

/// Contingency-table adjusted Rand index, written out independently.

inline double ari_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, double> nij;
    std::map<int, double> ai, bj;
    for (std::size_t i = 0; i < a.size(); ++i) {
        nij[{a[i], b[i]}] += 1;
        ai[a[i]] += 1;
        bj[b[i]] += 1;
    }
    auto c2 = [](double x) { return x * (x - 1) / 2; };
    double sij = 0, sa = 0, sb = 0;
    for (auto& [k, v] : nij) sij += c2(v);
    for (auto& [k, v] : ai) sa += c2(v);
    for (auto& [k, v] : bj) sb += c2(v);
    double total = c2(static_cast<double>(a.size()));
    double expected = sa * sb / total, maxi = (sa + sb) / 2;
    if (maxi == expected) return 1.0;
    return (sij - expected) / (maxi - expected);
}

/// Best fraction of matching labels over every relabelling of `b` (k! maps).
inline double best_match_accuracy(const std::vector<int>& a, const std::vector<int>& b, int k) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) perm[static_cast<std::size_t>(i)] = i;
    double best = 0;
    do {
        std::size_t hit = 0;
        for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == perm[static_cast<std::size_t>(b[i])];
        best = std::max(best, static_cast<double>(hit) / static_cast<double>(a.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace testsupport
