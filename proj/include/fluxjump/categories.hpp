#pragma once

// Semantic categories: Ward agglomerative clustering of response embeddings,
// flat cuts, and the similarity-calibrated choice of cut.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "fluxjump/corpus.hpp"
#include "fluxjump/embedding.hpp"
#include "fluxjump/error.hpp"
#include "fluxjump/task.hpp"

namespace fluxjump {

/// One agglomeration step. Node ids follow the usual linkage convention:
/// leaves are 0..n-1, the cluster created by merge m is n+m. left < right.
struct Merge {
    std::size_t left = 0;
    std::size_t right = 0;
    double distance = 0.0;
    std::size_t size = 0;

    bool operator==(const Merge&) const = default;
};

struct Dendrogram {
    std::size_t leaf_count = 0;
    std::vector<Merge> merges;

    std::size_t node_size(std::size_t node) const { return node < leaf_count ? 1 : merges[node - leaf_count].size; }
};

namespace detail {

inline std::size_t condensed_index(std::size_t n, std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return n * i - i * (i + 1) / 2 + (j - i - 1);
}

}  // namespace detail

/// Ward minimum-variance linkage over Euclidean distances (Lance–Williams update
/// on squared distances). Among equal distances the pair with the smaller
/// (left, right) node-id pair merges first.
///
/// Keeps a nearest-neighbour cache per active cluster, so typical inputs run in
/// O(n^2) time with a condensed n(n-1)/2 distance matrix.
inline Dendrogram ward_linkage(const std::vector<std::span<const double>>& points) {
    const std::size_t n = points.size();
    if (n < 2) throw Error("ward_linkage needs at least 2 points, got " + std::to_string(n));
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw DimensionMismatch("ward_linkage: points of unequal dimension");

    std::vector<double> d2(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                double t = points[i][k] - points[j][k];
                s += t * t;
            }
            d2[detail::condensed_index(n, i, j)] = s;
        }

    // slot -> current node id / size; slots of merged-away clusters go inactive.
    std::vector<std::size_t> node(n), size(n, 1);
    std::iota(node.begin(), node.end(), std::size_t{0});
    std::vector<char> active(n, 1);
    std::vector<double> nn_d(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> nn_j(n, n);

    using Key = std::tuple<double, std::size_t, std::size_t>;
    auto key = [&](std::size_t i, std::size_t j) -> Key {
        return {d2[detail::condensed_index(n, i, j)], std::min(node[i], node[j]), std::max(node[i], node[j])};
    };
    auto recompute = [&](std::size_t i) {
        nn_d[i] = std::numeric_limits<double>::infinity();
        nn_j[i] = n;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || !active[j]) continue;
            if (nn_j[i] == n || key(i, j) < key(i, nn_j[i])) {
                nn_j[i] = j;
                nn_d[i] = d2[detail::condensed_index(n, i, j)];
            }
        }
    };
    for (std::size_t i = 0; i < n; ++i) recompute(i);

    Dendrogram dg;
    dg.leaf_count = n;
    dg.merges.reserve(n - 1);
    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t a = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            if (a == n || key(i, nn_j[i]) < key(a, nn_j[a])) a = i;
        }
        std::size_t b = nn_j[a];
        const double dab = d2[detail::condensed_index(n, a, b)];
        const std::size_t na = size[a], nb = size[b];

        Merge m;
        m.left = std::min(node[a], node[b]);
        m.right = std::max(node[a], node[b]);
        m.distance = std::sqrt(std::max(0.0, dab));
        // Ward heights are monotone in exact arithmetic; absorb rounding-level dips.
        if (!dg.merges.empty()) m.distance = std::max(m.distance, dg.merges.back().distance);
        m.size = na + nb;
        dg.merges.push_back(m);

        // New cluster lives in slot a.
        active[b] = 0;
        node[a] = n + step;
        size[a] = na + nb;
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == a) continue;
            const double nk = static_cast<double>(size[k]);
            double& dka = d2[detail::condensed_index(n, k, a)];
            const double dkb = d2[detail::condensed_index(n, k, b)];
            dka = ((nk + na) * dka + (nk + nb) * dkb - nk * dab) / (nk + na + nb);
        }
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == a) continue;
            if (nn_j[k] == a || nn_j[k] == b) {
                recompute(k);
            } else if (key(k, a) < key(k, nn_j[k])) {
                nn_j[k] = a;
                nn_d[k] = d2[detail::condensed_index(n, k, a)];
            }
        }
        if (step + 2 < n) recompute(a);
    }
    return dg;
}

inline Dendrogram ward_linkage(const EmbeddingStore& store) {
    std::vector<std::span<const double>> pts;
    pts.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) pts.push_back(store.at(i));
    return ward_linkage(pts);
}

/// Flat clustering: leaves joined by merges at distance <= threshold share a
/// label. Labels are dense and numbered by first leaf occurrence.
inline std::vector<int> cut_dendrogram(const Dendrogram& d, double threshold) {
    const std::size_t n = d.leaf_count;
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<std::size_t> rep(n + d.merges.size());
    std::iota(rep.begin(), rep.begin() + static_cast<std::ptrdiff_t>(n), std::size_t{0});
    for (std::size_t m = 0; m < d.merges.size(); ++m) {
        const auto& mg = d.merges[m];
        rep[n + m] = rep[mg.left];
        if (mg.distance <= threshold) parent[find(rep[mg.left])] = find(rep[mg.right]);
    }
    std::vector<int> labels(n);
    std::unordered_map<std::size_t, int> dense;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, fresh] = dense.try_emplace(find(i), static_cast<int>(dense.size()));
        labels[i] = it->second;
    }
    return labels;
}

// ---------------------------------------------------------------------------

class CategoryMap {
public:
    CategoryMap() = default;
    CategoryMap(Task task, std::vector<std::string> texts, std::vector<int> labels)
        : task_(task), texts_(std::move(texts)), labels_(std::move(labels)) {
        if (texts_.size() != labels_.size()) throw Error("CategoryMap: texts/labels size mismatch");
        std::set<int> ids;
        for (std::size_t i = 0; i < texts_.size(); ++i) {
            if (!index_.try_emplace(texts_[i], i).second) throw Error("CategoryMap: duplicate text \"" + texts_[i] + "\"");
            if (labels_[i] < 0) throw Error("CategoryMap: negative category id");
            ids.insert(labels_[i]);
        }
        n_categories_ = static_cast<int>(ids.size());
        if (!ids.empty() && *ids.rbegin() != n_categories_ - 1) throw Error("CategoryMap: category ids are not dense");
    }

    Task task() const { return task_; }
    int n_categories() const { return n_categories_; }
    const std::vector<std::string>& texts() const { return texts_; }
    const std::vector<int>& labels() const { return labels_; }
    bool contains(const std::string& text) const { return index_.count(text) > 0; }

    int category(const std::string& text) const {
        auto it = index_.find(text);
        if (it == index_.end()) throw MissingEntry("response \"" + text + "\" has no category");
        return labels_[it->second];
    }

    std::vector<std::vector<std::string>> members() const {
        std::vector<std::vector<std::string>> out(static_cast<std::size_t>(n_categories_));
        for (std::size_t i = 0; i < texts_.size(); ++i) out[static_cast<std::size_t>(labels_[i])].push_back(texts_[i]);
        return out;
    }

private:
    Task task_ = Task::aut_brick;
    std::vector<std::string> texts_;
    std::vector<int> labels_;
    std::unordered_map<std::string, std::size_t> index_;
    int n_categories_ = 0;
};

/// How single-member categories enter the mean-minimum-similarity score.
enum class SingletonPolicy { count_as_one, exclude };

inline SingletonPolicy singleton_policy_from_string(std::string_view s) {
    if (s == "one" || s == "count_as_one") return SingletonPolicy::count_as_one;
    if (s == "exclude") return SingletonPolicy::exclude;
    throw ConfigError("unknown singleton policy '" + std::string(s) + "'");
}

/// Mean over categories of the minimum pairwise dot product among members.
/// Straightforward O(sum of |C|^2) evaluation.
inline double category_quality(const CategoryMap& map, const EmbeddingStore& store,
                               SingletonPolicy singletons = SingletonPolicy::count_as_one) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& members : map.members()) {
        if (members.size() < 2) {
            if (singletons == SingletonPolicy::count_as_one) {
                store.at(members.front());  // must still be present
                sum += 1.0;
                ++counted;
            }
            continue;
        }
        double mn = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < members.size(); ++i) {
            auto u = store.at(members[i]);
            for (std::size_t j = i + 1; j < members.size(); ++j) mn = std::min(mn, similarity(u, store.at(members[j])));
        }
        sum += mn;
        ++counted;
    }
    return counted ? sum / static_cast<double>(counted) : 1.0;
}

struct ThresholdSelection {
    double distance_threshold = 0.0;
    double quality = 0.0;
    int n_categories = 0;
};

/// Scans cuts at every distinct merge distance (plus the all-singletons cut)
/// from coarsest to finest and returns the first, i.e. coarsest, partition
/// whose mean minimum within-category similarity exceeds `target`.
/// `leaves` must hold the vectors in dendrogram leaf order.
inline ThresholdSelection select_threshold(const Dendrogram& d, const EmbeddingStore& leaves, double target = 0.7,
                                           SingletonPolicy singletons = SingletonPolicy::count_as_one) {
    const std::size_t n = d.leaf_count;
    if (leaves.size() != n) throw Error("select_threshold: store size does not match dendrogram");

    // Minimum pairwise similarity inside every dendrogram node, each leaf pair
    // visited once at its lowest common ancestor.
    std::vector<double> node_min(n + d.merges.size(), 1.0);
    {
        std::vector<std::vector<std::size_t>> members(n + d.merges.size());
        for (std::size_t i = 0; i < n; ++i) members[i] = {i};
        for (std::size_t m = 0; m < d.merges.size(); ++m) {
            const auto& mg = d.merges[m];
            double mn = std::min(mg.left >= n ? node_min[mg.left] : std::numeric_limits<double>::infinity(),
                                 mg.right >= n ? node_min[mg.right] : std::numeric_limits<double>::infinity());
            for (std::size_t a : members[mg.left]) {
                auto u = leaves.at(a);
                for (std::size_t b : members[mg.right]) mn = std::min(mn, similarity(u, leaves.at(b)));
            }
            node_min[n + m] = mn;
            auto& dst = members[n + m];
            dst = std::move(members[mg.left]);
            dst.insert(dst.end(), members[mg.right].begin(), members[mg.right].end());
            members[mg.right].clear();
            members[mg.right].shrink_to_fit();
        }
    }

    auto contribution = [&](std::size_t node, double& sum, std::size_t& counted, int sign) {
        if (node < n) {
            if (singletons == SingletonPolicy::count_as_one) {
                sum += sign * 1.0;
                counted = static_cast<std::size_t>(static_cast<long long>(counted) + sign);
            }
            return;
        }
        sum += sign * node_min[node];
        counted = static_cast<std::size_t>(static_cast<long long>(counted) + sign);
    };

    // Start from the single-root partition, undo merges from the top down.
    double sum = 0.0;
    std::size_t counted = 0;
    int n_cat = 1;
    contribution(n + d.merges.size() - 1, sum, counted, +1);
    auto quality = [&] { return counted ? sum / static_cast<double>(counted) : 1.0; };

    std::size_t m = d.merges.size();
    double best_failing = quality();
    while (true) {
        const double threshold = m == 0 ? 0.0 : d.merges[m - 1].distance;
        double q = quality();
        if (q > target) return {threshold, q, n_cat};
        best_failing = std::max(best_failing, q);
        if (m == 0) break;
        // Undo every merge at this height to reach the next finer candidate.
        const double h = d.merges[m - 1].distance;
        while (m > 0 && d.merges[m - 1].distance >= h) {
            --m;
            const auto& mg = d.merges[m];
            contribution(n + m, sum, counted, -1);
            contribution(mg.left, sum, counted, +1);
            contribution(mg.right, sum, counted, +1);
            ++n_cat;
        }
        if (m == 0 && h == 0.0) break;
    }
    throw Error("select_threshold: no cut reaches quality > " + std::to_string(target) +
                " (best " + std::to_string(best_failing) + ")");
}

struct CategorySelection {
    Dendrogram dendrogram;
    ThresholdSelection selection;
    CategoryMap map;
};

/// Dedupe -> Ward -> threshold scan -> flat cut for one task.
inline CategorySelection categorize(Task task, const EmbeddingStore& unique_vectors, double target = 0.7,
                                    SingletonPolicy singletons = SingletonPolicy::count_as_one) {
    CategorySelection out;
    if (unique_vectors.size() == 1) {
        out.selection = {0.0, 1.0, 1};
        out.map = CategoryMap(task, unique_vectors.texts(), {0});
        out.dendrogram.leaf_count = 1;
        return out;
    }
    out.dendrogram = ward_linkage(unique_vectors);
    out.selection = select_threshold(out.dendrogram, unique_vectors, target, singletons);
    out.map = CategoryMap(task, unique_vectors.texts(), cut_dendrogram(out.dendrogram, out.selection.distance_threshold));
    return out;
}

/// Distinct categories visited divided by the number of responses.
inline double flexibility_index(const ResponseSequence& seq, const CategoryMap& map) {
    if (seq.responses.empty()) throw Error("flexibility_index: empty sequence");
    std::set<int> seen;
    for (const auto& r : seq.responses) seen.insert(map.category(r.clean_text));
    return static_cast<double>(seen.size()) / static_cast<double>(seq.responses.size());
}

// ---------------------------------------------------------------------------
// categories.json

inline nlohmann::ordered_json to_json(const CategoryMap& map, const ThresholdSelection& sel) {
    nlohmann::ordered_json j;
    j["task"] = to_string(map.task());
    j["distance_threshold"] = sel.distance_threshold;
    j["quality"] = sel.quality;
    j["n_categories"] = map.n_categories();
    nlohmann::ordered_json assignment = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < map.texts().size(); ++i) assignment[map.texts()[i]] = map.labels()[i];
    j["assignment"] = std::move(assignment);
    return j;
}

inline std::pair<CategoryMap, ThresholdSelection> categories_from_json(const nlohmann::ordered_json& j) {
    try {
        Task task = task_from_string(j.at("task").get<std::string>());
        std::vector<std::string> texts;
        std::vector<int> labels;
        for (const auto& [text, id] : j.at("assignment").items()) {
            texts.push_back(text);
            labels.push_back(id.get<int>());
        }
        ThresholdSelection sel{j.at("distance_threshold").get<double>(), j.at("quality").get<double>(),
                               j.at("n_categories").get<int>()};
        CategoryMap map(task, std::move(texts), std::move(labels));
        if (map.n_categories() != sel.n_categories) throw Error("n_categories disagrees with assignment");
        return {std::move(map), sel};
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("categories file: ") + e.what());
    }
}

inline std::pair<CategoryMap, ThresholdSelection> load_categories(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open categories file " + path.string());
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, path.string() + ": " + e.what());
    }
    return categories_from_json(j);
}

}  // namespace fluxjump
