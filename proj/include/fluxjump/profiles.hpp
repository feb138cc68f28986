#pragma once

// Cumulative jump profiles and K-Means clustering of producers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluxjump/corpus.hpp"
#include "fluxjump/error.hpp"
#include "fluxjump/jumps.hpp"

namespace fluxjump {

struct JumpProfile {
    std::string producer_id;
    Task task = Task::aut_brick;
    std::vector<int> values;
};

/// Prefix sums of a binary jump vector.
inline JumpProfile jump_profile(const JumpVector& jumps) {
    JumpProfile p{jumps.producer_id, jumps.task, {}};
    p.values.reserve(jumps.values.size());
    int acc = 0;
    for (auto v : jumps.values) {
        if (v > 1) throw Error("jump_profile: non-binary jump value " + std::to_string(int(v)));
        acc += v;
        p.values.push_back(acc);
    }
    return p;
}

/// Jump vector of one sequence together with who produced it.
struct ProfileInput {
    std::string producer_id;
    Task task = Task::aut_brick;
    Source source = Source::human;
    std::vector<std::uint8_t> jumps;  // length = responses - 1
};

struct ProfileRow {
    std::string producer_id;
    Source source = Source::human;
    std::vector<double> values;
};

struct ProfileMatrix {
    Task task = Task::aut_brick;
    std::size_t length = 0;  // transitions per row, L_responses - 1
    std::vector<ProfileRow> rows;
    std::vector<std::string> excluded;

    std::vector<ProfileRow> rows_of(Source s) const {
        std::vector<ProfileRow> out;
        for (const auto& r : rows)
            if (r.source == s) out.push_back(r);
        return out;
    }
};

/// Keeps sequences of `task` with at least `l_responses` responses, truncated to
/// their first l_responses - 1 transitions; shorter ones go to `excluded`.
inline ProfileMatrix build_profile_matrix(const std::vector<ProfileInput>& inputs, Task task, std::size_t l_responses) {
    if (l_responses < 2) throw Error("build_profile_matrix: L must be >= 2");
    ProfileMatrix m;
    m.task = task;
    m.length = l_responses - 1;
    for (const auto& in : inputs) {
        if (in.task != task) continue;
        if (in.jumps.size() < m.length) {
            m.excluded.push_back(in.producer_id);
            continue;
        }
        JumpVector truncated{in.producer_id, task, {in.jumps.begin(), in.jumps.begin() + static_cast<std::ptrdiff_t>(m.length)},
                             JumpKind::combined};
        auto prof = jump_profile(truncated);
        m.rows.push_back({in.producer_id, in.source, {prof.values.begin(), prof.values.end()}});
    }
    if (m.rows.empty())
        throw Error("build_profile_matrix: no " + std::string(to_string(task)) + " sequence has >= " +
                    std::to_string(l_responses) + " responses");
    return m;
}

/// Lower median of a list of lengths.
inline std::size_t lower_median(std::vector<std::size_t> lengths) {
    if (lengths.empty()) throw Error("median of empty list");
    std::sort(lengths.begin(), lengths.end());
    return lengths[(lengths.size() - 1) / 2];
}

/// Lower median length of valid human sequences of `task`.
inline std::size_t median_length(const Corpus& corpus, Task task) {
    std::vector<std::size_t> lengths;
    for (const auto& s : corpus)
        if (s.task == task && s.source == Source::human && s.valid) lengths.push_back(s.size());
    if (lengths.empty()) throw Error("median_length: no valid human sequences for " + std::string(to_string(task)));
    return lower_median(std::move(lengths));
}

/// Lower median over the valid human sequences of all AUT tasks pooled; falls
/// back to all tasks when the corpus holds no AUT data.
inline std::size_t default_profile_length(const Corpus& corpus) {
    std::vector<std::size_t> aut, all;
    for (const auto& s : corpus) {
        if (s.source != Source::human || !s.valid) continue;
        all.push_back(s.size());
        if (is_aut(s.task)) aut.push_back(s.size());
    }
    if (all.empty()) throw Error("no valid human sequences to take a median over");
    return lower_median(aut.empty() ? all : aut);
}

// ---------------------------------------------------------------------------
// K-Means

struct ClusterModel {
    int k = 0;
    std::vector<std::vector<double>> centroids;
    std::vector<std::string> producer_ids;  // rows the model was fitted on
    std::vector<int> labels;                // parallel to producer_ids
    double inertia = 0.0;
    std::uint64_t seed = 0;
    int iterations = 0;
    std::vector<int> cluster_order;        // cluster_order[c] = pre-sort index of cluster c
    std::vector<double> inertia_history;   // after each assignment step of the chosen run
};

struct KMeansOptions {
    int max_iter = 300;
    double tol = 1e-6;
    int n_init = 10;
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

inline int nearest(const std::vector<std::vector<double>>& centroids, const std::vector<double>& x, double* d = nullptr) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        double dc = sq_dist(centroids[c], x);
        if (dc < bd) {
            bd = dc;
            best = static_cast<int>(c);
        }
    }
    if (d) *d = bd;
    return best;
}

/// K-Means++ seeding: first centre uniform, then each next centre drawn with
/// probability proportional to squared distance to the nearest chosen centre.
inline std::vector<std::vector<double>> kmeanspp_seed(const std::vector<std::vector<double>>& x, int k,
                                                      std::mt19937_64& rng) {
    const std::size_t n = x.size();
    std::vector<std::vector<double>> centres;
    centres.push_back(x[std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)))]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(x[i], centres[0]);
    while (static_cast<int>(centres.size()) < k) {
        double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = n - 1;
        if (total > 0.0) {
            double r = uniform01(rng) * total, acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (r < acc && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            while (d2[pick] == 0.0 && pick > 0) --pick;  // guard against r landing past the last mass
        } else {
            pick = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
        }
        centres.push_back(x[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x[i], centres.back()));
    }
    return centres;
}

struct LloydResult {
    std::vector<std::vector<double>> centroids;
    std::vector<int> labels;
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> history;
};

inline LloydResult lloyd(const std::vector<std::vector<double>>& x, std::vector<std::vector<double>> centroids,
                         const KMeansOptions& opt) {
    const std::size_t n = x.size(), dim = x.front().size(), k = centroids.size();
    LloydResult res;
    res.labels.assign(n, 0);
    std::vector<double> dist(n);
    auto assign = [&] {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            res.labels[i] = nearest(centroids, x[i], &dist[i]);
            inertia += dist[i];
        }
        return inertia;
    };

    for (int it = 0; it < opt.max_iter; ++it) {
        res.history.push_back(assign());
        res.iterations = it + 1;

        std::vector<std::vector<double>> next(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto c = static_cast<std::size_t>(res.labels[i]);
            ++count[c];
            for (std::size_t j = 0; j < dim; ++j) next[c][j] += x[i][j];
        }
        std::vector<char> taken(n, 0);
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c]) {
                for (auto& v : next[c]) v /= static_cast<double>(count[c]);
                continue;
            }
            // Empty cluster: move it onto the point farthest from its centroid.
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i] && (far == n || dist[i] > dist[far])) far = i;
            taken[far] = 1;
            next[c] = x[far];
            dist[far] = 0.0;
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) shift = std::max(shift, std::sqrt(sq_dist(next[c], centroids[c])));
        centroids = std::move(next);
        if (shift < opt.tol) break;
    }
    res.inertia = assign();
    res.history.push_back(res.inertia);
    res.centroids = std::move(centroids);
    return res;
}

}  // namespace detail

inline std::vector<std::string> default_cluster_names(int k) {
    if (k == 3) return {"persistent", "mixed", "flexible"};
    if (k == 2) return {"persistent", "flexible"};
    std::vector<std::string> names;
    for (int c = 0; c < k; ++c) names.push_back("cluster_" + std::to_string(c));
    return names;
}

/// K-Means++ seeded Lloyd iterations, best of `n_init` runs drawn serially from
/// one generator seeded with `seed`. Clusters are relabelled so that cluster 0
/// has the smallest final centroid value (most persistent) and k-1 the largest.
inline ClusterModel kmeans_fit(const std::vector<ProfileRow>& rows, int k, std::uint64_t seed,
                               const KMeansOptions& opt = {}) {
    if (k < 1) throw Error("kmeans_fit: k must be >= 1");
    if (static_cast<std::size_t>(k) > rows.size())
        throw Error("kmeans_fit: k = " + std::to_string(k) + " exceeds " + std::to_string(rows.size()) + " rows");
    std::vector<std::vector<double>> x;
    for (const auto& r : rows) {
        if (!x.empty() && r.values.size() != x.front().size()) throw DimensionMismatch("kmeans_fit: ragged rows");
        x.push_back(r.values);
    }
    if (x.front().empty()) throw Error("kmeans_fit: rows are empty");

    std::mt19937_64 rng(seed);
    detail::LloydResult best;
    bool have = false;
    for (int run = 0; run < std::max(1, opt.n_init); ++run) {
        auto res = detail::lloyd(x, detail::kmeanspp_seed(x, k, rng), opt);
        if (!have || res.inertia < best.inertia) {
            best = std::move(res);
            have = true;
        }
    }

    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& ca = best.centroids[static_cast<std::size_t>(a)];
        const auto& cb = best.centroids[static_cast<std::size_t>(b)];
        if (ca.back() != cb.back()) return ca.back() < cb.back();
        return std::accumulate(ca.begin(), ca.end(), 0.0) < std::accumulate(cb.begin(), cb.end(), 0.0);
    });
    std::vector<int> rank(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(c)])] = c;

    ClusterModel m;
    m.k = k;
    m.seed = seed;
    m.inertia = best.inertia;
    m.iterations = best.iterations;
    m.cluster_order = order;
    m.inertia_history = best.history;
    for (int c : order) m.centroids.push_back(best.centroids[static_cast<std::size_t>(c)]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        m.producer_ids.push_back(rows[i].producer_id);
        m.labels.push_back(rank[static_cast<std::size_t>(best.labels[i])]);
    }
    return m;
}

/// Nearest centroid by Euclidean distance, ties to the lowest cluster index.
inline std::map<std::string, int> assign_profiles(const ClusterModel& model, const std::vector<ProfileRow>& rows) {
    std::map<std::string, int> out;
    for (const auto& r : rows) {
        if (model.centroids.empty() || r.values.size() != model.centroids.front().size())
            throw DimensionMismatch("assign_profiles: row of " + std::to_string(r.values.size()) +
                                    " entries vs centroids of " +
                                    std::to_string(model.centroids.empty() ? 0 : model.centroids.front().size()));
        out[r.producer_id] = detail::nearest(model.centroids, r.values);
    }
    return out;
}

/// (k, inertia) for k = 1..k_max with the same seed policy as kmeans_fit.
inline std::vector<std::pair<int, double>> elbow_curve(const std::vector<ProfileRow>& rows, int k_max,
                                                       std::uint64_t seed, const KMeansOptions& opt = {}) {
    k_max = std::min<int>(k_max, static_cast<int>(rows.size()));
    std::vector<std::pair<int, double>> out;
    for (int k = 1; k <= k_max; ++k) out.emplace_back(k, kmeans_fit(rows, k, seed, opt).inertia);
    return out;
}

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw DimensionMismatch("adjusted_rand_index: label vectors differ in length");
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1;
        ra[a[i]] += 1;
        rb[b[i]] += 1;
    }
    auto c2 = [](double x) { return x * (x - 1) / 2; };
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (auto& [_, v] : joint) sum_ij += c2(v);
    for (auto& [_, v] : ra) sum_a += c2(v);
    for (auto& [_, v] : rb) sum_b += c2(v);
    double total = c2(static_cast<double>(a.size()));
    double expected = sum_a * sum_b / total;
    double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_ij - expected) / (max_index - expected);
}

// ---------------------------------------------------------------------------
// Files

/// profiles.csv: producer_id, task, source, p1..pL (cumulative jump counts).
inline void write_profiles_csv(const std::vector<ProfileMatrix>& matrices, std::ostream& out) {
    std::size_t width = 0;
    for (const auto& m : matrices) width = std::max(width, m.length);
    out << "producer_id,task,source";
    for (std::size_t i = 1; i <= width; ++i) out << ",p" << i;
    out << '\n';
    for (const auto& m : matrices)
        for (const auto& r : m.rows) {
            out << csv_escape(r.producer_id) << ',' << to_string(m.task) << ',' << to_string(r.source);
            for (std::size_t i = 0; i < width; ++i) {
                out << ',';
                if (i < r.values.size()) out << static_cast<long long>(r.values[i]);
            }
            out << '\n';
        }
}

inline std::vector<ProfileMatrix> read_profiles_csv(std::istream& in) {
    auto rows = read_csv(in);
    std::vector<ProfileMatrix> out;
    std::map<Task, std::size_t> slot;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [line, f] = rows[r];
        if (f.size() < 4) throw ParseError(line, "profiles.csv rows need producer_id, task, source and values");
        try {
            Task task = task_from_string(f[1]);
            auto [it, fresh] = slot.try_emplace(task, out.size());
            if (fresh) {
                out.emplace_back();
                out.back().task = task;
            }
            auto& m = out[it->second];
            ProfileRow row{f[0], source_from_string(f[2]), {}};
            for (std::size_t i = 3; i < f.size() && !f[i].empty(); ++i) row.values.push_back(std::stod(f[i]));
            if (m.rows.empty()) m.length = row.values.size();
            if (row.values.size() != m.length) throw ParseError(line, "ragged profile row");
            m.rows.push_back(std::move(row));
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(line, e.what());
        }
    }
    return out;
}

/// clusters.json. `assigned` carries labels of rows that were only assigned.
inline nlohmann::ordered_json to_json(const ClusterModel& m, const std::map<std::string, int>& assigned = {},
                                      std::optional<Task> task = std::nullopt) {
    nlohmann::ordered_json j;
    if (task) j["task"] = to_string(*task);
    j["k"] = m.k;
    j["seed"] = m.seed;
    j["centroids"] = m.centroids;
    nlohmann::ordered_json labels = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < m.producer_ids.size(); ++i) labels[m.producer_ids[i]] = m.labels[i];
    j["labels"] = std::move(labels);
    if (!assigned.empty()) {
        nlohmann::ordered_json a = nlohmann::ordered_json::object();
        for (const auto& [id, c] : assigned) a[id] = c;
        j["assigned"] = std::move(a);
    }
    nlohmann::ordered_json names = nlohmann::ordered_json::object();
    auto n = default_cluster_names(m.k);
    for (int c = 0; c < m.k; ++c) names[std::to_string(c)] = n[static_cast<std::size_t>(c)];
    j["cluster_names"] = std::move(names);
    j["inertia"] = m.inertia;
    j["iterations"] = m.iterations;
    j["cluster_order"] = m.cluster_order;
    return j;
}

struct LoadedClusters {
    ClusterModel model;
    std::map<std::string, int> assigned;
    std::optional<Task> task;
};

inline LoadedClusters clusters_from_json(const nlohmann::json& j) {
    LoadedClusters out;
    try {
        auto& m = out.model;
        m.k = j.at("k").get<int>();
        m.seed = j.value("seed", std::uint64_t{0});
        m.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
        for (const auto& [id, c] : j.at("labels").items()) {
            m.producer_ids.push_back(id);
            m.labels.push_back(c.get<int>());
        }
        if (j.contains("assigned"))
            for (const auto& [id, c] : j.at("assigned").items()) out.assigned[id] = c.get<int>();
        m.inertia = j.value("inertia", 0.0);
        m.iterations = j.value("iterations", 0);
        if (j.contains("cluster_order")) m.cluster_order = j.at("cluster_order").get<std::vector<int>>();
        if (j.contains("task")) out.task = task_from_string(j.at("task").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("clusters file: ") + e.what());
    }
    if (static_cast<std::size_t>(out.model.k) != out.model.centroids.size())
        throw Error("clusters file: k does not match the number of centroids");
    return out;
}

}  // namespace fluxjump
