#include <catch_amalgamated.hpp>

#include <sstream>

#include "fluxjump/profiles.hpp"
#include "test_support.hpp"

using namespace fluxjump;

namespace {

// Pair-counting form of the adjusted Rand index, O(n^2).
double ari_pairs(const std::vector<int>& a, const std::vector<int>& b) {
    double ss = 0, sd = 0, ds = 0, dd = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            bool sa = a[i] == a[j], sb = b[i] == b[j];
            (sa ? (sb ? ss : sd) : (sb ? ds : dd)) += 1;
        }
    double den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if (den == 0) return 1.0;
    return 2.0 * (ss * dd - sd * ds) / den;
}

// Global minimum of the k-means objective by enumerating every labelling.
double optimal_inertia(const std::vector<std::vector<double>>& x, int k) {
    const std::size_t n = x.size(), dim = x.front().size();
    std::vector<int> lab(n, 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        std::vector<std::vector<double>> c(static_cast<std::size_t>(k), std::vector<double>(dim, 0));
        std::vector<int> cnt(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++cnt[static_cast<std::size_t>(lab[i])];
            for (std::size_t d = 0; d < dim; ++d) c[static_cast<std::size_t>(lab[i])][d] += x[i][d];
        }
        bool all_used = std::all_of(cnt.begin(), cnt.end(), [](int v) { return v > 0; });
        if (all_used) {
            double s = 0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t d = 0; d < dim; ++d) {
                    auto l = static_cast<std::size_t>(lab[i]);
                    double t = x[i][d] - c[l][d] / cnt[l];
                    s += t * t;
                }
            best = std::min(best, s);
        }
        std::size_t p = 0;
        while (p < n && ++lab[p] == k) lab[p++] = 0;
        if (p == n) break;
    }
    return best;
}

std::vector<ProfileRow> rows_from(const std::vector<std::vector<double>>& x) {
    std::vector<ProfileRow> rows;
    for (std::size_t i = 0; i < x.size(); ++i) rows.push_back({"r" + std::to_string(i), Source::human, x[i]});
    return rows;
}

// Producers with exactly round(rate * T) jumps at random positions.
std::vector<ProfileRow> planted_rows(std::mt19937_64& rng, const std::vector<double>& rates, int per_group,
                                     std::size_t transitions, std::vector<int>& truth) {
    std::vector<ProfileRow> rows;
    for (int g = 0; g < static_cast<int>(rates.size()); ++g)
        for (int i = 0; i < per_group; ++i) {
            std::vector<std::uint8_t> jv(transitions, 0);
            auto count = static_cast<std::size_t>(std::lround(rates[static_cast<std::size_t>(g)] * double(transitions)));
            std::fill(jv.begin(), jv.begin() + static_cast<std::ptrdiff_t>(count), 1);
            std::shuffle(jv.begin(), jv.end(), rng);
            auto prof = jump_profile(JumpVector{"g" + std::to_string(g) + "_" + std::to_string(i), Task::aut_brick, jv,
                                                JumpKind::combined});
            rows.push_back({prof.producer_id, Source::human, {prof.values.begin(), prof.values.end()}});
            truth.push_back(g);
        }
    return rows;
}

}  // namespace

TEST_CASE("jump profiles are prefix sums") {
    auto p = jump_profile(JumpVector{"p", Task::aut_brick, {1, 0, 1}, JumpKind::combined});
    CHECK(p.values == std::vector<int>{1, 1, 2});
    std::mt19937_64 rng(2);
    for (int round = 0; round < 200; ++round) {
        std::vector<std::uint8_t> jv(rng() % 30);
        for (auto& v : jv) v = static_cast<std::uint8_t>(rng() & 1);
        auto prof = jump_profile(JumpVector{"p", Task::aut_brick, jv, JumpKind::combined});
        REQUIRE(prof.values.size() == jv.size());
        for (std::size_t i = 0; i < jv.size(); ++i) {
            CHECK(prof.values[i] - (i ? prof.values[i - 1] : 0) == jv[i]);
            CHECK(prof.values[i] <= static_cast<int>(i) + 1);
        }
        if (!jv.empty()) CHECK(prof.values.back() == static_cast<int>(std::count(jv.begin(), jv.end(), 1)));
    }
    CHECK_THROWS(jump_profile(JumpVector{"p", Task::aut_brick, {2}, JumpKind::combined}));
}

TEST_CASE("profile matrix truncates and excludes short sequences") {
    std::vector<ProfileInput> in = {
        {"a", Task::aut_brick, Source::human, {1, 1, 0, 1}},
        {"b", Task::aut_brick, Source::llm, {0, 1}},
        {"c", Task::aut_brick, Source::human, {0, 0, 1}},
        {"d", Task::vft_animals, Source::human, {1, 1, 1}},
    };
    auto m = build_profile_matrix(in, Task::aut_brick, 4);
    CHECK(m.length == 3);
    REQUIRE(m.rows.size() == 2);
    CHECK(m.rows[0].values == std::vector<double>{1, 2, 2});
    CHECK(m.rows[1].values == std::vector<double>{0, 0, 1});
    CHECK(m.excluded == std::vector<std::string>{"b"});
    CHECK_THROWS(build_profile_matrix(in, Task::aut_paperclip, 4));
    CHECK_THROWS(build_profile_matrix(in, Task::aut_brick, 1));
}

TEST_CASE("median lengths use valid human sequences") {
    Corpus c;
    auto add = [&](Task t, Source s, std::size_t n, bool valid) {
        ResponseSequence seq;
        seq.task = t;
        seq.source = s;
        seq.valid = valid;
        seq.responses.resize(n);
        c.push_back(seq);
    };
    add(Task::aut_brick, Source::human, 10, true);
    add(Task::aut_brick, Source::human, 20, true);
    add(Task::aut_paperclip, Source::human, 18, true);
    add(Task::aut_paperclip, Source::human, 19, true);
    add(Task::aut_brick, Source::llm, 2, true);
    add(Task::aut_brick, Source::human, 1, false);
    add(Task::vft_animals, Source::human, 3, true);
    CHECK(median_length(c, Task::aut_brick) == 10);
    CHECK(default_profile_length(c) == 18);
    CHECK(lower_median({4, 1, 3, 2}) == 2);
}

TEST_CASE("Lloyd inertia never increases and k-means reaches the global optimum on small sets") {
    std::mt19937_64 rng(17);
    for (int round = 0; round < 60; ++round) {
        auto x = testsupport::random_points(rng, 4 + rng() % 5, 2);
        int k = 2 + static_cast<int>(rng() % 2);
        auto model = kmeans_fit(rows_from(x), k, rng());
        for (std::size_t i = 1; i < model.inertia_history.size(); ++i)
            CHECK(model.inertia_history[i] <= model.inertia_history[i - 1] + 1e-12);
        CHECK(model.inertia >= optimal_inertia(x, k) - 1e-9);
    }
    // Well separated blobs: the optimum is unambiguous and must be found.
    for (int round = 0; round < 30; ++round) {
        int k = 2 + round % 2;
        auto x = testsupport::random_points(rng, 8, 2);
        for (std::size_t i = 0; i < x.size(); ++i) x[i][0] = 0.05 * x[i][0] + 10.0 * static_cast<double>(i % k);
        for (auto& p : x) p[1] *= 0.05;
        auto model = kmeans_fit(rows_from(x), k, static_cast<std::uint64_t>(round));
        CHECK(model.inertia == Catch::Approx(optimal_inertia(x, k)).epsilon(1e-9));
    }
}

TEST_CASE("k-means is deterministic per seed and orders clusters by final value") {
    std::mt19937_64 rng(5);
    std::vector<int> truth;
    auto rows = planted_rows(rng, {0.95, 0.4, 0.7}, 30, 19, truth);
    auto a = kmeans_fit(rows, 3, 42), b = kmeans_fit(rows, 3, 42);
    CHECK(a.labels == b.labels);
    CHECK(a.centroids == b.centroids);
    for (int c = 1; c < 3; ++c) CHECK(a.centroids[c - 1].back() <= a.centroids[c].back());
    // planted group 1 has the lowest rate -> persistent, group 0 -> flexible
    CHECK(testsupport::best_match_accuracy(truth, a.labels, 3) == 1.0);
    CHECK(a.labels[0] == 2);
    CHECK(a.labels[30] == 0);
    CHECK(a.labels[60] == 1);
}

TEST_CASE("planted groups are recovered") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::vector<int> truth;
        auto rows = planted_rows(rng, {0.4, 0.7, 0.95}, 40, 19, truth);
        auto m = kmeans_fit(rows, 3, seed);
        double ari = adjusted_rand_index(truth, m.labels);
        CHECK(ari == Catch::Approx(ari_pairs(truth, m.labels)).epsilon(1e-12));
        CHECK(ari == Catch::Approx(testsupport::ari_oracle(truth, m.labels)).epsilon(1e-12));
        CHECK(ari >= 0.9);
    }
}

TEST_CASE("adjusted Rand index matches the pair-counting oracle") {
    std::mt19937_64 rng(99);
    for (int round = 0; round < 300; ++round) {
        std::size_t n = 2 + rng() % 40;
        int ka = 1 + static_cast<int>(rng() % 5), kb = 1 + static_cast<int>(rng() % 5);
        std::vector<int> a(n), b(n);
        for (auto& v : a) v = static_cast<int>(rng() % static_cast<unsigned>(ka));
        for (auto& v : b) v = static_cast<int>(rng() % static_cast<unsigned>(kb));
        CHECK(adjusted_rand_index(a, b) == Catch::Approx(ari_pairs(a, b)).margin(1e-12));
        CHECK(adjusted_rand_index(a, a) == Catch::Approx(1.0));
    }
    CHECK_THROWS_AS(adjusted_rand_index({0, 1}, {0}), DimensionMismatch);
}

TEST_CASE("elbow curve drops sharply at the planted k") {
    std::mt19937_64 rng(23);
    std::vector<int> truth;
    auto rows = planted_rows(rng, {0.4, 0.7, 0.95}, 30, 19, truth);
    auto curve = elbow_curve(rows, 6, 0);
    REQUIRE(curve.size() == 6);
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].second <= curve[i - 1].second + 1e-9);
    double drop23 = curve[1].second - curve[2].second, drop34 = curve[2].second - curve[3].second;
    CHECK(drop23 > 5 * drop34);
}

TEST_CASE("LLM rows are assigned to the nearest human centroid") {
    std::mt19937_64 rng(4);
    std::vector<int> truth;
    auto rows = planted_rows(rng, {0.4, 0.7, 0.95}, 30, 19, truth);
    auto m = kmeans_fit(rows, 3, 7);
    std::vector<ProfileRow> llm = {{"llm-hot", Source::llm, {}}, {"llm-cold", Source::llm, {}}};
    for (int i = 1; i <= 19; ++i) {
        llm[0].values.push_back(i);
        llm[1].values.push_back(std::floor(0.35 * i));
    }
    auto assigned = assign_profiles(m, llm);
    CHECK(assigned.at("llm-hot") == 2);
    CHECK(assigned.at("llm-cold") == 0);
    std::vector<ProfileRow> wrong = {{"x", Source::llm, {1, 2}}};
    CHECK_THROWS_AS(assign_profiles(m, wrong), DimensionMismatch);
}

TEST_CASE("profiles.csv and clusters.json round-trip") {
    ProfileMatrix a{Task::aut_brick, 3, {{"p,1", Source::human, {0, 1, 1}}, {"q", Source::llm, {1, 2, 3}}}, {}};
    ProfileMatrix b{Task::vft_animals, 2, {{"r", Source::human, {1, 1}}}, {}};
    std::ostringstream out;
    write_profiles_csv({a, b}, out);
    std::istringstream in(out.str());
    auto back = read_profiles_csv(in);
    REQUIRE(back.size() == 2);
    CHECK(back[0].rows[0].producer_id == "p,1");
    CHECK(back[0].rows[1].values == a.rows[1].values);
    CHECK(back[1].length == 2);

    auto m = kmeans_fit(a.rows, 2, 3);
    auto j = nlohmann::json::parse(to_json(m, {{"q", 1}}, Task::aut_brick).dump());
    auto loaded = clusters_from_json(j);
    CHECK(loaded.model.centroids == m.centroids);
    CHECK(loaded.model.labels.size() == m.labels.size());
    CHECK(loaded.assigned.at("q") == 1);
    CHECK(loaded.task == std::optional<Task>(Task::aut_brick));
    j["k"] = 5;
    CHECK_THROWS(clusters_from_json(j));
    CHECK(default_cluster_names(3) == std::vector<std::string>{"persistent", "mixed", "flexible"});
}
