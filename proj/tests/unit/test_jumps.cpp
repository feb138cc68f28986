#include <catch_amalgamated.hpp>

#include <sstream>

#include "fluxjump/jumps.hpp"
#include "test_support.hpp"

using namespace fluxjump;

namespace {

ResponseSequence sequence(const std::string& id, const std::vector<std::string>& texts) {
    ResponseSequence s;
    s.producer_id = id;
    int pos = 1;
    for (const auto& t : texts) {
        ResponseRecord r;
        r.producer_id = id;
        r.position = pos++;
        r.clean_text = t;
        s.responses.push_back(r);
    }
    return s;
}

std::vector<CalibrationSample> separated_pool(double jump_sim, double stay_sim, std::size_t n) {
    std::vector<CalibrationSample> pool;
    for (std::size_t i = 0; i < n; ++i) {
        pool.push_back({1, 1, jump_sim});
        pool.push_back({1, 0, stay_sim});
    }
    return pool;
}

}  // namespace

TEST_CASE("jump_cat codes category changes") {
    CategoryMap m(Task::aut_brick, {"a", "b", "c", "d"}, {0, 0, 1, 2});
    auto jv = jump_cat(sequence("p", {"a", "b", "c", "c", "a", "d"}), m);
    CHECK(jv.values == std::vector<std::uint8_t>{0, 1, 0, 1, 1});
    CHECK(jv.count() == 3);
    CHECK(jump_cat(sequence("p", {"a"}), m).values.empty());
    CHECK_THROWS_AS(jump_cat(sequence("p", {"a", "zzz"}), m), MissingEntry);
}

TEST_CASE("jump_ss thresholds successive similarity") {
    ResponseSequence seq = sequence("p", {"x", "y", "z"});
    std::vector<double> sims = {0.3, 0.6};
    CHECK(jump_ss_from_sims(seq, sims, 0.5).values == std::vector<std::uint8_t>{1, 0});
    CHECK(jump_ss_from_sims(seq, sims, 0.6, ThetaTie::no_jump).values == std::vector<std::uint8_t>{1, 0});
    CHECK(jump_ss_from_sims(seq, sims, 0.6, ThetaTie::jump).values == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("combined jumps never exceed either component; jump_ss is monotone in theta") {
    std::mt19937_64 rng(12);
    auto store = testsupport::store_of(testsupport::random_points(rng, 40, 3), "w");
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(i % 5);
    CategoryMap map(Task::aut_brick, store.texts(), labels);
    std::uniform_int_distribution<int> pick(0, 39), len(2, 25);
    for (int round = 0; round < 200; ++round) {
        std::vector<std::string> texts;
        for (int k = len(rng); k > 0; --k) texts.push_back("w" + std::to_string(pick(rng)));
        auto seq = sequence("p", texts);
        auto jc = jump_cat(seq, map);
        std::uniform_real_distribution<double> th(-1.0, 1.0);
        double t1 = th(rng), t2 = th(rng);
        if (t1 > t2) std::swap(t1, t2);
        auto s1 = jump_ss(seq, store, t1), s2 = jump_ss(seq, store, t2);
        for (std::size_t i = 0; i < s1.values.size(); ++i) CHECK(s1.values[i] <= s2.values[i]);
        auto comb = combine_jumps(jc, s2);
        CHECK(comb.values.size() == texts.size() - 1);
        for (std::size_t i = 0; i < comb.values.size(); ++i) {
            CHECK(comb.values[i] <= jc.values[i]);
            CHECK(comb.values[i] <= s2.values[i]);
            CHECK(comb.values[i] == (jc.values[i] && s2.values[i]));
        }
        // identical consecutive responses are never a jump of any kind
        auto rep = sequence("p", {texts[0], texts[0]});
        CHECK(combine_jumps(jump_cat(rep, map), jump_ss(rep, store, t2)).values == std::vector<std::uint8_t>{0});
    }
    auto a = jump_cat(sequence("p", {"w0", "w1"}), map);
    auto b = jump_cat(sequence("p", {"w0", "w1", "w2"}), map);
    CHECK_THROWS_AS(combine_jumps(a, b), DimensionMismatch);
}

TEST_CASE("confusion rates against gold") {
    JumpVector pred{"p", Task::aut_brick, {1, 1, 0, 0, 1}, JumpKind::combined};
    GoldJumps gold{"p", Task::aut_brick, {1, 0, 0, 1, 1}};
    auto r = confusion_rates(pred, gold);
    CHECK(*r.tpr == Catch::Approx(2.0 / 3.0));
    CHECK(*r.tnr == Catch::Approx(0.5));
    GoldJumps all_jumps{"p", Task::aut_brick, {1, 1, 1, 1, 1}};
    CHECK_FALSE(confusion_rates(pred, all_jumps).tnr.has_value());
}

TEST_CASE("calibration picks the middle of the separating interval") {
    std::vector<CalibrationSample> pool;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> lo(0.05, 0.5), hi(0.8, 0.98);
    for (int i = 0; i < 200; ++i) {
        pool.push_back({1, 1, lo(rng)});
        pool.push_back({1, 0, hi(rng)});
    }
    auto cal = calibrate_theta(pool);
    CHECK(cal.feasible_lo <= 0.5);
    CHECK(cal.feasible_hi >= 0.8);
    CHECK(cal.theta > 0.5);
    CHECK(cal.theta < 0.8);
    CHECK(cal.tpr >= 0.8);
    CHECK(cal.tnr >= 0.8);

    auto sym = calibrate_theta(separated_pool(0.45, 0.85, 20));
    CHECK(sym.theta == Catch::Approx(0.65).margin(0.01));
    CHECK(sym.tpr == 1.0);
    CHECK(sym.tnr == 1.0);
}

TEST_CASE("calibration result matches a brute-force scan") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int checked = 0;
    for (int round = 0; round < 40; ++round) {
        std::vector<CalibrationSample> pool;
        for (int i = 0; i < 60; ++i) {
            std::uint8_t gold = u(rng) < 0.5;
            double sim = gold ? 0.5 * u(rng) + 0.1 * u(rng) : 0.45 + 0.5 * u(rng);
            pool.push_back({static_cast<std::uint8_t>(u(rng) < 0.95 ? 1 : gold), gold, sim});
        }
        CalibrationOptions opt;
        opt.grid_step = 0.01;
        try {
            auto cal = calibrate_theta(pool, opt);
            // the reported rates are what the theta actually yields
            std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
            for (const auto& s : pool) {
                bool pred = s.cat && s.sim < cal.theta;
                if (s.gold)
                    (pred ? tp : fn)++;
                else
                    (pred ? fp : tn)++;
            }
            CHECK(cal.tpr == Catch::Approx(double(tp) / double(tp + fn)));
            CHECK(cal.tnr == Catch::Approx(double(tn) / double(tn + fp)));
            CHECK(cal.feasible_lo <= cal.theta);
            CHECK(cal.theta <= cal.feasible_hi);
            ++checked;
        } catch (const CalibrationError& e) {
            CHECK(std::min(e.best_tpr(), e.best_tnr()) < 0.8);
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("infeasible calibration throws with the best rates") {
    // gold labels independent of similarity
    std::vector<CalibrationSample> pool;
    for (int i = 0; i < 100; ++i) pool.push_back({1, static_cast<std::uint8_t>(i % 2), (i / 2) / 50.0});
    try {
        calibrate_theta(pool);
        FAIL("expected CalibrationError");
    } catch (const CalibrationError& e) {
        CHECK(e.best_tpr() < 0.8 + 1e-12);
        CHECK(std::min(e.best_tpr(), e.best_tnr()) < 0.8);
        CHECK(std::string(e.what()).find("best achievable") != std::string::npos);
    }
    CHECK_THROWS_AS(calibrate_theta(std::vector<CalibrationSample>{}), Error);
    std::vector<CalibrationSample> jumps_only = {{1, 1, 0.2}, {1, 1, 0.3}};
    CHECK_THROWS_AS(calibrate_theta(jumps_only), Error);
}

TEST_CASE("gold and jumps files round-trip") {
    std::vector<GoldJumps> gold = {{"a,b", Task::aut_brick, {0, 1, 1}}, {"c", Task::vft_animals, {}}};
    std::ostringstream out;
    write_gold(gold, out);
    testsupport::TempDir dir;
    testsupport::spit(dir / "gold.jsonl", out.str());
    auto back = load_gold(dir / "gold.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].producer_id == "a,b");
    CHECK(back[0].values == gold[0].values);
    testsupport::spit(dir / "bad.jsonl", "{\"producer_id\":\"a\",\"task\":\"aut_brick\",\"values\":[0,2]}\n");
    CHECK_THROWS_AS(load_gold(dir / "bad.jsonl"), ParseError);

    std::vector<SequenceJumps> js = {{"a,b", Task::aut_brick, {1, 0}, {1, 1}, {1, 0}}, {"c", Task::aut_paperclip, {0}, {1}, {0}}};
    std::ostringstream jout;
    write_jumps_csv(js, jout);
    std::istringstream jin(jout.str());
    auto jback = read_jumps_csv(jin);
    REQUIRE(jback.size() == 2);
    CHECK(jback[0].producer_id == "a,b");
    CHECK(jback[0].ss == js[0].ss);
    CHECK(jback[1].combined == js[1].combined);
}
