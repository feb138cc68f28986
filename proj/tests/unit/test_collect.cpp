#include <catch_amalgamated.hpp>

#include <atomic>

#include "fluxjump/collect.hpp"
#include "test_support.hpp"

using namespace fluxjump;
using testsupport::TempDir;

namespace {

ResponseSequence human(Task task, const std::vector<std::string>& texts, const std::string& id = "h") {
    ResponseSequence s;
    s.producer_id = id;
    s.task = task;
    for (const auto& t : texts) {
        ResponseRecord r;
        r.task = task;
        r.position = static_cast<int>(s.responses.size()) + 1;
        r.clean_text = t;
        r.raw_text = t;
        s.responses.push_back(r);
    }
    return s;
}

std::vector<std::string> words(int count, int words_each) {
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) {
        std::string s;
        for (int w = 0; w < words_each; ++w) s += (w ? " w" : "w") + std::to_string(w);
        out.push_back(s);
    }
    return out;
}

PromptTemplates shipped_templates() { return load_templates(std::filesystem::path(FLUXJUMP_DATA_DIR) / "prompts"); }

std::vector<ChatProvider> providers_for(const std::vector<std::string>& models, const std::string& key_env = "") {
    std::vector<ChatProvider> out;
    for (const auto& m : models) out.push_back({m, "http://fake/" + m + "/chat", key_env, m + "-id", 2, {}});
    return out;
}

// Echoes the model and temperature back as a two-item list.
HttpResponse echo_reply(const HttpRequest& req) {
    auto j = nlohmann::json::parse(req.body);
    std::string content = "1. " + j.at("model").get<std::string>() + "\n2. t" + std::to_string(j.at("temperature").get<double>());
    nlohmann::json body{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
    return {200, body.dump()};
}

}  // namespace

TEST_CASE("prompt parameters follow the ceiling/floor rules") {
    // brick: mean count (10 + 11 + 10 + 10 + 10) / 5 = 10.2; paperclip: 12.7 via 127 responses over 10 sequences
    Corpus c;
    for (int i = 0; i < 5; ++i) c.push_back(human(Task::aut_brick, words(i == 1 ? 11 : 10, 4)));
    for (int i = 0; i < 10; ++i) c.push_back(human(Task::aut_paperclip, words(i < 7 ? 13 : 12, 3)));
    c.push_back(human(Task::vft_animals, words(19, 1)));
    c.push_back(human(Task::vft_animals, words(19, 2)));
    auto p = derive_prompt_params(c);
    CHECK(p.n_aut == 13);
    CHECK(p.m_aut == 4);
    CHECK(p.n_vft == 19);
    CHECK(p.m_vft == 1);

    std::mt19937_64 rng(1);
    for (int k = 0; k < 10; ++k) {
        std::shuffle(c.begin(), c.end(), rng);
        CHECK(derive_prompt_params(c) == p);
    }
    Corpus no_vft(c.begin(), c.end());
    std::erase_if(no_vft, [](const auto& s) { return s.task == Task::vft_animals; });
    CHECK_THROWS(derive_prompt_params(no_vft));
}

TEST_CASE("prompts interpolate the parameters") {
    auto t = shipped_templates();
    PromptParams p{13, 19, 4, 2};
    auto aut = build_prompt(Task::aut_brick, p, t);
    CHECK(aut.find("13") != std::string::npos);
    CHECK(aut.find("4") != std::string::npos);
    CHECK(aut.find("brick") != std::string::npos);
    CHECK(aut.find('{') == std::string::npos);
    CHECK(build_prompt(Task::aut_paperclip, p, t).find("paperclip") != std::string::npos);
    CHECK(build_prompt(Task::vft_animals, p, t).find("19 animals") != std::string::npos);
    CHECK(build_prompt(Task::aut_brick, p, t) == aut);
    CHECK(template_hash(t).size() == 64);
    CHECK_THROWS_AS(prompt_params_from_json(nlohmann::json{{"n_aut", 0}, {"n_vft", 1}, {"m_aut", 1}, {"m_vft", 1}}),
                    ConfigError);
}

TEST_CASE("LLM list parsing") {
    auto two = parse_llm_output("1. doorstop\n2. weight", 2);
    CHECK(two.items == std::vector<std::string>{"doorstop", "weight"});
    CHECK_FALSE(two.count_mismatch);

    auto three = parse_llm_output("- a\n- b\n- c", 2);
    CHECK(three.items == std::vector<std::string>{"a", "b", "c"});
    CHECK(three.count_mismatch);

    CHECK_THROWS_AS(parse_llm_output("", 2), Error);
    CHECK_THROWS_AS(parse_llm_output(" \n\t\n", 2), Error);

    auto pre = parse_llm_output("Here are 3 uses:\n1) Doorstop\n2) \"Paperweight\"\n3: Step", 3);
    CHECK(pre.items == std::vector<std::string>{"Doorstop", "Paperweight", "Step"});
    auto commas = parse_llm_output("cat, dog; cow", 3);
    CHECK(commas.items == std::vector<std::string>{"cat", "dog", "cow"});
    auto bullets = parse_llm_output("* one\n• two\n\n  3. three  ", 3);
    CHECK(bullets.items == std::vector<std::string>{"one", "two", "three"});
}

TEST_CASE("sweep covers every cell, ordered by key") {
    std::vector<std::string> models = {"m1", "m2", "m3", "m4", "m5", "m6", "m7", "m8"};
    SweepSpec spec;
    spec.models = models;
    spec.task = Task::aut_brick;
    SweepOptions opt;
    opt.prompt = "list uses";
    std::atomic<int> calls{0};
    opt.transport = [&](const HttpRequest& req) {
        ++calls;
        return echo_reply(req);
    };
    auto res = run_sweep(spec, providers_for(models), opt);
    CHECK(res.outputs.size() == 440);
    CHECK(res.failed.empty());
    CHECK(calls == 440);
    for (std::size_t i = 1; i < res.outputs.size(); ++i) {
        const auto &a = res.outputs[i - 1], &b = res.outputs[i];
        CHECK(std::tie(a.model, a.temperature, a.sample) < std::tie(b.model, b.temperature, b.sample));
    }
    CHECK(res.outputs.front().text.find("m1-id") != std::string::npos);

    auto corpus = outputs_to_corpus(res.outputs, 2);
    REQUIRE(corpus.size() == 440);
    CHECK(corpus[0].producer_id == "m1_t0.0_s1");
    CHECK(corpus[0].responses[0].temperature == std::optional<double>(0.0));
    CHECK(corpus[0].source == Source::llm);
}

TEST_CASE("failed cells are retried then recorded once") {
    SweepSpec spec;
    spec.models = {"m"};
    spec.temperatures = {0.0, 0.5};
    spec.samples_per_cell = 2;
    SweepOptions opt;
    opt.prompt = "p";
    opt.retry.base_delay = std::chrono::milliseconds(1);
    std::atomic<int> calls_hot{0};
    opt.transport = [&](const HttpRequest& req) {
        auto j = nlohmann::json::parse(req.body);
        if (j.at("temperature").get<double>() > 0.4) {
            ++calls_hot;
            return HttpResponse{503, "overloaded"};
        }
        return echo_reply(req);
    };
    TempDir logs;
    opt.log_dir = logs.path();
    testsupport::LogCapture cap;
    auto res = run_sweep(spec, providers_for({"m"}), opt);
    CHECK(res.outputs.size() == 2);
    CHECK(res.failed.size() == 2);
    CHECK(calls_hot == 2 * opt.retry.max_attempts);
    CHECK(std::count_if(cap.lines.begin(), cap.lines.end(),
                        [](const auto& l) { return l.find("sweep cell") != std::string::npos; }) == 2);
    auto failed_log = nlohmann::json::parse(testsupport::slurp(cell_log_path(logs.path(), "m", 0.5, 1)));
    CHECK(failed_log["status"] == "failed");
    CHECK(failed_log["attempts"] == 3);
}

TEST_CASE("auth failures abort the sweep and name the key variable") {
    SweepSpec spec;
    spec.models = {"m"};
    spec.temperatures = {0.0};
    spec.samples_per_cell = 1;
    SweepOptions opt;
    opt.prompt = "p";
    opt.transport = [](const HttpRequest&) { return HttpResponse{401, "bad key"}; };
    ::setenv("FLUXJUMP_TEST_KEY", "wrong", 1);
    try {
        run_sweep(spec, providers_for({"m"}, "FLUXJUMP_TEST_KEY"), opt);
        FAIL("expected AuthError");
    } catch (const AuthError& e) {
        CHECK(std::string(e.what()).find("FLUXJUMP_TEST_KEY") != std::string::npos);
    }
    ::unsetenv("FLUXJUMP_TEST_KEY");
    CHECK_THROWS_AS(run_sweep(spec, providers_for({"m"}, "FLUXJUMP_TEST_KEY"), opt), AuthError);
    spec.models = {"unknown"};
    CHECK_THROWS_AS(run_sweep(spec, providers_for({"m"}), opt), ConfigError);
}

TEST_CASE("recorded sweeps replay byte for byte without a transport") {
    SweepSpec spec;
    spec.models = {"a", "b"};
    spec.temperatures = {0.1, 0.9};
    spec.samples_per_cell = 2;
    TempDir rec, replay_logs;
    SweepOptions live;
    live.prompt = "p";
    live.log_dir = rec.path();
    live.transport = echo_reply;
    auto recorded = run_sweep(spec, providers_for(spec.models), live);

    SweepOptions replay;
    replay.fixture_dir = rec.path();
    replay.log_dir = replay_logs.path();
    auto replayed = run_sweep(spec, providers_for(spec.models), replay);
    REQUIRE(replayed.outputs.size() == recorded.outputs.size());
    for (std::size_t i = 0; i < replayed.outputs.size(); ++i) CHECK(replayed.outputs[i].text == recorded.outputs[i].text);
    for (const auto& m : spec.models)
        for (double t : spec.temperatures)
            for (int s = 1; s <= 2; ++s)
                CHECK(testsupport::slurp(cell_log_path(rec.path(), m, t, s)) ==
                      testsupport::slurp(cell_log_path(replay_logs.path(), m, t, s)));

    // a single cell from fixtures, and a missing fixture is recorded as failed
    SweepSpec one{{"a"}, {0.1}, 1, Task::aut_brick};
    SweepOptions fx;
    fx.fixture_dir = rec.path();
    CHECK(run_sweep(one, providers_for({"a"}), fx).outputs.size() == 1);
    one.temperatures = {0.3};
    auto miss = run_sweep(one, providers_for({"a"}), fx);
    CHECK(miss.outputs.empty());
    CHECK(miss.failed.size() == 1);
}

TEST_CASE("sweep spec and provider parsing") {
    auto s = sweep_spec_from_json(nlohmann::json::parse(R"({"models": ["x"], "task": "vft_animals"})"));
    CHECK(s.temperatures.size() == 11);
    CHECK(s.samples_per_cell == 5);
    CHECK(temperature_label(s.temperatures[3]) == "0.3");
    CHECK(temperature_label(1.0) == "1.0");
    CHECK_THROWS_AS(sweep_spec_from_json(nlohmann::json::parse(R"({"models": ["x"], "task": "vft_animals", "temperatures": [1.5]})")),
                    ConfigError);
    auto p = load_providers(nlohmann::json::parse(R"([{"name": "x", "endpoint": "http://e", "api_key_env": "K"}])"));
    REQUIRE(p.size() == 1);
    CHECK(p[0].model_id == "x");
    CHECK(p[0].concurrency == 2);
}
