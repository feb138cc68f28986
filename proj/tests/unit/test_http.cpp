#include <catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include "fluxjump/collect.hpp"
#include "fluxjump/embedding.hpp"
#include "fluxjump/http_transport.hpp"
#include "test_support.hpp"

using namespace fluxjump;

namespace {

// Local server on an ephemeral port, stopped on scope exit.
class LocalServer {
public:
    httplib::Server svr;
    int port = 0;

    void start() {
        port = svr.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread_ = std::thread([this] { svr.listen_after_bind(); });
        svr.wait_until_ready();
    }
    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port) + path; }
    ~LocalServer() {
        svr.stop();
        if (thread_.joinable()) thread_.join();
    }

private:
    std::thread thread_;
};

}  // namespace

TEST_CASE("http transport posts JSON and surfaces status codes") {
    LocalServer s;
    std::atomic<int> flaky_calls{0};
    s.svr.Post("/echo", [](const httplib::Request& req, httplib::Response& res) {
        res.set_content(nlohmann::json{{"got", nlohmann::json::parse(req.body)},
                                       {"auth", req.get_header_value("Authorization")}}
                            .dump(),
                        "application/json");
    });
    s.svr.Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
        if (++flaky_calls < 3) {
            res.status = 503;
            return;
        }
        res.set_content("{}", "application/json");
    });
    s.svr.Post("/denied", [](const httplib::Request&, httplib::Response& res) { res.status = 403; });
    s.start();

    auto t = make_http_transport(std::chrono::seconds(5));
    auto r = t({s.url("/echo"), R"({"x": 1})", {{"Authorization", "Bearer k"}}});
    CHECK(r.status == 200);
    auto j = nlohmann::json::parse(r.body);
    CHECK(j["got"]["x"] == 1);
    CHECK(j["auth"] == "Bearer k");

    RetryPolicy fast{3, std::chrono::milliseconds(1)};
    CHECK(post_with_retry(t, {s.url("/flaky"), "{}", {}}, fast, "").status == 200);
    CHECK(flaky_calls == 3);

    CHECK_THROWS_AS(post_with_retry(t, {s.url("/denied"), "{}", {}}, fast, "SOME_KEY"), AuthError);
    CHECK_THROWS_AS(t({"not a url", "{}", {}}), HttpError);
}

TEST_CASE("unreachable hosts are HTTP errors with status 0") {
    auto t = make_http_transport(std::chrono::seconds(1));
    try {
        t({"http://127.0.0.1:1/x", "{}", {}});
        FAIL("expected HttpError");
    } catch (const HttpError& e) {
        CHECK(e.status() == 0);
    }
}

TEST_CASE("embedding fetch over a live socket") {
    LocalServer s;
    s.svr.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
        auto texts = nlohmann::json::parse(req.body).at("texts");
        nlohmann::json vectors = nlohmann::json::array();
        for (const auto& t : texts) {
            double len = static_cast<double>(t.get<std::string>().size());
            vectors.push_back({len, 1.0, 0.0});
        }
        res.set_content(nlohmann::json{{"model", "local"}, {"dim", 3}, {"vectors", vectors}}.dump(), "application/json");
    });
    s.start();
    ProviderConfig p;
    p.endpoint = s.url("/embed");
    p.batch_size = 2;
    p.max_in_flight = 2;
    auto store = fetch_embeddings(p, {"a", "bb", "ccc"}, make_http_transport(std::chrono::seconds(5)));
    REQUIRE(store.size() == 3);
    CHECK(norm(store.at("ccc")) == Catch::Approx(1.0));
    CHECK(store.at("a")[0] == Catch::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("live sweep and its fixture replay agree") {
    LocalServer s;
    s.svr.Post("/chat", [](const httplib::Request& req, httplib::Response& res) {
        auto j = nlohmann::json::parse(req.body);
        if (req.get_header_value("Authorization") != "Bearer secret") {
            res.status = 401;
            return;
        }
        std::string content = "1. " + j.at("model").get<std::string>() + "\n2. " + nlohmann::json(j.at("temperature")).dump();
        res.set_content(nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump(),
                        "application/json");
    });
    s.start();
    ::setenv("FLUXJUMP_HTTP_TEST_KEY", "secret", 1);
    std::vector<ChatProvider> providers{{"m", s.url("/chat"), "FLUXJUMP_HTTP_TEST_KEY", "m-id", 2, {}}};
    SweepSpec spec{{"m"}, {0.0, 0.7}, 2, Task::aut_brick};
    testsupport::TempDir rec, replay_logs;
    SweepOptions live;
    live.prompt = "p";
    live.log_dir = rec.path();
    live.transport = make_http_transport(std::chrono::seconds(5));
    auto recorded = run_sweep(spec, providers, live);
    REQUIRE(recorded.outputs.size() == 4);
    CHECK(recorded.failed.empty());

    SweepOptions replay;
    replay.fixture_dir = rec.path();
    replay.log_dir = replay_logs.path();
    auto replayed = run_sweep(spec, providers, replay);
    REQUIRE(replayed.outputs.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(replayed.outputs[i].text == recorded.outputs[i].text);
    CHECK(testsupport::slurp(cell_log_path(rec.path(), "m", 0.7, 2)) ==
          testsupport::slurp(cell_log_path(replay_logs.path(), "m", 0.7, 2)));

    ::setenv("FLUXJUMP_HTTP_TEST_KEY", "wrong", 1);
    CHECK_THROWS_AS(run_sweep(spec, providers, live), AuthError);
    ::unsetenv("FLUXJUMP_HTTP_TEST_KEY");
}
