#pragma once

// Minimal HTTP abstraction shared by the embedding, collection and scoring
// clients. Tests and fixture replay plug in their own Transport.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fluxjump/error.hpp"
#include "fluxjump/log.hpp"

namespace fluxjump {

struct HttpRequest {
    std::string url;
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Performs one POST. Connection-level failures throw HttpError with status 0.
using Transport = std::function<HttpResponse(const HttpRequest&)>;

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{200};
};

/// Reads an API key from the named environment variable; empty name means no key.
inline std::string api_key_from_env(const std::string& env_name) {
    if (env_name.empty()) return {};
    const char* v = std::getenv(env_name.c_str());
    if (!v || !*v) throw AuthError("API key environment variable " + env_name + " is not set");
    return v;
}

/// POST with exponential backoff on retriable failures (429, 5xx, connection errors).
/// 401/403 become AuthError naming `key_env`. `attempts` receives the number of tries made.
inline HttpResponse post_with_retry(const Transport& transport, const HttpRequest& req, const RetryPolicy& policy,
                                    const std::string& key_env, int* attempts = nullptr) {
    for (int attempt = 1;; ++attempt) {
        if (attempts) *attempts = attempt;
        HttpResponse resp;
        try {
            resp = transport(req);
        } catch (const HttpError& e) {
            if (!e.retriable() || attempt >= policy.max_attempts) throw;
            Log::warn("attempt " + std::to_string(attempt) + " for " + req.url + " failed: " + e.what());
            std::this_thread::sleep_for(policy.base_delay * (1 << (attempt - 1)));
            continue;
        }
        if (resp.status >= 200 && resp.status < 300) return resp;
        if (resp.status == 401 || resp.status == 403)
            throw AuthError("authentication failed at " + req.url + " (HTTP " + std::to_string(resp.status) +
                            "); check the key in " + (key_env.empty() ? std::string("<no key env>") : key_env));
        HttpError err(resp.status, "HTTP " + std::to_string(resp.status) + " from " + req.url);
        if (!err.retriable() || attempt >= policy.max_attempts) throw err;
        Log::warn("attempt " + std::to_string(attempt) + " for " + req.url + " got HTTP " +
                  std::to_string(resp.status) + ", retrying");
        std::this_thread::sleep_for(policy.base_delay * (1 << (attempt - 1)));
    }
}

}  // namespace fluxjump
