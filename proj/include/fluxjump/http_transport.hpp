#pragma once

// cpp-httplib backed Transport. Kept out of the other headers so only the CLI
// and the HTTP tests pay for compiling httplib.

#include <chrono>
#include <string>

#include "httplib.h"

#include "fluxjump/transport.hpp"

namespace fluxjump {

inline Transport make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(60)) {
    return [timeout](const HttpRequest& req) -> HttpResponse {
        auto scheme_end = req.url.find("://");
        if (scheme_end == std::string::npos) throw HttpError(400, "malformed URL " + req.url);
        auto path_start = req.url.find('/', scheme_end + 3);
        std::string origin = req.url.substr(0, path_start);
        std::string path = path_start == std::string::npos ? "/" : req.url.substr(path_start);

        httplib::Client client(origin);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers headers;
        for (const auto& [k, v] : req.headers) headers.emplace(k, v);
        auto res = client.Post(path, headers, req.body, "application/json");
        if (!res) throw HttpError(0, "request to " + req.url + " failed: " + httplib::to_string(res.error()));
        return {res->status, res->body};
    };
}

}  // namespace fluxjump
