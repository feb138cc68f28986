#pragma once

// Originality scores: external scorer client and an offline category-rarity stand-in.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluxjump/categories.hpp"
#include "fluxjump/corpus.hpp"
#include "fluxjump/error.hpp"
#include "fluxjump/transport.hpp"

namespace fluxjump {

struct OriginalityScore {
    std::string producer_id;
    Task task = Task::aut_brick;
    int position = 0;
    double score = 0.0;
    std::string scorer;

    bool operator==(const OriginalityScore&) const = default;
};

/// Same shape as a chat provider; the endpoint takes
/// {"model", "items": [{"prompt", "response"}]} and answers {"scores": [...]}.
struct ScorerConfig {
    std::string name = "ocs";
    std::string endpoint;
    std::string api_key_env;
    std::string model_id = "ocsai-chatgpt";
    std::size_t batch_size = 50;
    RetryPolicy retry;

    std::string id() const { return name + "/" + model_id; }
};

inline ScorerConfig scorer_config_from_json(const nlohmann::json& j) {
    ScorerConfig c;
    c.name = j.value("name", c.name);
    c.endpoint = j.at("endpoint").get<std::string>();
    c.api_key_env = j.value("api_key_env", std::string{});
    c.model_id = j.value("model_id", c.model_id);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (c.batch_size == 0) throw ConfigError("scorer batch_size must be >= 1");
    return c;
}

/// Scores every response of the given sequences. Only AUT tasks are scorable.
inline std::vector<OriginalityScore> score_originality(const ScorerConfig& cfg, const Corpus& sequences,
                                                       const Transport& transport,
                                                       const std::optional<std::filesystem::path>& log_dir = {}) {
    std::vector<const ResponseRecord*> items;
    for (const auto& seq : sequences) {
        if (!is_aut(seq.task))
            throw Error("task unsupported: originality is scored only for AUT tasks, got " +
                        std::string(to_string(seq.task)));
        for (const auto& r : seq.responses) items.push_back(&r);
    }
    const std::string key = api_key_from_env(cfg.api_key_env);
    std::vector<OriginalityScore> out;
    out.reserve(items.size());
    for (std::size_t start = 0, batch = 0; start < items.size(); start += cfg.batch_size, ++batch) {
        const std::size_t end = std::min(items.size(), start + cfg.batch_size);
        nlohmann::ordered_json body;
        body["model"] = cfg.model_id;
        body["items"] = nlohmann::ordered_json::array();
        for (std::size_t i = start; i < end; ++i)
            body["items"].push_back({{"prompt", task_object(items[i]->task)},
                                     {"response", items[i]->clean_text.empty() ? items[i]->raw_text : items[i]->clean_text}});
        HttpRequest req{cfg.endpoint, body.dump(), {}};
        if (!key.empty()) req.headers.emplace_back("Authorization", "Bearer " + key);
        auto resp = post_with_retry(transport, req, cfg.retry, cfg.api_key_env);
        if (log_dir) {
            std::filesystem::create_directories(*log_dir);
            std::ofstream(*log_dir / ("batch_" + std::to_string(batch) + ".json"), std::ios::binary)
                << nlohmann::ordered_json{{"request", body}, {"response", resp.body}}.dump(2) << '\n';
        }
        std::vector<double> scores;
        try {
            scores = nlohmann::json::parse(resp.body).at("scores").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(std::string("bad scorer response: ") + e.what());
        }
        if (scores.size() != end - start)
            throw Error("scorer returned " + std::to_string(scores.size()) + " scores for " +
                        std::to_string(end - start) + " responses");
        for (std::size_t i = start; i < end; ++i) {
            double s = scores[i - start];
            if (!std::isfinite(s)) throw Error("scorer returned a non-finite score");
            out.push_back({items[i]->producer_id, items[i]->task, items[i]->position, s, cfg.id()});
        }
    }
    return out;
}

/// Offline stand-in: 1 - (share of the task's responses that fall in the
/// response's category). Counts every record, so repeated texts weigh more.
class RarityScorer {
public:
    static constexpr const char* kId = "offline-rarity/1";

    RarityScorer(const Corpus& corpus, const CategoryMap& map) : map_(map) {
        for (const auto& seq : corpus) {
            if (seq.task != map.task()) continue;
            for (const auto& r : seq.responses) {
                ++counts_[map.category(r.clean_text)];
                ++total_;
            }
        }
        if (total_ == 0) throw Error("RarityScorer: corpus has no " + std::string(to_string(map.task())) + " responses");
    }

    double score(const std::string& clean_text) const {
        int c = map_.category(clean_text);
        auto it = counts_.find(c);
        double count = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
        return 1.0 - count / static_cast<double>(total_);
    }

    std::vector<OriginalityScore> score_all(const Corpus& corpus) const {
        std::vector<OriginalityScore> out;
        for (const auto& seq : corpus) {
            if (seq.task != map_.task()) continue;
            for (const auto& r : seq.responses) out.push_back({r.producer_id, r.task, r.position, score(r.clean_text), kId});
        }
        return out;
    }

private:
    const CategoryMap& map_;
    std::map<int, std::size_t> counts_;
    std::size_t total_ = 0;
};

inline double rarity_score_offline(const Corpus& corpus, const CategoryMap& map, const std::string& response) {
    return RarityScorer(corpus, map).score(response);
}

/// Mean score per (producer_id, task).
inline std::map<std::pair<std::string, Task>, double> mean_originality(const std::vector<OriginalityScore>& scores) {
    std::map<std::pair<std::string, Task>, std::pair<double, std::size_t>> acc;
    for (const auto& s : scores) {
        auto& a = acc[{s.producer_id, s.task}];
        a.first += s.score;
        ++a.second;
    }
    std::map<std::pair<std::string, Task>, double> out;
    for (const auto& [k, v] : acc) out[k] = v.first / static_cast<double>(v.second);
    return out;
}

// scores.csv: producer_id, task, position, score, scorer

inline void write_scores_csv(const std::vector<OriginalityScore>& scores, std::ostream& out) {
    out << "producer_id,task,position,score,scorer\n";
    for (const auto& s : scores) {
        nlohmann::json v = s.score;  // shortest round-trip formatting
        out << csv_escape(s.producer_id) << ',' << to_string(s.task) << ',' << s.position << ',' << v.dump() << ','
            << csv_escape(s.scorer) << '\n';
    }
}

inline std::vector<OriginalityScore> read_scores_csv(std::istream& in) {
    auto rows = read_csv(in);
    std::vector<OriginalityScore> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [line, f] = rows[r];
        if (f.size() != 5) throw ParseError(line, "scores.csv rows need 5 fields");
        try {
            out.push_back({f[0], task_from_string(f[1]), std::stoi(f[2]), std::stod(f[3]), f[4]});
        } catch (const std::exception& e) {
            throw ParseError(line, e.what());
        }
        if (out.back().scorer.empty()) throw ParseError(line, "empty scorer id");
    }
    return out;
}

}  // namespace fluxjump
