#pragma once

// LLM data collection: prompt parameters from human data, prompt templates,
// the provider x temperature x sample sweep, and list parsing of outputs.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "fluxjump/corpus.hpp"
#include "fluxjump/error.hpp"
#include "fluxjump/hash.hpp"
#include "fluxjump/log.hpp"
#include "fluxjump/transport.hpp"

namespace fluxjump {

struct PromptParams {
    int n_aut = 1;
    int n_vft = 1;
    int m_aut = 1;
    int m_vft = 1;

    bool operator==(const PromptParams&) const = default;
};

inline nlohmann::ordered_json to_json(const PromptParams& p) {
    return {{"n_aut", p.n_aut}, {"n_vft", p.n_vft}, {"m_aut", p.m_aut}, {"m_vft", p.m_vft}};
}

inline PromptParams prompt_params_from_json(const nlohmann::json& j) {
    PromptParams p{j.at("n_aut").get<int>(), j.at("n_vft").get<int>(), j.at("m_aut").get<int>(),
                   j.at("m_vft").get<int>()};
    if (p.n_aut < 1 || p.n_vft < 1 || p.m_aut < 1 || p.m_vft < 1) throw ConfigError("prompt params must be >= 1");
    return p;
}

/// Response count and length targets from the human corpus:
/// n_aut = ceil(max mean count over the AUTs), m_aut = floor(max mean words per
/// response over the AUTs), and likewise (single task) for the VFT.
inline PromptParams derive_prompt_params(const Corpus& human) {
    struct Acc {
        double sequences = 0, responses = 0, words = 0;
    };
    std::map<Task, Acc> acc;
    for (const auto& seq : human) {
        if (seq.source != Source::human || !seq.valid) continue;
        auto& a = acc[seq.task];
        a.sequences += 1;
        for (const auto& r : seq.responses) {
            a.responses += 1;
            std::istringstream ss(r.clean_text.empty() ? r.raw_text : r.clean_text);
            std::string w;
            while (ss >> w) a.words += 1;
        }
    }
    for (Task t : kAllTasks)
        if (!acc.count(t) || acc[t].responses == 0)
            throw Error("derive_prompt_params: human corpus has no " + std::string(to_string(t)) + " sequences");
    auto mean_count = [&](Task t) { return acc[t].responses / acc[t].sequences; };
    auto mean_words = [&](Task t) { return acc[t].words / acc[t].responses; };
    PromptParams p;
    p.n_aut = static_cast<int>(std::ceil(std::max(mean_count(Task::aut_brick), mean_count(Task::aut_paperclip))));
    p.n_vft = static_cast<int>(std::ceil(mean_count(Task::vft_animals)));
    p.m_aut = static_cast<int>(std::floor(std::max(mean_words(Task::aut_brick), mean_words(Task::aut_paperclip))));
    p.m_vft = static_cast<int>(std::floor(mean_words(Task::vft_animals)));
    p.n_aut = std::max(p.n_aut, 1);
    p.n_vft = std::max(p.n_vft, 1);
    p.m_aut = std::max(p.m_aut, 1);
    p.m_vft = std::max(p.m_vft, 1);
    return p;
}

// ---------------------------------------------------------------------------
// Prompts

/// Template text with {n}, {m} and {object} placeholders.
struct PromptTemplates {
    std::string aut;
    std::string vft;
};

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Loads aut.txt and vft.txt from `dir`.
inline PromptTemplates load_templates(const std::filesystem::path& dir) {
    return {read_text_file(dir / "aut.txt"), read_text_file(dir / "vft.txt")};
}

inline std::string template_hash(const PromptTemplates& t) { return sha256_hex(t.aut + '\0' + t.vft); }

namespace detail {

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
        s.replace(pos, from.size(), to);
}

}  // namespace detail

inline std::string build_prompt(Task task, const PromptParams& params, const PromptTemplates& templates) {
    std::string s = is_aut(task) ? templates.aut : templates.vft;
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    detail::replace_all(s, "{n}", std::to_string(is_aut(task) ? params.n_aut : params.n_vft));
    detail::replace_all(s, "{m}", std::to_string(is_aut(task) ? params.m_aut : params.m_vft));
    detail::replace_all(s, "{object}", task_object(task));
    return s;
}

// ---------------------------------------------------------------------------
// Output parsing

struct ParsedList {
    std::vector<std::string> items;
    bool count_mismatch = false;
};

/// Splits a numbered, bulleted or newline-separated list; a single line with
/// commas or semicolons is split on those. Enumeration markers are stripped.
inline ParsedList parse_llm_output(const std::string& text, int expected_n) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw Error("empty LLM output");
    static const std::regex marker(R"(^\s*(?:\(?\d+[\.\):]|[-*]|•|#+)\s*)");
    auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r\"");
        if (b == std::string::npos) return std::string{};
        auto e = s.find_last_not_of(" \t\r\"");
        return s.substr(b, e - b + 1);
    };

    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        line = trim(line);
        if (!line.empty()) lines.push_back(line);
    }
    ParsedList out;
    bool enumerated = std::any_of(lines.begin(), lines.end(), [](const auto& l) { return std::regex_search(l, marker); });
    for (const auto& raw : lines) {
        std::string line = std::regex_replace(raw, marker, "", std::regex_constants::format_first_only);
        line = trim(line);
        if (line.empty()) continue;
        // Preambles such as "Here are 13 uses:" in an otherwise enumerated list.
        if (enumerated && !std::regex_search(raw, marker) && line.back() == ':') continue;
        out.items.push_back(line);
    }
    if (out.items.size() == 1 && expected_n > 1 && out.items[0].find_first_of(",;") != std::string::npos) {
        std::string one = out.items[0];
        out.items.clear();
        std::string cur;
        for (char c : one) {
            if (c == ',' || c == ';') {
                if (auto t = trim(cur); !t.empty()) out.items.push_back(t);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (auto t = trim(cur); !t.empty()) out.items.push_back(t);
    }
    if (out.items.empty()) throw Error("empty LLM output");
    out.count_mismatch = static_cast<int>(out.items.size()) != expected_n;
    return out;
}

// ---------------------------------------------------------------------------
// Sweep

/// Chat-completions provider: POST {"model", "messages", "temperature"}.
struct ChatProvider {
    std::string name;
    std::string endpoint;
    std::string api_key_env;
    std::string model_id;
    std::size_t concurrency = 2;
    std::chrono::milliseconds min_interval{0};
};

inline std::vector<ChatProvider> load_providers(const nlohmann::json& j) {
    std::vector<ChatProvider> out;
    for (const auto& p : j) {
        ChatProvider c;
        c.name = p.at("name").get<std::string>();
        c.endpoint = p.value("endpoint", std::string{});
        c.api_key_env = p.value("api_key_env", std::string{});
        c.model_id = p.value("model_id", c.name);
        c.concurrency = p.value("concurrency", std::size_t{2});
        c.min_interval = std::chrono::milliseconds(p.value("min_interval_ms", 0));
        if (c.concurrency == 0) throw ConfigError("provider " + c.name + ": concurrency must be >= 1");
        out.push_back(std::move(c));
    }
    return out;
}

inline std::vector<double> default_temperatures() {
    std::vector<double> t;
    for (int i = 0; i <= 10; ++i) t.push_back(i / 10.0);
    return t;
}

struct SweepSpec {
    std::vector<std::string> models;
    std::vector<double> temperatures = default_temperatures();
    int samples_per_cell = 5;
    Task task = Task::aut_brick;
};

inline SweepSpec sweep_spec_from_json(const nlohmann::json& j) {
    SweepSpec s;
    s.models = j.at("models").get<std::vector<std::string>>();
    if (j.contains("temperatures")) s.temperatures = j.at("temperatures").get<std::vector<double>>();
    s.samples_per_cell = j.value("samples_per_cell", 5);
    s.task = task_from_string(j.at("task").get<std::string>());
    if (s.samples_per_cell < 1) throw ConfigError("samples_per_cell must be >= 1");
    for (double t : s.temperatures)
        if (t < 0.0 || t > 1.0) throw ConfigError("temperatures must lie in [0, 1]");
    if (s.models.empty()) throw ConfigError("sweep has no models");
    return s;
}

/// "0.0", "0.1", ..., "1.0" for the default grid; shortest round-trip otherwise.
inline std::string temperature_label(double t) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, t);
    std::string s(buf, end);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) s += ".0";
    return s;
}

struct RawLLMOutput {
    std::string model;
    double temperature = 0.0;
    int sample = 0;
    Task task = Task::aut_brick;
    std::string text;
};

struct FailedCell {
    std::string model;
    double temperature = 0.0;
    int sample = 0;
    std::string reason;
};

struct SweepResult {
    std::vector<RawLLMOutput> outputs;  // ordered by (model, temperature, sample) as listed in the spec
    std::vector<FailedCell> failed;
};

struct SweepOptions {
    std::string prompt;
    /// Replay recorded cells from here instead of calling providers.
    std::optional<std::filesystem::path> fixture_dir;
    /// Where to write one log per cell (copied byte-for-byte in fixture mode).
    std::optional<std::filesystem::path> log_dir;
    Transport transport;
    RetryPolicy retry;
};

inline std::filesystem::path cell_log_path(const std::filesystem::path& root, const std::string& model, double t,
                                           int sample) {
    return root / model / temperature_label(t) / (std::to_string(sample) + ".json");
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << bytes;
}

struct CellOutcome {
    std::optional<std::string> text;
    std::string reason;
};

inline CellOutcome replay_cell(const std::filesystem::path& file, const std::optional<std::filesystem::path>& log_copy) {
    if (!std::filesystem::exists(file)) return {std::nullopt, "no recorded fixture at " + file.string()};
    std::string bytes = read_text_file(file);
    if (log_copy) write_file(*log_copy, bytes);
    auto j = nlohmann::json::parse(bytes);
    if (j.value("status", std::string{}) != "ok") return {std::nullopt, j.value("error", std::string("recorded failure"))};
    return {j.at("text").get<std::string>(), {}};
}

}  // namespace detail

/// Runs every (model, temperature, sample) cell. Live mode retries each request
/// up to `retry.max_attempts` times and records cells that still fail; fixture
/// mode never touches the network. Authentication failures abort the sweep.
inline SweepResult run_sweep(const SweepSpec& spec, const std::vector<ChatProvider>& providers,
                             const SweepOptions& opt) {
    struct Cell {
        std::size_t model_idx;
        double temperature;
        int sample;
    };
    std::map<std::string, const ChatProvider*> by_name;
    for (const auto& p : providers) by_name[p.name] = &p;
    std::vector<const ChatProvider*> model_providers;
    for (const auto& m : spec.models) {
        auto it = by_name.find(m);
        if (it == by_name.end()) throw ConfigError("no provider configured for model '" + m + "'");
        model_providers.push_back(it->second);
    }
    std::vector<Cell> cells;
    for (std::size_t m = 0; m < spec.models.size(); ++m)
        for (double t : spec.temperatures)
            for (int s = 1; s <= spec.samples_per_cell; ++s) cells.push_back({m, t, s});

    std::vector<detail::CellOutcome> outcomes(cells.size());
    if (opt.fixture_dir) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto& cell = cells[c];
            const auto& model = spec.models[cell.model_idx];
            std::optional<std::filesystem::path> copy;
            if (opt.log_dir) copy = cell_log_path(*opt.log_dir, model, cell.temperature, cell.sample);
            outcomes[c] = detail::replay_cell(cell_log_path(*opt.fixture_dir, model, cell.temperature, cell.sample), copy);
        }
    } else {
        if (!opt.transport) throw ConfigError("live sweep needs a transport");
        // One worker pool per provider, bounded by its concurrency.
        std::vector<std::jthread> workers;
        std::exception_ptr fatal;
        std::mutex fatal_mutex;
        for (std::size_t m = 0; m < spec.models.size(); ++m) {
            const ChatProvider* prov_ptr = model_providers[m];
            const std::string key = api_key_from_env(prov_ptr->api_key_env);
            auto queue = std::make_shared<std::vector<std::size_t>>();
            for (std::size_t c = 0; c < cells.size(); ++c)
                if (cells[c].model_idx == m) queue->push_back(c);
            auto next = std::make_shared<std::atomic<std::size_t>>(0);
            auto pace = std::make_shared<std::pair<std::mutex, std::chrono::steady_clock::time_point>>();
            for (std::size_t w = 0; w < prov_ptr->concurrency; ++w)
                workers.emplace_back([&, prov_ptr, queue, next, pace, key, m] {
                    const ChatProvider& prov = *prov_ptr;
                    for (std::size_t qi; (qi = next->fetch_add(1)) < queue->size();) {
                        {
                            std::lock_guard lock(fatal_mutex);
                            if (fatal) return;
                        }
                        const auto& cell = cells[(*queue)[qi]];
                        auto& outcome = outcomes[(*queue)[qi]];
                        if (prov.min_interval.count() > 0) {
                            std::unique_lock lock(pace->first);
                            auto now = std::chrono::steady_clock::now();
                            if (pace->second > now) std::this_thread::sleep_until(pace->second);
                            pace->second = std::max(now, pace->second) + prov.min_interval;
                        }
                        nlohmann::ordered_json body{{"model", prov.model_id},
                                                    {"messages", {{{"role", "user"}, {"content", opt.prompt}}}},
                                                    {"temperature", cell.temperature}};
                        HttpRequest req{prov.endpoint, body.dump(), {}};
                        if (!key.empty()) req.headers.emplace_back("Authorization", "Bearer " + key);
                        nlohmann::ordered_json log{{"model", spec.models[m]},
                                                   {"model_id", prov.model_id},
                                                   {"task", to_string(spec.task)},
                                                   {"temperature", cell.temperature},
                                                   {"sample", cell.sample},
                                                   {"prompt", opt.prompt},
                                                   {"request", body}};
                        int attempts = 0;
                        try {
                            auto resp = post_with_retry(opt.transport, req, opt.retry, prov.api_key_env, &attempts);
                            auto j = nlohmann::json::parse(resp.body);
                            outcome.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
                            log["status"] = "ok";
                            log["attempts"] = attempts;
                            log["http_status"] = resp.status;
                            log["response"] = resp.body;
                            log["text"] = *outcome.text;
                        } catch (const AuthError&) {
                            std::lock_guard lock(fatal_mutex);
                            if (!fatal) fatal = std::current_exception();
                            return;
                        } catch (const std::exception& e) {
                            outcome.text.reset();
                            outcome.reason = e.what();
                            log["status"] = "failed";
                            log["attempts"] = attempts;
                            log["error"] = e.what();
                        }
                        if (opt.log_dir) {
                            try {
                                detail::write_file(
                                    cell_log_path(*opt.log_dir, spec.models[m], cell.temperature, cell.sample),
                                    log.dump(2) + "\n");
                            } catch (...) {
                                std::lock_guard lock(fatal_mutex);
                                if (!fatal) fatal = std::current_exception();
                                return;
                            }
                        }
                    }
                });
        }
        workers.clear();  // join
        if (fatal) std::rethrow_exception(fatal);
    }

    SweepResult res;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& cell = cells[c];
        const auto& model = spec.models[cell.model_idx];
        if (outcomes[c].text) {
            res.outputs.push_back({model, cell.temperature, cell.sample, spec.task, *outcomes[c].text});
        } else {
            Log::warn("sweep cell " + model + " t=" + temperature_label(cell.temperature) + " sample " +
                      std::to_string(cell.sample) + " failed: " + outcomes[c].reason);
            res.failed.push_back({model, cell.temperature, cell.sample, outcomes[c].reason});
        }
    }
    if (!opt.fixture_dir && res.outputs.empty() && !cells.empty())
        throw Error("every sweep cell failed; providers unreachable? last error: " + res.failed.back().reason);
    return res;
}

/// Parsed outputs as raw corpus records (clean_text left empty for ingest).
inline Corpus outputs_to_corpus(const std::vector<RawLLMOutput>& outputs, int expected_n) {
    Corpus corpus;
    for (const auto& o : outputs) {
        ParsedList parsed;
        try {
            parsed = parse_llm_output(o.text, expected_n);
        } catch (const Error& e) {
            Log::warn("skipping output of " + o.model + " t=" + temperature_label(o.temperature) + ": " + e.what());
            continue;
        }
        ResponseSequence seq;
        seq.producer_id = o.model + "_t" + temperature_label(o.temperature) + "_s" + std::to_string(o.sample);
        seq.source = Source::llm;
        seq.task = o.task;
        if (parsed.count_mismatch)
            Log::info(seq.producer_id + ": " + std::to_string(parsed.items.size()) + " items, expected " +
                      std::to_string(expected_n));
        for (std::size_t i = 0; i < parsed.items.size(); ++i) {
            ResponseRecord r;
            r.producer_id = seq.producer_id;
            r.source = Source::llm;
            r.model = o.model;
            r.temperature = o.temperature;
            r.task = o.task;
            r.position = static_cast<int>(i) + 1;
            r.raw_text = parsed.items[i];
            seq.responses.push_back(std::move(r));
        }
        corpus.push_back(std::move(seq));
    }
    return corpus;
}

}  // namespace fluxjump
