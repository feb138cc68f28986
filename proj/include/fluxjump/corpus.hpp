#pragma once

// Response corpus: records, sequences, cleaning, deduplication and validity checks.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fluxjump/error.hpp"
#include "fluxjump/log.hpp"
#include "fluxjump/task.hpp"

namespace fluxjump {

struct ResponseRecord {
    std::string producer_id;
    Source source = Source::human;
    std::optional<std::string> model;
    std::optional<double> temperature;
    Task task = Task::aut_brick;
    int position = 1;
    std::string raw_text;
    std::string clean_text;
    std::optional<long long> rt_ms;

    bool operator==(const ResponseRecord&) const = default;
};

struct ResponseSequence {
    std::string producer_id;
    Source source = Source::human;
    Task task = Task::aut_brick;
    std::vector<ResponseRecord> responses;
    bool valid = true;

    std::size_t size() const { return responses.size(); }
    std::optional<std::string> model() const { return responses.empty() ? std::nullopt : responses.front().model; }
    std::optional<double> temperature() const {
        return responses.empty() ? std::nullopt : responses.front().temperature;
    }

    bool operator==(const ResponseSequence&) const = default;
};

using Corpus = std::vector<ResponseSequence>;

enum class CorpusFormat { jsonl, csv };

inline CorpusFormat corpus_format_from_string(std::string_view s) {
    if (s == "jsonl") return CorpusFormat::jsonl;
    if (s == "csv") return CorpusFormat::csv;
    throw ConfigError("unknown corpus format '" + std::string(s) + "' (expected jsonl or csv)");
}

// ---------------------------------------------------------------------------
// Cleaning

struct CleaningRules {
    std::set<std::string> stopwords;
    std::map<Task, std::set<std::string>> task_words;
    bool strip_punctuation = true;
    bool lowercase = true;
};

inline std::set<std::string> read_word_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open word list " + path.string());
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        auto e = line.find_last_not_of(" \t\r");
        words.insert(line.substr(b, e - b + 1));
    }
    return words;
}

/// Rules file: {"stopwords_file": path | "stopwords": [...], "task_words": {task: [...]},
/// "strip_punctuation": bool, "lowercase": bool}. Relative paths resolve against the rules file.
inline CleaningRules load_rules(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open rules file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("rules file " + path.string() + ": " + e.what());
    }
    CleaningRules rules;
    if (j.contains("stopwords_file")) {
        std::filesystem::path sw = j.at("stopwords_file").get<std::string>();
        if (sw.is_relative()) sw = path.parent_path() / sw;
        rules.stopwords = read_word_list(sw);
    }
    if (j.contains("stopwords"))
        for (const auto& w : j.at("stopwords")) rules.stopwords.insert(w.get<std::string>());
    if (j.contains("task_words"))
        for (const auto& [task, words] : j.at("task_words").items())
            for (const auto& w : words) rules.task_words[task_from_string(task)].insert(w.get<std::string>());
    rules.strip_punctuation = j.value("strip_punctuation", true);
    rules.lowercase = j.value("lowercase", true);
    return rules;
}

/// Lowercase, strip punctuation, drop stopwords and task words, collapse whitespace.
/// Returns nullopt when nothing survives (the caller drops the record).
inline std::optional<std::string> clean_response(std::string_view raw, Task task, const CleaningRules& rules) {
    std::string buf;
    buf.reserve(raw.size());
    for (char ch : raw) {
        auto c = static_cast<unsigned char>(ch);
        if (rules.strip_punctuation && c < 0x80 && std::ispunct(c)) {
            // apostrophes join ("don't" -> "dont"), other punctuation separates
            if (c != '\'') buf.push_back(' ');
            continue;
        }
        if (c < 0x80 && std::isspace(c)) {
            buf.push_back(' ');
            continue;
        }
        buf.push_back(rules.lowercase && c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }

    static const std::set<std::string> kNone;
    auto tw = rules.task_words.find(task);
    const auto& task_words = tw == rules.task_words.end() ? kNone : tw->second;

    std::string out;
    std::istringstream tokens(buf);
    std::string tok;
    while (tokens >> tok) {
        if (rules.stopwords.count(tok) || task_words.count(tok)) continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    if (out.empty()) return std::nullopt;
    return out;
}

/// Cleans every record, dropping those that are empty after cleaning and
/// renumbering positions so they stay consecutive. Sequences that lose all
/// records are dropped too.
inline Corpus clean_corpus(const Corpus& corpus, const CleaningRules& rules) {
    Corpus out;
    out.reserve(corpus.size());
    for (const auto& seq : corpus) {
        ResponseSequence cleaned = seq;
        cleaned.responses.clear();
        for (const auto& rec : seq.responses) {
            auto text = clean_response(rec.raw_text, rec.task, rules);
            if (!text) {
                Log::info("dropped " + rec.producer_id + "/" + std::string(to_string(rec.task)) + " position " +
                          std::to_string(rec.position) + ": empty-after-clean (\"" + rec.raw_text + "\")");
                continue;
            }
            ResponseRecord r = rec;
            r.clean_text = std::move(*text);
            r.position = static_cast<int>(cleaned.responses.size()) + 1;
            cleaned.responses.push_back(std::move(r));
        }
        if (cleaned.responses.empty()) {
            Log::info("dropped sequence " + seq.producer_id + "/" + std::string(to_string(seq.task)) +
                      ": no responses left after cleaning");
            continue;
        }
        out.push_back(std::move(cleaned));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parsing and serialisation

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no, bool& in_quotes,
                                               std::vector<std::string>& fields, std::string& cur) {
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            if (!cur.empty()) throw ParseError(line_no, "unexpected quote inside unquoted field");
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    if (in_quotes) {
        cur.push_back('\n');
        return {};
    }
    fields.push_back(std::move(cur));
    cur.clear();
    return std::exchange(fields, {});
}

}  // namespace detail

/// RFC 4180 reader. Returns rows with the 1-based line on which each row started.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv(std::istream& in) {
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
    std::string line, cur;
    std::vector<std::string> fields;
    bool in_quotes = false;
    std::size_t line_no = 0, row_start = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!in_quotes) {
            row_start = line_no;
            if (line.empty() || line == "\r") continue;
        }
        auto row = detail::split_csv_line(line, line_no, in_quotes, fields, cur);
        if (!in_quotes) rows.emplace_back(row_start, std::move(row));
    }
    if (in_quotes) throw ParseError(row_start, "unterminated quoted field");
    return rows;
}

inline std::string csv_escape(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

namespace detail {

inline ResponseRecord record_from_json(const nlohmann::json& j, std::size_t line) {
    ResponseRecord r;
    try {
        r.producer_id = j.at("producer_id").get<std::string>();
        r.source = source_from_string(j.at("source").get<std::string>());
        if (j.contains("model") && !j.at("model").is_null()) r.model = j.at("model").get<std::string>();
        if (j.contains("temperature") && !j.at("temperature").is_null())
            r.temperature = j.at("temperature").get<double>();
        r.task = task_from_string(j.at("task").get<std::string>());
        r.position = j.at("position").get<int>();
        r.raw_text = j.at("raw_text").get<std::string>();
        if (j.contains("clean_text") && !j.at("clean_text").is_null())
            r.clean_text = j.at("clean_text").get<std::string>();
        if (j.contains("rt_ms") && !j.at("rt_ms").is_null()) r.rt_ms = j.at("rt_ms").get<long long>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(line, e.what());
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(line, e.what());
    }
    if (r.producer_id.empty()) throw ParseError(line, "empty producer_id");
    if (r.position < 1) throw ParseError(line, "position must be >= 1");
    if (r.temperature.has_value() != (r.source == Source::llm))
        throw ParseError(line, "temperature must be present iff source is llm");
    if (r.temperature && (*r.temperature < 0.0 || *r.temperature > 1.0))
        throw ParseError(line, "temperature outside [0,1]");
    if (r.rt_ms && *r.rt_ms < 0) throw ParseError(line, "negative rt_ms");
    return r;
}

inline Corpus group_records(std::vector<std::pair<std::size_t, ResponseRecord>> records) {
    Corpus corpus;
    std::map<std::pair<std::string, Task>, std::size_t> slot;
    std::map<std::pair<std::string, Task>, std::set<int>> seen;
    for (auto& [line, rec] : records) {
        auto key = std::make_pair(rec.producer_id, rec.task);
        if (!seen[key].insert(rec.position).second)
            throw ParseError(line, "duplicate position " + std::to_string(rec.position) + " for producer '" +
                                       rec.producer_id + "' task " + std::string(to_string(rec.task)));
        auto [it, inserted] = slot.try_emplace(key, corpus.size());
        if (inserted) {
            ResponseSequence seq;
            seq.producer_id = rec.producer_id;
            seq.source = rec.source;
            seq.task = rec.task;
            corpus.push_back(std::move(seq));
        } else if (corpus[it->second].source != rec.source) {
            throw ParseError(line, "producer '" + rec.producer_id + "' mixes sources within one task");
        }
        corpus[it->second].responses.push_back(std::move(rec));
    }
    for (auto& seq : corpus) {
        std::sort(seq.responses.begin(), seq.responses.end(),
                  [](const auto& a, const auto& b) { return a.position < b.position; });
        for (std::size_t i = 0; i < seq.responses.size(); ++i)
            if (seq.responses[i].position != static_cast<int>(i) + 1)
                throw ParseError(0, "positions for producer '" + seq.producer_id + "' task " +
                                        std::string(to_string(seq.task)) + " are not consecutive from 1");
    }
    return corpus;
}

}  // namespace detail

inline Corpus parse_jsonl(std::istream& in) {
    std::vector<std::pair<std::size_t, ResponseRecord>> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");
        records.emplace_back(line_no, detail::record_from_json(j, line_no));
    }
    return detail::group_records(std::move(records));
}

inline Corpus parse_csv(std::istream& in) {
    auto rows = read_csv(in);
    if (rows.empty()) return {};
    const auto& header = rows.front().second;
    std::vector<std::pair<std::size_t, ResponseRecord>> records;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [line, fields] = rows[r];
        if (fields.size() != header.size())
            throw ParseError(line, "expected " + std::to_string(header.size()) + " fields, got " +
                                       std::to_string(fields.size()));
        nlohmann::json j = nlohmann::json::object();
        for (std::size_t c = 0; c < header.size(); ++c) {
            const auto& name = header[c];
            const auto& v = fields[c];
            if (v.empty() && name != "raw_text") {
                j[name] = nullptr;
                continue;
            }
            try {
                if (name == "position" || name == "rt_ms")
                    j[name] = std::stoll(v);
                else if (name == "temperature")
                    j[name] = std::stod(v);
                else
                    j[name] = v;
            } catch (const std::exception&) {
                throw ParseError(line, "field '" + name + "' is not numeric: '" + v + "'");
            }
        }
        records.emplace_back(line, detail::record_from_json(j, line));
    }
    return detail::group_records(std::move(records));
}

inline Corpus parse_responses(const std::filesystem::path& path, CorpusFormat format) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus file " + path.string());
    return format == CorpusFormat::jsonl ? parse_jsonl(in) : parse_csv(in);
}

inline nlohmann::json to_json(const ResponseRecord& r) {
    nlohmann::json j;
    j["producer_id"] = r.producer_id;
    j["source"] = to_string(r.source);
    j["model"] = r.model ? nlohmann::json(*r.model) : nlohmann::json(nullptr);
    j["temperature"] = r.temperature ? nlohmann::json(*r.temperature) : nlohmann::json(nullptr);
    j["task"] = to_string(r.task);
    j["position"] = r.position;
    j["raw_text"] = r.raw_text;
    j["rt_ms"] = r.rt_ms ? nlohmann::json(*r.rt_ms) : nlohmann::json(nullptr);
    if (!r.clean_text.empty()) j["clean_text"] = r.clean_text;
    return j;
}

/// Canonical JSONL: one record per line, sequences in corpus order.
inline void write_jsonl(const Corpus& corpus, std::ostream& out) {
    for (const auto& seq : corpus)
        for (const auto& r : seq.responses) out << to_json(r).dump() << '\n';
}

inline void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    write_jsonl(corpus, out);
}

// ---------------------------------------------------------------------------
// Deduplication

struct UniqueResponses {
    std::vector<std::string> texts;                    // first-occurrence order
    std::unordered_map<std::string, std::size_t> index;  // clean_text -> position in `texts`
};

/// Unique clean texts of one task across all sources, in first-occurrence order.
inline UniqueResponses dedupe_corpus(const Corpus& corpus, Task task) {
    UniqueResponses u;
    for (const auto& seq : corpus) {
        if (seq.task != task) continue;
        for (const auto& r : seq.responses) {
            const auto& text = r.clean_text.empty() ? r.raw_text : r.clean_text;
            if (u.index.try_emplace(text, u.texts.size()).second) u.texts.push_back(text);
        }
    }
    return u;
}

// ---------------------------------------------------------------------------
// Validation

/// Excludes sequences of `model` (optionally only on `task`) whose temperature
/// lies in [min_temperature, max_temperature].
struct ExclusionRule {
    std::string model;
    std::optional<Task> task;
    double min_temperature = 0.0;
    double max_temperature = 1.0;
};

struct ValidationPolicy {
    std::size_t min_alpha_run = 6;
    std::vector<ExclusionRule> exclusions;
};

/// Exclusions applied to the reference LLM data: low-temperature Mistral and
/// NousResearch runs on brick (verbatim repeats) and the alphabetical VFT listers.
inline ValidationPolicy reference_policy() {
    ValidationPolicy p;
    p.exclusions = {
        {"Mistral", Task::aut_brick, 0.0, 0.3},
        {"NousResearch", Task::aut_brick, 0.0, 0.6},
        {"NousResearch", Task::vft_animals, 0.0, 1.0},
        {"Palm", Task::vft_animals, 0.0, 1.0},
    };
    return p;
}

inline ValidationPolicy policy_from_json(const nlohmann::json& j) {
    ValidationPolicy p;
    p.min_alpha_run = j.value("min_alpha_run", std::size_t{6});
    if (j.contains("exclusions"))
        for (const auto& e : j.at("exclusions")) {
            ExclusionRule r;
            r.model = e.at("model").get<std::string>();
            if (e.contains("task") && !e.at("task").is_null()) r.task = task_from_string(e.at("task").get<std::string>());
            r.min_temperature = e.value("min_temperature", 0.0);
            r.max_temperature = e.value("max_temperature", 1.0);
            p.exclusions.push_back(std::move(r));
        }
    return p;
}

struct ValidationReport {
    std::vector<int> repeat_positions;  // positions equal to their predecessor
    std::optional<std::pair<int, std::size_t>> alphabetical_run;  // (start position, length)
    bool excluded = false;
    bool valid = true;
};

namespace detail {

inline bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

}  // namespace detail

inline ValidationReport validate_sequence(const ResponseSequence& seq, const ValidationPolicy& policy) {
    ValidationReport rep;
    const auto& rs = seq.responses;
    for (std::size_t i = 1; i < rs.size(); ++i)
        if (rs[i].clean_text == rs[i - 1].clean_text) rep.repeat_positions.push_back(rs[i].position);

    if (policy.min_alpha_run >= 2 && !rs.empty()) {
        std::size_t start = 0, best_start = 0, best_len = 1;
        for (std::size_t i = 1; i <= rs.size(); ++i) {
            if (i < rs.size() && rs[i - 1].clean_text < rs[i].clean_text) continue;
            if (i - start > best_len) {
                best_len = i - start;
                best_start = start;
            }
            start = i;
        }
        if (best_len >= policy.min_alpha_run) rep.alphabetical_run = std::make_pair(rs[best_start].position, best_len);
    }

    constexpr double eps = 1e-9;
    auto model = seq.model();
    auto temp = seq.temperature();
    if (seq.source == Source::llm && model && temp)
        for (const auto& rule : policy.exclusions) {
            if (!detail::iequals(rule.model, *model)) continue;
            if (rule.task && *rule.task != seq.task) continue;
            if (*temp >= rule.min_temperature - eps && *temp <= rule.max_temperature + eps) rep.excluded = true;
        }

    rep.valid = rep.repeat_positions.empty() && !rep.alphabetical_run && !rep.excluded;
    return rep;
}

/// Sets `valid` on every sequence and logs the reason for each flagged one.
inline void apply_validation(Corpus& corpus, const ValidationPolicy& policy) {
    for (auto& seq : corpus) {
        auto rep = validate_sequence(seq, policy);
        seq.valid = rep.valid;
        if (rep.valid) continue;
        std::string why;
        if (!rep.repeat_positions.empty()) why += " verbatim-repeat";
        if (rep.alphabetical_run) why += " alphabetical-run";
        if (rep.excluded) why += " policy-excluded";
        Log::info("invalid sequence " + seq.producer_id + "/" + std::string(to_string(seq.task)) + ":" + why);
    }
}

}  // namespace fluxjump
