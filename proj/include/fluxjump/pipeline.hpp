#pragma once

// End-to-end orchestration: config, staged run, report bundle and provenance.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "fluxjump/categories.hpp"
#include "fluxjump/corpus.hpp"
#include "fluxjump/embedding.hpp"
#include "fluxjump/error.hpp"
#include "fluxjump/hash.hpp"
#include "fluxjump/jumps.hpp"
#include "fluxjump/log.hpp"
#include "fluxjump/profiles.hpp"
#include "fluxjump/score.hpp"
#include "fluxjump/stats.hpp"
#include "fluxjump/svg.hpp"

#ifndef FLUXJUMP_VERSION
#define FLUXJUMP_VERSION "0.1.0"
#endif

namespace fluxjump {

inline constexpr const char* kVersion = FLUXJUMP_VERSION;

enum class OutputFormat { json, csv, svg };

inline OutputFormat output_format_from_string(std::string_view s) {
    if (s == "json") return OutputFormat::json;
    if (s == "csv") return OutputFormat::csv;
    if (s == "svg") return OutputFormat::svg;
    throw ConfigError("unknown output format \"" + std::string(s) + "\"");
}

struct PipelineConfig {
    std::filesystem::path corpus;
    CorpusFormat format = CorpusFormat::jsonl;
    std::optional<std::filesystem::path> rules;
    std::filesystem::path embeddings;
    std::optional<std::filesystem::path> gold;
    std::optional<std::filesystem::path> scores;
    /// "offline-rarity", "none", or a live scorer.
    std::variant<std::string, ScorerConfig> scorer = std::string("offline-rarity");
    ValidationPolicy validation;
    double target_quality = 0.7;
    SingletonPolicy singleton_policy = SingletonPolicy::count_as_one;
    std::optional<double> theta;   // nullopt = auto
    std::optional<std::size_t> L;  // nullopt = auto
    int k = 3;
    std::uint64_t kmeans_seed = 0;
    int n_init = 10;
    CalibrationOptions calibration;
    std::set<OutputFormat> formats{OutputFormat::json, OutputFormat::csv, OutputFormat::svg};
    std::optional<std::filesystem::path> cache_dir;
    /// Canonical dump of the source JSON; hashed into provenance.
    std::string canonical;
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace detail

/// Relative paths resolve against `base_dir`.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    PipelineConfig c;
    try {
        const auto& paths = j.contains("paths") ? j.at("paths") : j;
        c.corpus = detail::resolve(base_dir, paths.at("corpus").get<std::string>());
        c.embeddings = detail::resolve(base_dir, paths.at("embeddings").get<std::string>());
        if (paths.contains("rules")) c.rules = detail::resolve(base_dir, paths.at("rules").get<std::string>());
        if (paths.contains("gold")) c.gold = detail::resolve(base_dir, paths.at("gold").get<std::string>());
        if (paths.contains("scores")) c.scores = detail::resolve(base_dir, paths.at("scores").get<std::string>());
        if (paths.contains("cache_dir")) c.cache_dir = detail::resolve(base_dir, paths.at("cache_dir").get<std::string>());
        if (j.contains("format")) c.format = corpus_format_from_string(j.at("format").get<std::string>());
        else if (c.corpus.extension() == ".csv") c.format = CorpusFormat::csv;

        if (j.contains("scorer")) {
            const auto& s = j.at("scorer");
            if (s.is_string()) {
                auto id = s.get<std::string>();
                if (id != "offline-rarity" && id != "none")
                    throw ConfigError("scorer must be \"offline-rarity\", \"none\" or a scorer object");
                c.scorer = id;
            } else {
                c.scorer = scorer_config_from_json(s);
            }
        }
        if (j.contains("validation")) {
            const auto& v = j.at("validation");
            c.validation = v.is_string() && v.get<std::string>() == "reference" ? reference_policy() : policy_from_json(v);
        }
        c.target_quality = j.value("target_quality", c.target_quality);
        if (!(c.target_quality > 0.0 && c.target_quality < 1.0)) throw ConfigError("target_quality must lie in (0, 1)");
        if (j.contains("singleton_policy"))
            c.singleton_policy = singleton_policy_from_string(j.at("singleton_policy").get<std::string>());
        if (j.contains("theta") && !(j.at("theta").is_string() && j.at("theta").get<std::string>() == "auto")) {
            c.theta = j.at("theta").get<double>();
            if (!(*c.theta >= -1.0 && *c.theta <= 1.0)) throw ConfigError("theta must lie in [-1, 1]");
        }
        if (j.contains("L") && !(j.at("L").is_string() && j.at("L").get<std::string>() == "auto")) {
            auto l = j.at("L").get<long long>();
            if (l < 2) throw ConfigError("L must be >= 2");
            c.L = static_cast<std::size_t>(l);
        }
        c.k = j.value("k", c.k);
        if (c.k < 1) throw ConfigError("k must be >= 1");
        if (j.contains("seeds")) c.kmeans_seed = j.at("seeds").value("kmeans", c.kmeans_seed);
        c.n_init = j.value("n_init", c.n_init);
        if (c.n_init < 1) throw ConfigError("n_init must be >= 1");
        if (j.contains("calibration")) {
            const auto& cal = j.at("calibration");
            c.calibration.grid_step = cal.value("grid_step", c.calibration.grid_step);
            c.calibration.min_rate = cal.value("min_rate", c.calibration.min_rate);
            if (cal.value("tie", std::string("no_jump")) == "jump") c.calibration.tie = ThetaTie::jump;
            if (!(c.calibration.grid_step > 0.0)) throw ConfigError("calibration.grid_step must be positive");
        }
        if (j.contains("formats")) {
            c.formats.clear();
            for (const auto& f : j.at("formats")) c.formats.insert(output_format_from_string(f.get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    }
    if (!c.theta && !c.gold) throw ConfigError("theta is \"auto\" but no gold file is configured");
    c.canonical = j.dump();
    return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return pipeline_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Bundle

struct TaskCategories {
    CategoryMap map;
    ThresholdSelection selection;
    bool from_cache = false;
};

struct TaskClusters {
    ClusterModel model;
    std::map<std::string, int> assigned;  // LLM rows
    std::vector<std::pair<int, double>> elbow;
};

struct ReportBundle {
    std::map<Task, TaskCategories> categories;
    std::optional<ThetaCalibration> calibration;
    double theta = 0.0;
    std::size_t L = 0;
    Corpus corpus;  // cleaned, validated
    std::vector<SequenceJumps> jumps;
    std::vector<ProfileMatrix> profiles;
    std::map<Task, TaskClusters> clusters;
    std::vector<OriginalityScore> scores;
    nlohmann::ordered_json report;
    nlohmann::ordered_json provenance;
};

struct RunOptions {
    /// Used only by a live scorer.
    Transport transport;
};

/// Provenance record: tool version, config hash, input hashes and seeds.
inline nlohmann::ordered_json version_info(const PipelineConfig& c) {
    nlohmann::ordered_json p;
    p["tool"] = "fluxjump";
    p["version"] = kVersion;
    p["config_hash"] = sha256_hex(c.canonical);
    nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
    auto add = [&](const char* name, const std::optional<std::filesystem::path>& path) {
        if (path && std::filesystem::exists(*path)) inputs[name] = sha256_file(*path);
    };
    add("corpus", c.corpus);
    add("embeddings", c.embeddings);
    add("rules", c.rules);
    add("gold", c.gold);
    add("scores", c.scores);
    p["inputs"] = std::move(inputs);
    p["seeds"] = {{"kmeans", c.kmeans_seed}, {"n_init", c.n_init}};
    p["json_library"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                        "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH);
    return p;
}

namespace detail {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    Log::info(std::string("stage ") + name);
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const CalibrationError& e) {
        throw CalibrationError(std::string("stage '") + name + "' failed: " + e.what(), e.best_tpr(), e.best_tnr());
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

inline std::string category_cache_key(Task task, const UniqueResponses& u, const std::string& embeddings_hash,
                                      double target, SingletonPolicy policy) {
    std::string blob = std::string(to_string(task)) + '\n' + embeddings_hash + '\n' + nlohmann::json(target).dump() +
                       '\n' + (policy == SingletonPolicy::exclude ? "exclude" : "count_as_one") + '\n';
    for (const auto& t : u.texts) blob += t + '\n';
    return sha256_hex(blob);
}

struct SeqInfo {
    const ResponseSequence* seq = nullptr;
    double jumps = 0.0;  // final profile value at the common L
    std::optional<double> originality;
};

/// Sets `out[key]` to f() or to {"skipped": reason}.
template <typename F>
void analysis(nlohmann::ordered_json& out, const std::string& key, F&& f) {
    try {
        out[key] = f();
    } catch (const Error& e) {
        out[key] = {{"skipped", e.what()}};
        Log::info("analysis " + key + " skipped: " + e.what());
    }
}

inline nlohmann::ordered_json both_methods(const std::vector<double>& a, const std::vector<double>& b) {
    nlohmann::ordered_json j;
    j["mann_whitney"] = stats::to_json(stats::compare_groups(a, b, stats::CompareMethod::mann_whitney));
    j["welch_t"] = stats::to_json(stats::compare_groups(a, b, stats::CompareMethod::welch_t));
    return j;
}

}  // namespace detail

/// Stats report keyed by analysis name.
inline nlohmann::ordered_json build_report(const ReportBundle& b) {
    using detail::SeqInfo;
    std::map<std::pair<std::string, Task>, const ResponseSequence*> seqs;
    for (const auto& s : b.corpus) seqs[{s.producer_id, s.task}] = &s;
    auto orig = mean_originality(b.scores);

    // Jump counts of every profiled sequence, per task.
    std::map<Task, std::vector<SeqInfo>> info;
    for (const auto& m : b.profiles)
        for (const auto& r : m.rows) {
            SeqInfo si;
            si.seq = seqs.at({r.producer_id, m.task});
            si.jumps = r.values.empty() ? 0.0 : r.values.back();
            if (auto it = orig.find({r.producer_id, m.task}); it != orig.end()) si.originality = it->second;
            info[m.task].push_back(si);
        }
    auto counts = [&](Task t, Source s) {
        std::vector<double> out;
        for (const auto& si : info[t])
            if (si.seq->source == s) out.push_back(si.jumps);
        return out;
    };

    nlohmann::ordered_json rep = nlohmann::ordered_json::object();

    detail::analysis(rep, "testretest_aut", [&] {
        std::map<std::string, double> brick;
        for (const auto& si : info[Task::aut_brick])
            if (si.seq->source == Source::human) brick[si.seq->producer_id] = si.jumps;
        std::vector<double> x, y;
        for (const auto& si : info[Task::aut_paperclip])
            if (si.seq->source == Source::human)
                if (auto it = brick.find(si.seq->producer_id); it != brick.end()) {
                    x.push_back(it->second);
                    y.push_back(si.jumps);
                }
        return stats::to_json(stats::pearson(x, y));
    });

    detail::analysis(rep, "jumps_aut_vs_vft", [&] {
        auto vft = counts(Task::vft_animals, Source::human);
        nlohmann::ordered_json j = nlohmann::ordered_json::object();
        for (Task t : {Task::aut_brick, Task::aut_paperclip}) {
            auto aut = counts(t, Source::human);
            if (aut.empty()) continue;
            j[to_string(t)] = detail::both_methods(aut, vft);
        }
        if (j.empty()) throw Error("no human AUT profiles");
        return j;
    });

    detail::analysis(rep, "rt_by_jump", [&] {
        stats::RtSplit rts;
        for (const auto& sj : b.jumps) {
            const auto* seq = seqs.at({sj.producer_id, sj.task});
            if (seq->source == Source::human) stats::collect_rts(*seq, sj.combined, rts);
        }
        auto mw = stats::rt_by_jump(rts, stats::CompareMethod::mann_whitney);
        nlohmann::ordered_json j;
        j["mann_whitney"] = stats::to_json(mw);
        j["welch_t"] = stats::to_json(stats::rt_by_jump(rts, stats::CompareMethod::welch_t));
        j["direction"] = mw.mean_a > mw.mean_b ? "jump slower" : (mw.mean_a < mw.mean_b ? "jump faster" : "no difference");
        return j;
    });

    for (Task t : kAllTasks) {
        if (!is_aut(t) || !info.count(t)) continue;
        for (Source s : {Source::human, Source::llm}) {
            const std::string suffix = std::string(to_string(t)) + "_" + std::string(to_string(s));
            detail::analysis(rep, "originality_vs_jumps_" + suffix, [&] {
                std::vector<double> x, y;
                for (const auto& si : info[t])
                    if (si.seq->source == s && si.originality) {
                        x.push_back(*si.originality);
                        y.push_back(si.jumps);
                    }
                return stats::to_json(stats::ols_slope(x, y));
            });
            detail::analysis(rep, "originality_by_cluster_" + suffix, [&] {
                auto cit = b.clusters.find(t);
                if (cit == b.clusters.end()) throw Error("no clusters");
                const auto& tc = cit->second;
                std::map<std::string, int> label = tc.assigned;
                for (std::size_t i = 0; i < tc.model.producer_ids.size(); ++i)
                    label[tc.model.producer_ids[i]] = tc.model.labels[i];
                std::vector<double> persistent, flexible;
                for (const auto& si : info[t]) {
                    if (si.seq->source != s || !si.originality) continue;
                    auto it = label.find(si.seq->producer_id);
                    if (it == label.end()) continue;
                    if (it->second == 0) persistent.push_back(*si.originality);
                    if (it->second == tc.model.k - 1) flexible.push_back(*si.originality);
                }
                auto j = detail::both_methods(flexible, persistent);
                j["groups"] = {"flexible", "persistent"};
                return j;
            });
        }
    }

    for (Task t : kAllTasks) {
        if (!info.count(t)) continue;
        detail::analysis(rep, "temperature_vs_jumps_" + std::string(to_string(t)), [&] {
            std::vector<double> x, y;
            for (const auto& si : info[t])
                if (si.seq->source == Source::llm && si.seq->temperature()) {
                    x.push_back(*si.seq->temperature());
                    y.push_back(si.jumps);
                }
            return stats::to_json(stats::ols_slope(x, y));
        });
    }
    return rep;
}

inline ReportBundle run_pipeline(const PipelineConfig& cfg, const RunOptions& opts = {}) {
    ReportBundle b;

    b.corpus = detail::stage("ingest", [&] {
        if (!std::filesystem::exists(cfg.corpus)) throw Error("missing corpus file " + cfg.corpus.string());
        CleaningRules rules;
        if (cfg.rules) rules = load_rules(*cfg.rules);
        return clean_corpus(parse_responses(cfg.corpus, cfg.format), rules);
    });

    detail::stage("validate", [&] {
        apply_validation(b.corpus, cfg.validation);
        Corpus valid;
        for (auto& s : b.corpus)
            if (s.valid) valid.push_back(std::move(s));
        b.corpus = std::move(valid);
        if (b.corpus.empty()) throw Error("no valid sequences remain");
        return 0;
    });

    std::set<Task> tasks;
    for (const auto& s : b.corpus) tasks.insert(s.task);

    EmbeddingStore store;
    detail::stage("categorize", [&] {
        if (!std::filesystem::exists(cfg.embeddings))
            throw Error("missing embeddings file " + cfg.embeddings.string() + " (required by categorize)");
        store = load_embeddings(cfg.embeddings);
        const std::string emb_hash = sha256_file(cfg.embeddings);
        for (Task t : tasks) {
            auto u = dedupe_corpus(b.corpus, t);
            const auto key = detail::category_cache_key(t, u, emb_hash, cfg.target_quality, cfg.singleton_policy);
            std::optional<std::filesystem::path> cache_file;
            if (cfg.cache_dir) cache_file = *cfg.cache_dir / ("categories_" + std::string(to_string(t)) + ".json");
            if (cache_file && std::filesystem::exists(*cache_file)) {
                std::ifstream in(*cache_file);
                auto j = nlohmann::ordered_json::parse(in, nullptr, false);
                if (!j.is_discarded() && j.value("key", std::string{}) == key) {
                    auto [map, sel] = categories_from_json(j.at("categories"));
                    Log::info("categories for " + std::string(to_string(t)) + " loaded from cache");
                    b.categories.emplace(t, TaskCategories{std::move(map), sel, true});
                    continue;
                }
            }
            auto cs = categorize(t, store.select(u.texts), cfg.target_quality, cfg.singleton_policy);
            Log::info(std::string(to_string(t)) + ": " + std::to_string(u.texts.size()) + " unique responses, " +
                      std::to_string(cs.selection.n_categories) + " categories");
            if (cache_file) {
                std::filesystem::create_directories(cache_file->parent_path());
                std::ofstream(*cache_file, std::ios::binary)
                    << nlohmann::ordered_json{{"key", key}, {"categories", to_json(cs.map, cs.selection)}}.dump() << '\n';
            }
            b.categories.emplace(t, TaskCategories{std::move(cs.map), cs.selection, false});
        }
        return 0;
    });

    std::map<Task, CategoryMap> maps;
    for (const auto& [t, tc] : b.categories) maps.emplace(t, tc.map);

    b.theta = detail::stage("calibrate", [&] {
        if (cfg.theta) return *cfg.theta;
        auto gold = load_gold(*cfg.gold);
        std::set<std::pair<std::string, Task>> present;
        for (const auto& s : b.corpus) present.insert({s.producer_id, s.task});
        std::vector<GoldJumps> usable;
        for (auto& g : gold)
            if (present.count({g.producer_id, g.task})) usable.push_back(std::move(g));
        if (usable.size() != gold.size())
            Log::warn(std::to_string(gold.size() - usable.size()) + " gold sequences are absent or invalid; ignored");
        b.calibration = calibrate_theta(b.corpus, usable, maps, store, cfg.calibration);
        Log::info("theta = " + nlohmann::json(b.calibration->theta).dump() + " (tpr " +
                  nlohmann::json(b.calibration->tpr).dump() + ", tnr " + nlohmann::json(b.calibration->tnr).dump() + ")");
        return b.calibration->theta;
    });

    detail::stage("jumps", [&] {
        for (const auto& seq : b.corpus) {
            auto jc = jump_cat(seq, maps.at(seq.task));
            auto js = jump_ss(seq, store, b.theta, cfg.calibration.tie);
            auto comb = combine_jumps(jc, js);
            b.jumps.push_back({seq.producer_id, seq.task, jc.values, js.values, comb.values});
        }
        return 0;
    });

    detail::stage("profiles", [&] {
        b.L = cfg.L ? *cfg.L : default_profile_length(b.corpus);
        std::vector<ProfileInput> inputs;
        std::map<std::pair<std::string, Task>, Source> source;
        for (const auto& s : b.corpus) source[{s.producer_id, s.task}] = s.source;
        for (const auto& sj : b.jumps) inputs.push_back({sj.producer_id, sj.task, source.at({sj.producer_id, sj.task}), sj.combined});
        for (Task t : tasks) b.profiles.push_back(build_profile_matrix(inputs, t, b.L));
        return 0;
    });

    detail::stage("cluster", [&] {
        KMeansOptions ko;
        ko.n_init = cfg.n_init;
        for (const auto& m : b.profiles) {
            auto human = m.rows_of(Source::human);
            if (human.size() < static_cast<std::size_t>(cfg.k)) {
                Log::warn(std::string(to_string(m.task)) + ": fewer human profiles than k; not clustered");
                continue;
            }
            TaskClusters tc;
            tc.model = kmeans_fit(human, cfg.k, cfg.kmeans_seed, ko);
            tc.assigned = assign_profiles(tc.model, m.rows_of(Source::llm));
            tc.elbow = elbow_curve(human, std::min(8, static_cast<int>(human.size())), cfg.kmeans_seed, ko);
            b.clusters.emplace(m.task, std::move(tc));
        }
        if (b.clusters.empty()) throw Error("no task has at least k human profiles");
        return 0;
    });

    detail::stage("score", [&] {
        if (cfg.scores) {
            std::ifstream in(*cfg.scores);
            if (!in) throw Error("cannot open scores file " + cfg.scores->string());
            b.scores = read_scores_csv(in);
            return 0;
        }
        if (const auto* id = std::get_if<std::string>(&cfg.scorer)) {
            if (*id == "none") return 0;
            for (Task t : tasks)
                if (is_aut(t)) {
                    auto part = RarityScorer(b.corpus, b.categories.at(t).map).score_all(b.corpus);
                    b.scores.insert(b.scores.end(), part.begin(), part.end());
                }
            return 0;
        }
        if (!opts.transport) throw ConfigError("live scorer configured but no transport available");
        Corpus aut;
        for (const auto& s : b.corpus)
            if (is_aut(s.task)) aut.push_back(s);
        b.scores = score_originality(std::get<ScorerConfig>(cfg.scorer), aut, opts.transport);
        return 0;
    });

    b.report = detail::stage("stats", [&] { return build_report(b); });
    b.provenance = version_info(cfg);
    b.provenance["parameters"] = {{"target_quality", cfg.target_quality},
                                  {"singleton_policy", cfg.singleton_policy == SingletonPolicy::exclude ? "exclude" : "count_as_one"},
                                  {"theta", b.theta},
                                  {"theta_mode", cfg.theta ? "fixed" : "auto"},
                                  {"L", b.L},
                                  {"k", cfg.k}};
    return b;
}

// ---------------------------------------------------------------------------
// Emission

struct ManifestEntry {
    std::string path;  // relative to the bundle directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

namespace detail {

inline void flatten(const nlohmann::ordered_json& j, const std::string& prefix, std::ostream& out) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "." + std::to_string(i), out);
    } else {
        auto dot = prefix.find('.');
        std::string head = dot == std::string::npos ? prefix : prefix.substr(0, dot);
        std::string rest = dot == std::string::npos ? "" : prefix.substr(dot + 1);
        out << csv_escape(head) << ',' << csv_escape(rest) << ','
            << csv_escape(j.is_string() ? j.get<std::string>() : j.dump()) << '\n';
    }
}

}  // namespace detail

inline std::vector<ManifestEntry> emit_report(const ReportBundle& b, const std::filesystem::path& out_dir,
                                              const std::set<OutputFormat>& formats) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) throw Error("cannot create output dir " + out_dir.string());

    std::vector<ManifestEntry> manifest;
    auto put = [&](const std::string& name, const std::string& bytes) {
        auto path = out_dir / name;
        std::ofstream out(path, std::ios::binary);
        out << bytes;
        out.close();
        if (!out) throw Error("cannot write " + path.string());
        manifest.push_back({name, sha256_hex(bytes), bytes.size()});
    };
    const bool json = formats.count(OutputFormat::json) > 0, csv = formats.count(OutputFormat::csv) > 0,
               svg = formats.count(OutputFormat::svg) > 0;

    put("provenance.json", b.provenance.dump(2) + "\n");
    if (json) {
        for (const auto& [t, tc] : b.categories)
            put("categories_" + std::string(to_string(t)) + ".json", to_json(tc.map, tc.selection).dump(2) + "\n");
        nlohmann::ordered_json cal;
        cal["theta"] = b.theta;
        cal["mode"] = b.calibration ? "auto" : "fixed";
        if (b.calibration) {
            cal["tpr"] = b.calibration->tpr;
            cal["tnr"] = b.calibration->tnr;
            cal["feasible_interval"] = {b.calibration->feasible_lo, b.calibration->feasible_hi};
        }
        put("calibration.json", cal.dump(2) + "\n");
        for (const auto& [t, tc] : b.clusters) {
            auto j = to_json(tc.model, tc.assigned, t);
            j["elbow"] = tc.elbow;
            put("clusters_" + std::string(to_string(t)) + ".json", j.dump(2) + "\n");
        }
        put("report.json", b.report.dump(2) + "\n");
    }
    if (csv) {
        std::ostringstream jumps, profiles, scores, report;
        write_jumps_csv(b.jumps, jumps);
        put("jumps.csv", jumps.str());
        write_profiles_csv(b.profiles, profiles);
        put("profiles.csv", profiles.str());
        if (!b.scores.empty()) {
            write_scores_csv(b.scores, scores);
            put("scores.csv", scores.str());
        }
        report << "analysis,field,value\n";
        for (const auto& [k, v] : b.report.items()) detail::flatten(v, k, report);
        put("report.csv", report.str());
    }
    if (svg) {
        for (const auto& m : b.profiles) {
            auto cit = b.clusters.find(m.task);
            if (cit == b.clusters.end()) continue;
            const auto& tc = cit->second;
            const std::string task(to_string(m.task));
            const auto names = default_cluster_names(tc.model.k);
            std::map<std::string, int> label;
            for (std::size_t i = 0; i < tc.model.producer_ids.size(); ++i) label[tc.model.producer_ids[i]] = tc.model.labels[i];
            std::vector<svg::Trajectory> rows;
            for (const auto& r : m.rows)
                if (r.source == Source::human) rows.push_back({r.values, label.at(r.producer_id)});
            put("profiles_" + task + ".svg", svg::profile_panels(task + " human jump profiles", rows, tc.model.centroids, names));
            put("elbow_" + task + ".svg", svg::elbow(task + " elbow", tc.elbow));

            std::map<std::string, std::vector<double>> pct;
            std::map<std::string, std::vector<int>> n;
            auto bump = [&](const std::string& group, int c) {
                auto& v = n[group];
                v.resize(static_cast<std::size_t>(tc.model.k), 0);
                ++v[static_cast<std::size_t>(c)];
            };
            for (int c : tc.model.labels) bump("human", c);
            std::map<std::string, std::string> model_of;
            for (const auto& s : b.corpus)
                if (s.task == m.task && s.source == Source::llm) model_of[s.producer_id] = s.model().value_or("llm");
            for (const auto& [id, c] : tc.assigned) bump(model_of.count(id) ? model_of[id] : "llm", c);
            for (const auto& [g, v] : n) {
                double total = 0;
                for (int x : v) total += x;
                for (int x : v) pct[g].push_back(100.0 * x / total);
            }
            put("assignments_" + task + ".svg", svg::assignment_bars(task + " cluster assignment (%)", pct, names));
        }
    }

    std::sort(manifest.begin(), manifest.end(), [](const auto& a, const auto& c) { return a.path < c.path; });
    nlohmann::ordered_json mj;
    mj["files"] = nlohmann::ordered_json::array();
    for (const auto& e : manifest) mj["files"].push_back({{"path", e.path}, {"sha256", e.sha256}, {"bytes", e.bytes}});
    std::ofstream(out_dir / "manifest.json", std::ios::binary) << mj.dump(2) << '\n';
    return manifest;
}

}  // namespace fluxjump
