// fluxjump command-line front end.
//
// Exit codes: 0 success, 2 config error, 3 stage failure, 4 calibration failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fluxjump/fluxjump.hpp"
#include "fluxjump/http_transport.hpp"

namespace fs = std::filesystem;
using namespace fluxjump;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitCalibration = 4;

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

Corpus read_corpus(const fs::path& path) {
    return parse_responses(path, path.extension() == ".csv" ? CorpusFormat::csv : CorpusFormat::jsonl);
}

std::map<Task, CategoryMap> read_category_files(const std::vector<std::string>& files) {
    std::map<Task, CategoryMap> maps;
    for (const auto& f : files) {
        auto [map, sel] = load_categories(f);
        maps.emplace(map.task(), std::move(map));
    }
    return maps;
}

ProviderConfig read_provider(const fs::path& path) { return provider_config_from_json(read_json(path)); }

struct Options {
    // ingest
    std::string input, format = "jsonl", rules, validation, out, unique_out;
    // embed
    std::string provider;
    // categorize
    std::string embeddings, corpus, task, singleton_policy = "count_as_one";
    double target = 0.7;
    // jumps
    std::vector<std::string> categories;
    std::string theta = "auto", gold, tie = "no_jump";
    // profiles / cluster
    std::string jumps, L = "auto", profiles, fit_on = "human", assign = "llm";
    int k = 3, n_init = 10, elbow_max = 0;
    std::uint64_t seed = 0;
    // stats
    std::string scores;
    std::vector<std::string> clusters;
    // collect
    std::string spec, providers, fixture_dir, log_dir, params, human, templates;
    bool live = false;
    // score
    std::string scorer = "offline", scorer_config;
    // simulate / run
    std::string out_dir, config;
    bool verbose = false;
};

int cmd_ingest(const Options& o) {
    CleaningRules rules;
    if (!o.rules.empty()) rules = load_rules(o.rules);
    auto corpus = clean_corpus(parse_responses(o.input, corpus_format_from_string(o.format)), rules);
    ValidationPolicy policy;
    if (o.validation == "reference") policy = reference_policy();
    else if (!o.validation.empty()) policy = policy_from_json(read_json(o.validation));
    apply_validation(corpus, policy);
    Corpus valid;
    std::size_t dropped = 0;
    for (auto& s : corpus) {
        if (s.valid) valid.push_back(std::move(s));
        else ++dropped;
    }
    write_jsonl(valid, fs::path(o.out));
    Log::info("ingest: " + std::to_string(valid.size()) + " sequences kept, " + std::to_string(dropped) + " invalid");
    if (!o.unique_out.empty()) {
        auto out = open_out(o.unique_out);
        std::set<std::string> seen;
        for (Task t : kAllTasks)
            for (const auto& text : dedupe_corpus(valid, t).texts)
                if (seen.insert(text).second) out << nlohmann::json{{"text", text}}.dump() << '\n';
    }
    return 0;
}

int cmd_embed(const Options& o) {
    auto corpus = read_corpus(o.corpus);
    std::vector<std::string> texts;
    std::set<std::string> seen;
    for (Task t : kAllTasks)
        for (const auto& text : dedupe_corpus(corpus, t).texts)
            if (seen.insert(text).second) texts.push_back(text);
    FetchStats st;
    auto store = fetch_embeddings(read_provider(o.provider), texts, make_http_transport(), &st);
    write_embeddings(store, fs::path(o.out));
    return 0;
}

int cmd_categorize(const Options& o) {
    auto store = load_embeddings(o.embeddings);
    auto policy = singleton_policy_from_string(o.singleton_policy);
    std::vector<Task> tasks;
    std::optional<Corpus> corpus;
    if (!o.corpus.empty()) corpus = read_corpus(o.corpus);
    if (!o.task.empty()) tasks.push_back(task_from_string(o.task));
    else if (corpus) {
        std::set<Task> present;
        for (const auto& s : *corpus) present.insert(s.task);
        tasks.assign(present.begin(), present.end());
    } else {
        throw ConfigError("categorize needs --task when no --corpus is given");
    }
    if (tasks.size() > 1 && !o.out.empty() && fs::path(o.out).extension() == ".json")
        throw ConfigError("corpus holds several tasks; pass --task or an output directory");
    for (Task t : tasks) {
        EmbeddingStore sub = corpus ? store.select(dedupe_corpus(*corpus, t).texts) : store;
        auto cs = categorize(t, sub, o.target, policy);
        fs::path out = tasks.size() > 1 ? fs::path(o.out) / ("categories_" + std::string(to_string(t)) + ".json") : fs::path(o.out);
        open_out(out) << to_json(cs.map, cs.selection).dump(2) << '\n';
        Log::info(std::string(to_string(t)) + ": " + std::to_string(cs.selection.n_categories) + " categories at distance " +
                  nlohmann::json(cs.selection.distance_threshold).dump());
    }
    return 0;
}

int cmd_jumps(const Options& o) {
    auto corpus = read_corpus(o.corpus);
    auto maps = read_category_files(o.categories);
    auto store = load_embeddings(o.embeddings);
    CalibrationOptions copt;
    if (o.tie == "jump") copt.tie = ThetaTie::jump;
    double theta;
    if (o.theta == "auto") {
        if (o.gold.empty()) throw ConfigError("--theta auto needs --gold");
        auto cal = calibrate_theta(corpus, load_gold(o.gold), maps, store, copt);
        theta = cal.theta;
        Log::info("calibrated theta " + nlohmann::json(cal.theta).dump() + " (tpr " + nlohmann::json(cal.tpr).dump() +
                  ", tnr " + nlohmann::json(cal.tnr).dump() + ")");
    } else {
        try {
            theta = std::stod(o.theta);
        } catch (const std::exception&) {
            throw ConfigError("--theta must be a number or auto");
        }
    }
    std::vector<SequenceJumps> out;
    for (const auto& seq : corpus) {
        auto mit = maps.find(seq.task);
        if (mit == maps.end()) throw ConfigError("no categories file for task " + std::string(to_string(seq.task)));
        auto jc = jump_cat(seq, mit->second);
        auto js = jump_ss(seq, store, theta, copt.tie);
        out.push_back({seq.producer_id, seq.task, jc.values, js.values, combine_jumps(jc, js).values});
    }
    auto f = open_out(o.out);
    write_jumps_csv(out, f);
    return 0;
}

int cmd_profiles(const Options& o) {
    std::ifstream in(o.jumps);
    if (!in) throw ConfigError("cannot open " + o.jumps);
    auto jumps = read_jumps_csv(in);
    std::map<std::pair<std::string, Task>, Source> source;
    std::optional<Corpus> corpus;
    if (!o.corpus.empty()) {
        corpus = read_corpus(o.corpus);
        for (const auto& s : *corpus) source[{s.producer_id, s.task}] = s.source;
    }
    std::size_t L;
    if (o.L == "auto") {
        if (corpus) {
            L = default_profile_length(*corpus);
        } else {
            // Without a corpus every row counts as human.
            std::vector<std::size_t> aut, all;
            for (const auto& j : jumps) {
                all.push_back(j.combined.size() + 1);
                if (is_aut(j.task)) aut.push_back(j.combined.size() + 1);
            }
            if (all.empty()) throw Error("jumps file is empty");
            L = lower_median(aut.empty() ? all : aut);
        }
    } else {
        L = static_cast<std::size_t>(std::stoul(o.L));
    }
    std::vector<ProfileInput> inputs;
    std::set<Task> tasks;
    for (const auto& j : jumps) {
        auto it = source.find({j.producer_id, j.task});
        inputs.push_back({j.producer_id, j.task, it == source.end() ? Source::human : it->second, j.combined});
        tasks.insert(j.task);
    }
    std::vector<ProfileMatrix> mats;
    for (Task t : tasks) mats.push_back(build_profile_matrix(inputs, t, L));
    auto f = open_out(o.out);
    write_profiles_csv(mats, f);
    Log::info("profiles at L = " + std::to_string(L));
    return 0;
}

int cmd_cluster(const Options& o) {
    std::ifstream in(o.profiles);
    if (!in) throw ConfigError("cannot open " + o.profiles);
    auto mats = read_profiles_csv(in);
    const ProfileMatrix* m = nullptr;
    if (!o.task.empty()) {
        Task t = task_from_string(o.task);
        for (const auto& x : mats)
            if (x.task == t) m = &x;
        if (!m) throw ConfigError("profiles file has no rows for " + o.task);
    } else if (mats.size() == 1) {
        m = &mats.front();
    } else {
        throw ConfigError("profiles file holds several tasks; pass --task");
    }
    KMeansOptions ko;
    ko.n_init = o.n_init;
    auto fit_rows = m->rows_of(source_from_string(o.fit_on));
    auto model = kmeans_fit(fit_rows, o.k, o.seed, ko);
    std::map<std::string, int> assigned;
    if (o.assign != "none") assigned = assign_profiles(model, m->rows_of(source_from_string(o.assign)));
    auto j = to_json(model, assigned, m->task);
    if (o.elbow_max > 0) j["elbow"] = elbow_curve(fit_rows, o.elbow_max, o.seed, ko);
    open_out(o.out) << j.dump(2) << '\n';
    return 0;
}

int cmd_stats(const Options& o) {
    ReportBundle b;
    b.corpus = read_corpus(o.corpus);
    {
        std::ifstream in(o.jumps);
        if (!in) throw ConfigError("cannot open " + o.jumps);
        b.jumps = read_jumps_csv(in);
    }
    {
        std::ifstream in(o.profiles);
        if (!in) throw ConfigError("cannot open " + o.profiles);
        b.profiles = read_profiles_csv(in);
    }
    if (!o.scores.empty()) {
        std::ifstream in(o.scores);
        if (!in) throw ConfigError("cannot open " + o.scores);
        b.scores = read_scores_csv(in);
    }
    for (const auto& f : o.clusters) {
        auto lc = clusters_from_json(read_json(f));
        if (!lc.task) throw ConfigError(f + " does not name its task");
        b.clusters[*lc.task] = TaskClusters{lc.model, lc.assigned, {}};
    }
    open_out(o.out) << build_report(b).dump(2) << '\n';
    return 0;
}

int cmd_collect(const Options& o) {
    auto spec = sweep_spec_from_json(read_json(o.spec));
    auto pj = read_json(o.providers);
    auto providers = load_providers(pj.is_array() ? pj : nlohmann::json::array({pj}));
    PromptParams params;
    if (!o.params.empty()) params = prompt_params_from_json(read_json(o.params));
    else if (!o.human.empty()) params = derive_prompt_params(read_corpus(o.human));
    else throw ConfigError("collect needs --params or --human to set prompt lengths");
    fs::path tdir = o.templates.empty() ? fs::path(FLUXJUMP_DEFAULT_PROMPTS) : fs::path(o.templates);
    SweepOptions so;
    so.prompt = build_prompt(spec.task, params, load_templates(tdir));
    if (o.live == !o.fixture_dir.empty()) throw ConfigError("pass exactly one of --live or --fixture-dir");
    if (!o.fixture_dir.empty()) so.fixture_dir = o.fixture_dir;
    else so.transport = make_http_transport();
    if (!o.log_dir.empty()) so.log_dir = o.log_dir;
    auto res = run_sweep(spec, providers, so);
    auto corpus = outputs_to_corpus(res.outputs, is_aut(spec.task) ? params.n_aut : params.n_vft);
    write_jsonl(corpus, fs::path(o.out));
    Log::info("collect: " + std::to_string(res.outputs.size()) + " outputs, " + std::to_string(res.failed.size()) +
              " failed cells");
    return 0;
}

int cmd_score(const Options& o) {
    auto corpus = read_corpus(o.corpus);
    std::vector<OriginalityScore> scores;
    if (o.scorer == "ocs") {
        if (o.scorer_config.empty()) throw ConfigError("--scorer ocs needs --config");
        Corpus aut;
        for (const auto& s : corpus)
            if (is_aut(s.task)) aut.push_back(s);
        std::optional<fs::path> logs;
        if (!o.log_dir.empty()) logs = o.log_dir;
        scores = score_originality(scorer_config_from_json(read_json(o.scorer_config)), aut, make_http_transport(), logs);
    } else if (o.scorer == "offline") {
        auto maps = read_category_files(o.categories);
        for (const auto& [t, map] : maps) {
            if (!is_aut(t)) continue;
            auto part = RarityScorer(corpus, map).score_all(corpus);
            scores.insert(scores.end(), part.begin(), part.end());
        }
    } else {
        throw ConfigError("--scorer must be ocs or offline");
    }
    auto f = open_out(o.out);
    write_scores_csv(scores, f);
    return 0;
}

int cmd_simulate(const Options& o) {
    auto spec = synth_spec_from_json(read_json(o.spec));
    write_synth(simulate_corpus(spec), spec, o.out_dir);
    return 0;
}

int cmd_run(const Options& o) {
    auto cfg = load_pipeline_config(o.config);
    RunOptions ro;
    ro.transport = make_http_transport();
    auto bundle = run_pipeline(cfg, ro);
    auto manifest = emit_report(bundle, o.out_dir, cfg.formats);
    Log::info("wrote " + std::to_string(manifest.size()) + " files to " + o.out_dir);
    return 0;
}

int cmd_version(const Options& o) {
    nlohmann::ordered_json j;
    if (!o.config.empty()) j = version_info(load_pipeline_config(o.config));
    else j = {{"tool", "fluxjump"}, {"version", kVersion}};
    std::cout << j.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fluxjump: jump signals and profiles in response sequences"};
    app.require_subcommand(1);
    Options o;
    app.add_flag("-v,--verbose", o.verbose, "Log debug messages");

    auto* ingest = app.add_subcommand("ingest", "Parse, clean and validate a response corpus");
    ingest->add_option("--input", o.input, "Corpus file")->required();
    ingest->add_option("--format", o.format, "jsonl or csv");
    ingest->add_option("--rules", o.rules, "Cleaning rules JSON");
    ingest->add_option("--validation", o.validation, "'reference' or a validation policy JSON");
    ingest->add_option("--out", o.out, "Output corpus JSONL")->required();
    ingest->add_option("--unique-out", o.unique_out, "Also write unique texts as JSONL for encoding");

    auto* embed = app.add_subcommand("embed", "Fetch embeddings for the unique texts of a corpus");
    embed->add_option("--corpus", o.corpus)->required();
    embed->add_option("--provider", o.provider, "Embedding provider JSON")->required();
    embed->add_option("--out", o.out)->required();

    auto* categorize = app.add_subcommand("categorize", "Ward clustering of unique responses");
    categorize->add_option("--embeddings", o.embeddings)->required();
    categorize->add_option("--corpus", o.corpus, "Restrict to this corpus's texts, per task");
    categorize->add_option("--task", o.task);
    categorize->add_option("--target", o.target, "Quality target")->capture_default_str();
    categorize->add_option("--singleton-policy", o.singleton_policy, "one or exclude")->capture_default_str();
    categorize->add_option("--out", o.out, "categories.json, or a directory for several tasks")->required();

    auto* jumps = app.add_subcommand("jumps", "Code jumps for every sequence");
    jumps->add_option("--corpus", o.corpus)->required();
    jumps->add_option("--categories", o.categories, "One categories file per task")->required();
    jumps->add_option("--embeddings", o.embeddings)->required();
    jumps->add_option("--theta", o.theta, "Number or auto")->capture_default_str();
    jumps->add_option("--gold", o.gold);
    jumps->add_option("--tie", o.tie, "Side of theta ties: no_jump or jump")->capture_default_str();
    jumps->add_option("--out", o.out)->required();

    auto* profiles = app.add_subcommand("profiles", "Cumulative jump profiles at a common length");
    profiles->add_option("--jumps", o.jumps)->required();
    profiles->add_option("--L", o.L, "auto or an integer")->capture_default_str();
    profiles->add_option("--corpus", o.corpus, "Supplies sources and the auto length");
    profiles->add_option("--out", o.out)->required();

    auto* cluster = app.add_subcommand("cluster", "K-Means on profiles");
    cluster->add_option("--profiles", o.profiles)->required();
    cluster->add_option("--task", o.task);
    cluster->add_option("--k", o.k)->capture_default_str();
    cluster->add_option("--seed", o.seed)->capture_default_str();
    cluster->add_option("--n-init", o.n_init)->capture_default_str();
    cluster->add_option("--fit-on", o.fit_on)->capture_default_str();
    cluster->add_option("--assign", o.assign, "Source to assign, or none")->capture_default_str();
    cluster->add_option("--elbow", o.elbow_max, "Also record inertia for k = 1..N");
    cluster->add_option("--out", o.out)->required();

    auto* stats = app.add_subcommand("stats", "Statistics report");
    stats->add_option("--corpus", o.corpus)->required();
    stats->add_option("--jumps", o.jumps)->required();
    stats->add_option("--profiles", o.profiles)->required();
    stats->add_option("--scores", o.scores);
    stats->add_option("--clusters", o.clusters, "One clusters file per task");
    stats->add_option("--out", o.out)->required();

    auto* collect = app.add_subcommand("collect", "LLM temperature sweep");
    collect->add_option("--spec", o.spec)->required();
    collect->add_option("--providers", o.providers)->required();
    collect->add_option("--fixture-dir", o.fixture_dir, "Replay recorded cells");
    collect->add_flag("--live", o.live, "Call the providers");
    collect->add_option("--log-dir", o.log_dir);
    collect->add_option("--params", o.params, "Prompt params JSON");
    collect->add_option("--human", o.human, "Human corpus to derive prompt params from");
    collect->add_option("--templates", o.templates, "Directory with aut.txt and vft.txt");
    collect->add_option("--out", o.out)->required();

    auto* score = app.add_subcommand("score", "Originality scores");
    score->add_option("--corpus", o.corpus)->required();
    score->add_option("--scorer", o.scorer, "ocs or offline")->capture_default_str();
    score->add_option("--config", o.scorer_config, "Scorer config JSON (ocs)");
    score->add_option("--categories", o.categories, "Categories files (offline)");
    score->add_option("--log-dir", o.log_dir);
    score->add_option("--out", o.out)->required();

    auto* simulate = app.add_subcommand("simulate", "Synthetic corpus with planted structure");
    simulate->add_option("--spec", o.spec)->required();
    simulate->add_option("--out-dir", o.out_dir)->required();

    auto* run = app.add_subcommand("run", "Full pipeline from a config");
    run->add_option("--config", o.config)->required();
    run->add_option("--out-dir", o.out_dir)->required();

    auto* version = app.add_subcommand("version", "Version and provenance");
    version->add_option("--config", o.config);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    if (o.verbose)
        Log::set_sink([](LogLevel l, const std::string& msg) {
            std::cerr << (l == LogLevel::warn ? "[warn] " : l == LogLevel::debug ? "[debug] " : "[info] ") << msg << '\n';
        });

    try {
        if (*ingest) return cmd_ingest(o);
        if (*embed) return cmd_embed(o);
        if (*categorize) return cmd_categorize(o);
        if (*jumps) return cmd_jumps(o);
        if (*profiles) return cmd_profiles(o);
        if (*cluster) return cmd_cluster(o);
        if (*stats) return cmd_stats(o);
        if (*collect) return cmd_collect(o);
        if (*score) return cmd_score(o);
        if (*simulate) return cmd_simulate(o);
        if (*run) return cmd_run(o);
        if (*version) return cmd_version(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const CalibrationError& e) {
        std::cerr << "calibration failed: " << e.what() << " (best tpr " << e.best_tpr() << ", tnr " << e.best_tnr()
                  << ")\n";
        return kExitCalibration;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitStage;
    }
    return 0;
}
