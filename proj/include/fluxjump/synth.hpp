#pragma once

// Synthetic corpora with planted categories, jump rates and response times.
// Randomness is drawn from std::mt19937_64 through hand-rolled transforms so a
// seed gives the same corpus with any standard library.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluxjump/corpus.hpp"
#include "fluxjump/embedding.hpp"
#include "fluxjump/error.hpp"
#include "fluxjump/jumps.hpp"
#include "fluxjump/task.hpp"

namespace fluxjump {

enum class Planting { stratified, bernoulli };

inline Planting planting_from_string(std::string_view s) {
    if (s == "stratified") return Planting::stratified;
    if (s == "bernoulli") return Planting::bernoulli;
    throw ConfigError("unknown planting \"" + std::string(s) + "\" (expected stratified or bernoulli)");
}

struct SynthSpec {
    int n_producers = 100;
    int seq_length = 20;
    int n_categories = 8;
    /// One rate per planted group; producer i belongs to group i % size.
    std::vector<double> jump_rates{0.4, 0.7, 0.95};
    double within_sim = 0.85;
    double between_sim = 0.2;
    /// Half-width of the uniform spread of member loadings around sqrt(within_sim).
    /// 0 gives every member the same typicality.
    double typicality_spread = 0.05;
    double rt_jump_ms = 6000.0;
    double rt_stay_ms = 3000.0;
    std::uint64_t seed = 42;
    int dim = 256;
    std::vector<Task> tasks{Task::aut_brick};
    Planting planting = Planting::stratified;
    /// Optional LLM producers, all with one jump rate; temperatures cycle 0.0..1.0.
    int n_llm_producers = 0;
    double llm_jump_rate = 0.95;
    std::string llm_model = "synth-llm";

    void validate() const {
        if (n_producers < 1 || seq_length < 1 || n_categories < 1 || dim < 1)
            throw ConfigError("synth: counts must be >= 1");
        if (jump_rates.empty()) throw ConfigError("synth: need at least one jump rate");
        for (double r : jump_rates)
            if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("synth: jump rates must lie in [0, 1]");
        if (!(llm_jump_rate >= 0.0 && llm_jump_rate <= 1.0)) throw ConfigError("synth: llm_jump_rate must lie in [0, 1]");
        if (n_llm_producers < 0) throw ConfigError("synth: n_llm_producers must be >= 0");
        if (!(between_sim < within_sim))
            throw ConfigError("synth: infeasible similarity targets, between_sim must be below within_sim");
        if (!(between_sim >= 0.0) || !(within_sim <= 1.0))
            throw ConfigError("synth: similarity targets must satisfy 0 <= between_sim < within_sim <= 1");
        if (n_categories > 1 && dim < n_categories + 2)
            throw ConfigError("synth: dim must exceed n_categories + 1");
        if (!(typicality_spread >= 0.0)) throw ConfigError("synth: typicality_spread must be >= 0");
        if (!(rt_jump_ms > 0.0) || !(rt_stay_ms > 0.0)) throw ConfigError("synth: RT means must be positive");
        if (tasks.empty()) throw ConfigError("synth: need at least one task");
    }
};

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    s.n_producers = j.value("n_producers", s.n_producers);
    s.seq_length = j.value("seq_length", s.seq_length);
    s.n_categories = j.value("n_categories", s.n_categories);
    if (j.contains("jump_rate")) s.jump_rates = {j.at("jump_rate").get<double>()};
    s.jump_rates = j.value("jump_rates", s.jump_rates);
    s.within_sim = j.value("within_sim", s.within_sim);
    s.between_sim = j.value("between_sim", s.between_sim);
    s.typicality_spread = j.value("typicality_spread", s.typicality_spread);
    s.rt_jump_ms = j.value("rt_jump_ms", s.rt_jump_ms);
    s.rt_stay_ms = j.value("rt_stay_ms", s.rt_stay_ms);
    s.seed = j.value("seed", s.seed);
    s.dim = j.value("dim", s.dim);
    if (j.contains("tasks")) {
        s.tasks.clear();
        for (const auto& t : j.at("tasks")) s.tasks.push_back(task_from_string(t.get<std::string>()));
    }
    if (j.contains("planting")) s.planting = planting_from_string(j.at("planting").get<std::string>());
    s.n_llm_producers = j.value("n_llm_producers", s.n_llm_producers);
    s.llm_jump_rate = j.value("llm_jump_rate", s.llm_jump_rate);
    s.llm_model = j.value("llm_model", s.llm_model);
    s.validate();
    return s;
}

struct SynthResult {
    Corpus corpus;
    EmbeddingStore store;
    std::vector<GoldJumps> gold;
    /// Planted group per human producer; LLM producers get group -1.
    std::map<std::string, int> planted;
    /// Planted category of every response text.
    std::map<std::string, int> categories;
};

namespace detail {

class SynthRng {
public:
    explicit SynthRng(std::uint64_t seed) : rng_(seed) {}

    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    /// (0, 1]: safe for log.
    double uniform_pos() { return 1.0 - uniform(); }

    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

    double normal() {
        if (spare_) {
            double v = *spare_;
            spare_.reset();
            return v;
        }
        double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        double a = 2.0 * 3.14159265358979323846 * uniform();
        spare_ = r * std::sin(a);
        return r * std::cos(a);
    }

    /// Gamma(4, mean/4): right-skewed like real RTs, coefficient of variation 0.5.
    double rt(double mean) {
        double s = 0.0;
        for (int i = 0; i < 4; ++i) s -= std::log(uniform_pos());
        return s * mean / 4.0;
    }

private:
    std::mt19937_64 rng_;
    std::optional<double> spare_;
};

inline void orthonormalize_against(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
    for (int pass = 0; pass < 2; ++pass)
        for (const auto& b : basis) {
            double d = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) d += v[i] * b[i];
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * b[i];
        }
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
}

inline std::vector<double> random_direction(SynthRng& rng, int dim, const std::vector<std::vector<double>>& basis) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (double& x : v) x = rng.normal();
    orthonormalize_against(v, basis);
    return v;
}

inline std::vector<std::uint8_t> plant_jumps(SynthRng& rng, std::size_t transitions, double rate, Planting planting) {
    std::vector<std::uint8_t> out(transitions, 0);
    if (planting == Planting::bernoulli) {
        for (auto& v : out) v = rng.uniform() < rate ? 1 : 0;
        return out;
    }
    // Exact count floor(rT) plus one more with probability frac(rT); positions uniform.
    double target = rate * static_cast<double>(transitions);
    std::size_t count = static_cast<std::size_t>(std::floor(target));
    if (rng.uniform() < target - std::floor(target)) ++count;
    count = std::min(count, transitions);
    std::vector<std::size_t> idx(transitions);
    for (std::size_t i = 0; i < transitions; ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = i + rng.below(transitions - i);
        std::swap(idx[i], idx[j]);
        out[idx[i]] = 1;
    }
    return out;
}

}  // namespace detail

/// Member vectors are a p_c + sqrt(1 - a^2) n, with noise n orthogonal to all
/// prototypes and loading a drawn per member from U[sqrt(w) - d, sqrt(w) + d].
/// Two members of one category meet at a_i a_j, which averages w. Prototypes
/// share a common axis giving pairwise similarity b / w, which puts members of
/// different categories at b on average.
inline SynthResult simulate_corpus(const SynthSpec& spec) {
    spec.validate();
    detail::SynthRng rng(spec.seed);
    const double w = spec.within_sim;
    const double a_mid = std::sqrt(w);
    const double a_spread = std::min({spec.typicality_spread, 1.0 - a_mid, a_mid});
    const double proto_sim = spec.n_categories > 1 ? spec.between_sim / w : 0.0;

    std::vector<std::vector<double>> basis;
    auto common = detail::random_direction(rng, spec.dim, basis);
    basis.push_back(common);
    std::vector<std::vector<double>> protos;
    for (int c = 0; c < spec.n_categories; ++c) {
        auto e = detail::random_direction(rng, spec.dim, basis);
        basis.push_back(e);
        std::vector<double> p(static_cast<std::size_t>(spec.dim));
        for (std::size_t i = 0; i < p.size(); ++i)
            p[i] = std::sqrt(proto_sim) * common[i] + std::sqrt(1.0 - proto_sim) * e[i];
        protos.push_back(std::move(p));
    }

    SynthResult out;
    out.store = EmbeddingStore("synthetic", static_cast<std::size_t>(spec.dim));
    const std::size_t transitions = static_cast<std::size_t>(spec.seq_length - 1);
    const auto temps = [] {
        std::vector<double> t;
        for (int i = 0; i <= 10; ++i) t.push_back(i / 10.0);
        return t;
    }();

    const int total = spec.n_producers + spec.n_llm_producers;
    for (int p = 0; p < total; ++p) {
        const bool llm = p >= spec.n_producers;
        const int group = llm ? -1 : p % static_cast<int>(spec.jump_rates.size());
        const double rate = llm ? spec.llm_jump_rate : spec.jump_rates[static_cast<std::size_t>(group)];
        const std::string pid = llm ? "llm" + std::to_string(p - spec.n_producers + 1) : "p" + std::to_string(p + 1);
        out.planted[pid] = group;

        for (Task task : spec.tasks) {
            auto jumps = detail::plant_jumps(rng, transitions, rate, spec.planting);
            ResponseSequence seq;
            seq.producer_id = pid;
            seq.source = llm ? Source::llm : Source::human;
            seq.task = task;
            int cat = static_cast<int>(rng.below(static_cast<std::size_t>(spec.n_categories)));
            for (int pos = 1; pos <= spec.seq_length; ++pos) {
                bool jumped = pos > 1 && jumps[static_cast<std::size_t>(pos - 2)];
                if (jumped && spec.n_categories > 1) {
                    int next = static_cast<int>(rng.below(static_cast<std::size_t>(spec.n_categories - 1)));
                    cat = next >= cat ? next + 1 : next;
                }
                ResponseRecord r;
                r.producer_id = pid;
                r.source = seq.source;
                if (llm) {
                    r.model = spec.llm_model;
                    r.temperature = temps[static_cast<std::size_t>(p - spec.n_producers) % temps.size()];
                }
                r.task = task;
                r.position = pos;
                // Alternating lead letter keeps texts out of alphabetical order.
                r.raw_text = std::string(pos % 2 ? "z" : "a") + std::string(task_object(task)) + "cat" + std::to_string(cat) +
                             "prod" + pid + "pos" + std::to_string(pos);
                r.clean_text = r.raw_text;
                r.rt_ms = static_cast<long long>(std::llround(rng.rt(jumped ? spec.rt_jump_ms : spec.rt_stay_ms)));

                const double a = a_mid + a_spread * (2.0 * rng.uniform() - 1.0);
                auto noise = detail::random_direction(rng, spec.dim, basis);
                std::vector<double> v(static_cast<std::size_t>(spec.dim));
                const auto& proto = protos[static_cast<std::size_t>(cat)];
                for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * proto[i] + std::sqrt(1.0 - a * a) * noise[i];
                out.store.add(r.clean_text, v, std::numeric_limits<double>::infinity());
                out.categories[r.clean_text] = cat;
                seq.responses.push_back(std::move(r));
            }
            if (spec.n_categories == 1) std::fill(jumps.begin(), jumps.end(), 0);
            out.gold.push_back({pid, task, std::move(jumps)});
            out.corpus.push_back(std::move(seq));
        }
    }
    return out;
}

inline void write_synth(const SynthResult& r, const SynthSpec& spec, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_jsonl(r.corpus, dir / "corpus.jsonl");
    write_embeddings(r.store, dir / "embeddings.jsonl");
    {
        std::ofstream g(dir / "gold.jsonl", std::ios::binary);
        if (!g) throw Error("cannot write " + (dir / "gold.jsonl").string());
        write_gold(r.gold, g);
    }
    nlohmann::ordered_json planted;
    planted["seed"] = spec.seed;
    planted["jump_rates"] = spec.jump_rates;
    planted["groups"] = nlohmann::ordered_json::object();
    for (const auto& seq : r.corpus) planted["groups"][seq.producer_id] = r.planted.at(seq.producer_id);
    std::ofstream p(dir / "planted.json", std::ios::binary);
    if (!p) throw Error("cannot write " + (dir / "planted.json").string());
    p << planted.dump(2) << '\n';
}

}  // namespace fluxjump
