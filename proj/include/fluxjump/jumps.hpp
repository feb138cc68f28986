#pragma once

// Per-transition jump coding: category change, similarity drop, their AND,
// and calibration of the similarity threshold against hand-coded labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluxjump/categories.hpp"
#include "fluxjump/corpus.hpp"
#include "fluxjump/embedding.hpp"
#include "fluxjump/error.hpp"

namespace fluxjump {

enum class JumpKind { cat, ss, combined };

/// values[i] codes the transition from response i+1 to response i+2 (1-based positions).
struct JumpVector {
    std::string producer_id;
    Task task = Task::aut_brick;
    std::vector<std::uint8_t> values;
    JumpKind kind = JumpKind::combined;

    std::size_t count() const { return static_cast<std::size_t>(std::count(values.begin(), values.end(), 1)); }
    bool operator==(const JumpVector&) const = default;
};

struct GoldJumps {
    std::string producer_id;
    Task task = Task::aut_brick;
    std::vector<std::uint8_t> values;
};

/// Which side a similarity exactly equal to theta falls on.
enum class ThetaTie { no_jump, jump };

inline JumpVector jump_cat(const ResponseSequence& seq, const CategoryMap& map) {
    JumpVector jv{seq.producer_id, seq.task, {}, JumpKind::cat};
    if (seq.responses.empty()) return jv;
    jv.values.reserve(seq.responses.size() - 1);
    int prev = map.category(seq.responses.front().clean_text);
    for (std::size_t i = 1; i < seq.responses.size(); ++i) {
        int cur = map.category(seq.responses[i].clean_text);
        jv.values.push_back(cur != prev ? 1 : 0);
        prev = cur;
    }
    return jv;
}

/// Similarities between successive responses.
inline std::vector<double> successive_similarities(const ResponseSequence& seq, const EmbeddingStore& store) {
    std::vector<double> sims;
    for (std::size_t i = 1; i < seq.responses.size(); ++i)
        sims.push_back(similarity(store.at(seq.responses[i - 1].clean_text), store.at(seq.responses[i].clean_text)));
    return sims;
}

inline std::uint8_t ss_code(double sim, double theta, ThetaTie tie) {
    if (sim > theta) return 0;
    if (sim < theta) return 1;
    return tie == ThetaTie::no_jump ? 0 : 1;
}

inline JumpVector jump_ss_from_sims(const ResponseSequence& seq, const std::vector<double>& sims, double theta,
                                    ThetaTie tie = ThetaTie::no_jump) {
    JumpVector jv{seq.producer_id, seq.task, {}, JumpKind::ss};
    jv.values.reserve(sims.size());
    for (double s : sims) jv.values.push_back(ss_code(s, theta, tie));
    return jv;
}

/// 0 when successive similarity >= theta (ties per `tie`), else 1.
inline JumpVector jump_ss(const ResponseSequence& seq, const EmbeddingStore& store, double theta,
                          ThetaTie tie = ThetaTie::no_jump) {
    return jump_ss_from_sims(seq, successive_similarities(seq, store), theta, tie);
}

inline JumpVector combine_jumps(const JumpVector& jc, const JumpVector& jss) {
    if (jc.values.size() != jss.values.size())
        throw DimensionMismatch("combine_jumps: length " + std::to_string(jc.values.size()) + " vs " +
                                std::to_string(jss.values.size()));
    if (jc.producer_id != jss.producer_id || jc.task != jss.task)
        throw Error("combine_jumps: vectors belong to different sequences");
    JumpVector out{jc.producer_id, jc.task, {}, JumpKind::combined};
    out.values.resize(jc.values.size());
    for (std::size_t i = 0; i < jc.values.size(); ++i) out.values[i] = jc.values[i] & jss.values[i];
    return out;
}

struct ConfusionCounts {
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fn += o.fn;
        tn += o.tn;
        fp += o.fp;
        return *this;
    }
    std::optional<double> tpr() const {
        return tp + fn ? std::optional<double>(double(tp) / double(tp + fn)) : std::nullopt;
    }
    std::optional<double> tnr() const {
        return tn + fp ? std::optional<double>(double(tn) / double(tn + fp)) : std::nullopt;
    }
};

inline ConfusionCounts confusion_counts(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gold) {
    if (pred.size() != gold.size())
        throw DimensionMismatch("prediction/gold length mismatch: " + std::to_string(pred.size()) + " vs " +
                                std::to_string(gold.size()));
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (gold[i])
            (pred[i] ? c.tp : c.fn)++;
        else
            (pred[i] ? c.fp : c.tn)++;
    }
    return c;
}

/// Rates are nullopt ("rate undefined") when gold has no positives / no negatives.
struct ConfusionRates {
    std::optional<double> tpr;
    std::optional<double> tnr;
};

inline ConfusionRates confusion_rates(const JumpVector& pred, const GoldJumps& gold) {
    auto c = confusion_counts(pred.values, gold.values);
    return {c.tpr(), c.tnr()};
}

// ---------------------------------------------------------------------------
// Calibration

struct ThetaCalibration {
    double theta = 0.0;
    double tpr = 0.0;
    double tnr = 0.0;
    double feasible_lo = 0.0;
    double feasible_hi = 0.0;
};

struct CalibrationOptions {
    double grid_step = 0.005;
    double min_rate = 0.8;
    ThetaTie tie = ThetaTie::no_jump;
};

/// One gold-labelled transition pool entry.
struct CalibrationSample {
    std::uint8_t cat = 0;
    std::uint8_t gold = 0;
    double sim = 0.0;
};

/// Grid-scans theta over [min sim, max sim] (plus one step above the maximum so
/// the "every transition is a similarity jump" setting is reachable), pooling
/// all transitions. Returns the midpoint of the widest contiguous run of grid
/// points where both rates reach `min_rate`.
inline ThetaCalibration calibrate_theta(const std::vector<CalibrationSample>& pool,
                                        const CalibrationOptions& opt = {}) {
    if (pool.empty()) throw Error("calibrate_theta: no gold-labelled transitions");
    auto [mn_it, mx_it] =
        std::minmax_element(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.sim < b.sim; });
    const double lo = mn_it->sim, hi = mx_it->sim;
    std::vector<double> grid;
    const auto steps = static_cast<std::size_t>(std::floor((hi - lo) / opt.grid_step + 1e-9));
    for (std::size_t g = 0; g <= steps; ++g) grid.push_back(lo + static_cast<double>(g) * opt.grid_step);
    if (grid.back() < hi) grid.push_back(hi);
    grid.push_back(std::min(1.0, hi + opt.grid_step));
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    auto evaluate = [&](double theta) {
        ConfusionCounts c;
        for (const auto& s : pool) {
            std::uint8_t pred = s.cat & ss_code(s.sim, theta, opt.tie);
            if (s.gold)
                (pred ? c.tp : c.fn)++;
            else
                (pred ? c.fp : c.tn)++;
        }
        return c;
    };

    std::vector<char> feasible(grid.size(), 0);
    double best_tpr = 0.0, best_tnr = 0.0, best_min = -1.0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        auto c = evaluate(grid[g]);
        if (!c.tpr() || !c.tnr())
            throw Error("calibrate_theta: gold labels need at least one jump and one non-jump");
        double tpr = *c.tpr(), tnr = *c.tnr();
        feasible[g] = tpr >= opt.min_rate && tnr >= opt.min_rate;
        if (std::min(tpr, tnr) > best_min) {
            best_min = std::min(tpr, tnr);
            best_tpr = tpr;
            best_tnr = tnr;
        }
    }

    std::size_t best_first = grid.size(), best_last = 0;
    double best_width = -1.0;
    for (std::size_t g = 0; g < grid.size();) {
        if (!feasible[g]) {
            ++g;
            continue;
        }
        std::size_t h = g;
        while (h + 1 < grid.size() && feasible[h + 1]) ++h;
        double width = grid[h] - grid[g];
        if (width > best_width) {
            best_width = width;
            best_first = g;
            best_last = h;
        }
        g = h + 1;
    }
    if (best_first == grid.size())
        throw CalibrationError("no theta reaches TPR and TNR >= " + std::to_string(opt.min_rate) +
                                   "; best achievable TPR " + std::to_string(best_tpr) + ", TNR " +
                                   std::to_string(best_tnr),
                               best_tpr, best_tnr);

    ThetaCalibration cal;
    cal.feasible_lo = grid[best_first];
    cal.feasible_hi = grid[best_last];
    cal.theta = 0.5 * (cal.feasible_lo + cal.feasible_hi);
    auto c = evaluate(cal.theta);
    cal.tpr = *c.tpr();
    cal.tnr = *c.tnr();
    return cal;
}

/// Builds the pooled transition set from sequences that have gold labels.
inline std::vector<CalibrationSample> calibration_pool(const Corpus& corpus, const std::vector<GoldJumps>& gold,
                                                       const std::map<Task, CategoryMap>& maps,
                                                       const EmbeddingStore& store) {
    std::map<std::pair<std::string, Task>, const ResponseSequence*> by_key;
    for (const auto& seq : corpus) by_key[{seq.producer_id, seq.task}] = &seq;
    std::vector<CalibrationSample> pool;
    for (const auto& g : gold) {
        auto it = by_key.find({g.producer_id, g.task});
        if (it == by_key.end())
            throw MissingEntry("gold labels for unknown sequence " + g.producer_id + "/" + std::string(to_string(g.task)));
        const auto& seq = *it->second;
        if (seq.size() < 1 || g.values.size() != seq.size() - 1)
            throw DimensionMismatch("gold labels for " + g.producer_id + " have " + std::to_string(g.values.size()) +
                                    " entries, sequence has " + std::to_string(seq.size() - 1) + " transitions");
        auto mit = maps.find(g.task);
        if (mit == maps.end()) throw MissingEntry("no categories for task " + std::string(to_string(g.task)));
        auto jc = jump_cat(seq, mit->second);
        auto sims = successive_similarities(seq, store);
        for (std::size_t i = 0; i < sims.size(); ++i) pool.push_back({jc.values[i], g.values[i], sims[i]});
    }
    return pool;
}

inline ThetaCalibration calibrate_theta(const Corpus& corpus, const std::vector<GoldJumps>& gold,
                                        const std::map<Task, CategoryMap>& maps, const EmbeddingStore& store,
                                        const CalibrationOptions& opt = {}) {
    if (gold.empty()) throw Error("calibrate_theta: gold set is empty");
    return calibrate_theta(calibration_pool(corpus, gold, maps, store), opt);
}

// ---------------------------------------------------------------------------
// Files

/// JSONL: {"producer_id": str, "task": str, "values": [0|1, ...]} per line.
inline std::vector<GoldJumps> load_gold(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open gold file " + path.string());
    std::vector<GoldJumps> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            GoldJumps g;
            g.producer_id = j.at("producer_id").get<std::string>();
            g.task = task_from_string(j.at("task").get<std::string>());
            for (const auto& v : j.at("values")) {
                int x = v.get<int>();
                if (x != 0 && x != 1) throw ParseError(line_no, "gold values must be 0 or 1");
                g.values.push_back(static_cast<std::uint8_t>(x));
            }
            out.push_back(std::move(g));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return out;
}

inline void write_gold(const std::vector<GoldJumps>& gold, std::ostream& out) {
    for (const auto& g : gold) {
        nlohmann::ordered_json j;
        j["producer_id"] = g.producer_id;
        j["task"] = to_string(g.task);
        j["values"] = g.values;
        out << j.dump() << '\n';
    }
}

/// Per-sequence jump codes as written to jumps.csv.
struct SequenceJumps {
    std::string producer_id;
    Task task = Task::aut_brick;
    std::vector<std::uint8_t> cat, ss, combined;
};

/// Columns: producer_id, task, position, jump_cat, jump_ss, jump. `position`
/// is the 1-based position of the later response of the transition.
inline void write_jumps_csv(const std::vector<SequenceJumps>& jumps, std::ostream& out) {
    out << "producer_id,task,position,jump_cat,jump_ss,jump\n";
    for (const auto& s : jumps)
        for (std::size_t i = 0; i < s.combined.size(); ++i)
            out << csv_escape(s.producer_id) << ',' << to_string(s.task) << ',' << i + 2 << ',' << int(s.cat[i]) << ','
                << int(s.ss[i]) << ',' << int(s.combined[i]) << '\n';
}

inline std::vector<SequenceJumps> read_jumps_csv(std::istream& in) {
    auto rows = read_csv(in);
    std::vector<SequenceJumps> out;
    std::map<std::pair<std::string, Task>, std::size_t> slot;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& [line, f] = rows[r];
        if (f.size() != 6) throw ParseError(line, "jumps.csv rows need 6 fields");
        try {
            Task task = task_from_string(f[1]);
            auto [it, fresh] = slot.try_emplace({f[0], task}, out.size());
            if (fresh) out.push_back({f[0], task, {}, {}, {}});
            auto& s = out[it->second];
            if (std::stoi(f[2]) != static_cast<int>(s.combined.size()) + 2)
                throw ParseError(line, "positions for " + f[0] + " are not consecutive");
            auto bit = [&](const std::string& v) {
                if (v != "0" && v != "1") throw ParseError(line, "jump codes must be 0 or 1");
                return static_cast<std::uint8_t>(v == "1");
            };
            s.cat.push_back(bit(f[3]));
            s.ss.push_back(bit(f[4]));
            s.combined.push_back(bit(f[5]));
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError(line, e.what());
        }
    }
    return out;
}

}  // namespace fluxjump
