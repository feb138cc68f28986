#pragma once

// Unit-norm sentence embeddings keyed by unique response text.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "fluxjump/error.hpp"
#include "fluxjump/log.hpp"
#include "fluxjump/transport.hpp"

namespace fluxjump {

using EmbeddingVector = std::span<const double>;

inline constexpr double kNormTolerance = 1e-3;

inline double dot(EmbeddingVector u, EmbeddingVector v) {
    if (u.size() != v.size())
        throw DimensionMismatch("dimension mismatch: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

inline double norm(EmbeddingVector u) { return std::sqrt(dot(u, u)); }

/// Semantic similarity of two unit vectors: their dot product.
inline double similarity(EmbeddingVector u, EmbeddingVector v) { return dot(u, v); }

/// Flat, immutable-after-build store of unit vectors.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    EmbeddingStore(std::string model, std::size_t dim) : model_(std::move(model)), dim_(dim) {}

    const std::string& model() const { return model_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return texts_.size(); }
    const std::vector<std::string>& texts() const { return texts_; }

    bool contains(const std::string& text) const { return index_.count(text) > 0; }

    EmbeddingVector at(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    EmbeddingVector at(const std::string& text) const {
        auto it = index_.find(text);
        if (it == index_.end()) throw MissingEntry("no embedding for \"" + text + "\"");
        return at(it->second);
    }

    std::size_t index_of(const std::string& text) const {
        auto it = index_.find(text);
        if (it == index_.end()) throw MissingEntry("no embedding for \"" + text + "\"");
        return it->second;
    }

    /// Adds a vector, rescaling it to unit length. Rejects vectors whose norm is
    /// off by more than `tolerance` (pass infinity to normalise anything non-zero).
    void add(const std::string& text, std::span<const double> values, double tolerance = kNormTolerance) {
        if (values.size() != dim_)
            throw DimensionMismatch("vector for \"" + text + "\" has " + std::to_string(values.size()) +
                                    " entries, expected " + std::to_string(dim_));
        double n = 0.0;
        for (double x : values) n += x * x;
        n = std::sqrt(n);
        if (!(n > 0.0) || std::abs(n - 1.0) > tolerance)
            throw Error("vector for \"" + text + "\" has norm " + std::to_string(n) + " (corrupt export?)");
        if (!index_.try_emplace(text, texts_.size()).second) throw Error("duplicate embedding text \"" + text + "\"");
        texts_.push_back(text);
        // Already-unit vectors are stored verbatim so files round-trip bit for bit.
        const double scale = std::abs(n - 1.0) <= 1e-12 ? 1.0 : n;
        for (double x : values) data_.push_back(x / scale);
    }

    /// Subset in the given order.
    EmbeddingStore select(const std::vector<std::string>& texts) const {
        EmbeddingStore out(model_, dim_);
        for (const auto& t : texts) out.add(t, at(t));
        return out;
    }

private:
    std::string model_;
    std::size_t dim_ = 0;
    std::vector<std::string> texts_;
    std::vector<double> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Line 1: {"model": str, "dim": int}; then one {"text": str, "vector": [...]} per line.
inline EmbeddingStore read_embeddings(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    EmbeddingStore store;
    bool have_header = false;
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            if (!have_header) {
                store = EmbeddingStore(j.at("model").get<std::string>(), j.at("dim").get<std::size_t>());
                if (store.dim() == 0) throw ParseError(line_no, "dim must be positive");
                have_header = true;
                continue;
            }
            values = j.at("vector").get<std::vector<double>>();
            store.add(j.at("text").get<std::string>(), values);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        } catch (const DimensionMismatch& e) {
            throw DimensionMismatch("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(line_no, e.what());
        }
    }
    if (!have_header) throw ParseError(0, "embedding file has no header line");
    return store;
}

inline EmbeddingStore load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open embeddings file " + path.string());
    return read_embeddings(in);
}

inline void write_embeddings(const EmbeddingStore& store, std::ostream& out) {
    out << nlohmann::json{{"model", store.model()}, {"dim", store.dim()}}.dump() << '\n';
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto v = store.at(i);
        nlohmann::json row;
        row["text"] = store.texts()[i];
        row["vector"] = std::vector<double>(v.begin(), v.end());
        out << row.dump() << '\n';
    }
}

inline void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    write_embeddings(store, out);
}

// ---------------------------------------------------------------------------
// Remote provider

struct ProviderConfig {
    std::string endpoint;
    std::string api_key_env;
    std::size_t batch_size = 64;
    std::size_t max_in_flight = 4;
    RetryPolicy retry;
};

inline ProviderConfig provider_config_from_json(const nlohmann::json& j) {
    ProviderConfig c;
    c.endpoint = j.at("endpoint").get<std::string>();
    c.api_key_env = j.value("api_key_env", std::string{});
    c.batch_size = j.value("batch_size", std::size_t{64});
    c.max_in_flight = j.value("max_in_flight", std::size_t{4});
    if (c.batch_size == 0) throw ConfigError("batch_size must be >= 1");
    return c;
}

struct FetchStats {
    std::size_t batches = 0;
    std::size_t attempts = 0;
};

/// Encodes `texts` through the provider's `{"texts": [...]}` ->
/// `{"model", "dim", "vectors"}` endpoint. Output order matches input order.
inline EmbeddingStore fetch_embeddings(const ProviderConfig& provider, const std::vector<std::string>& texts,
                                       const Transport& transport, FetchStats* stats = nullptr) {
    const std::string key = api_key_from_env(provider.api_key_env);
    const std::size_t n_batches = (texts.size() + provider.batch_size - 1) / provider.batch_size;

    struct BatchResult {
        std::string model;
        std::size_t dim = 0;
        std::vector<std::vector<double>> vectors;
        int attempts = 0;
    };
    std::vector<BatchResult> results(n_batches);
    std::vector<std::exception_ptr> errors(n_batches);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t b; (b = next.fetch_add(1)) < n_batches;) {
            try {
                auto first = texts.begin() + static_cast<std::ptrdiff_t>(b * provider.batch_size);
                auto last = texts.begin() +
                            static_cast<std::ptrdiff_t>(std::min(texts.size(), (b + 1) * provider.batch_size));
                std::vector<std::string> batch(first, last);
                HttpRequest req{provider.endpoint, nlohmann::json{{"texts", batch}}.dump(), {}};
                if (!key.empty()) req.headers.emplace_back("Authorization", "Bearer " + key);
                auto resp = post_with_retry(transport, req, provider.retry, provider.api_key_env, &results[b].attempts);
                auto j = nlohmann::json::parse(resp.body);
                results[b].model = j.value("model", std::string{});
                results[b].dim = j.at("dim").get<std::size_t>();
                results[b].vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
                if (results[b].vectors.size() != batch.size())
                    throw Error("embedding provider returned " + std::to_string(results[b].vectors.size()) +
                                " vectors for " + std::to_string(batch.size()) + " texts");
            } catch (const nlohmann::json::exception& e) {
                errors[b] = std::make_exception_ptr(Error(std::string("bad provider response: ") + e.what()));
            } catch (...) {
                errors[b] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        std::size_t n_threads = std::max<std::size_t>(1, std::min(provider.max_in_flight, n_batches));
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    EmbeddingStore store(results.empty() ? std::string{} : results.front().model,
                         results.empty() ? 0 : results.front().dim);
    FetchStats s;
    s.batches = n_batches;
    std::size_t t = 0;
    for (auto& r : results) {
        s.attempts += static_cast<std::size_t>(r.attempts);
        if (r.dim != store.dim()) throw DimensionMismatch("provider changed dim between batches");
        for (auto& v : r.vectors) store.add(texts[t++], v, std::numeric_limits<double>::infinity());
    }
    Log::info("fetched " + std::to_string(store.size()) + " embeddings in " + std::to_string(s.batches) +
              " batches, " + std::to_string(s.attempts) + " attempts");
    if (stats) *stats = s;
    return store;
}

}  // namespace fluxjump
