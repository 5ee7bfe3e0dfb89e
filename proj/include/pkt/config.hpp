#pragma once
// TOML-style key/value configuration and the typed settings derived from it.
//
//   # comment
//   seed = 42
//   [retrieval]
//   alpha = 0.7        -> key "retrieval.alpha"
//   [embed]
//   endpoint = "https://example.org/v1/embeddings"

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pkt/ingest.hpp"
#include "pkt/memory_bank.hpp"
#include "pkt/retrieval.hpp"
#include "pkt/types.hpp"

namespace pkt::config {

class Config {
public:
    Config() = default;
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    // Rejects keys that are not in the known set.
    void check_known_keys() const;

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

struct Settings {
    std::uint64_t seed = 42;

    ingest::IngestConfig ingest;

    std::string embed_endpoint;
    std::string embed_model = "text-embedding";
    std::size_t embed_dimension = 4096;
    std::size_t embed_batch_size = 32;
    std::size_t embed_max_in_flight = 4;
    std::string embed_cache_dir;  // empty: <workdir>/cache/embeddings for remote providers

    std::string llm_endpoint;
    std::string llm_model = "chat";
    double llm_temperature = 0.0;
    std::size_t http_attempts = 3;
    std::size_t http_timeout_ms = 120000;

    std::size_t reduced_dim = 32;
    ClusterParams cluster;
    std::size_t cold_start_length = 5;

    bank::BuildOptions bank;
    retrieval::RetrievalConfig retrieval;
    SpikeConfig spike;

    bool per_step = false;
    std::size_t eval_workers = 4;

    std::string predictor = "auto";  // auto | heuristic | memory | llm
    double memory_weight = 0.4;

    void validate() const;
    // Every effective value, for reports.
    nlohmann::json snapshot() const;
};

Settings load_settings(const Config& config);

}  // namespace pkt::config
