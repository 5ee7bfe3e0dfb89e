#include "pkt/config.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "pkt/error.hpp"
#include "pkt/serialization.hpp"

namespace pkt::config {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "seed",
        "ingest.delimiter", "ingest.tag_separator", "ingest.max_malformed_fraction", "ingest.min_length",
        "ingest.max_length", "ingest.split_ratio", "ingest.smoothing",
        "embed.endpoint", "embed.model", "embed.dimension", "embed.batch_size", "embed.max_in_flight",
        "embed.cache_dir",
        "llm.endpoint", "llm.model", "llm.temperature",
        "http.attempts", "http.timeout_ms",
        "schema.reduced_dim", "schema.eps", "schema.min_pts", "schema.cold_start_length",
        "bank.k_bank", "bank.workers", "bank.min_success_fraction",
        "retrieval.alpha", "retrieval.n", "retrieval.tau", "retrieval.m_per_side", "retrieval.length_ratio_low",
        "retrieval.length_ratio_high",
        "bm25.k1", "bm25.b",
        "spike.streak_len", "spike.delta", "spike.delta_min", "spike.delta_max", "spike.delta_fallback",
        "eval.per_step", "eval.workers",
        "predictor.kind", "predictor.memory_weight",
    };
    return keys;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// Drops a trailing '#' comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\' && quoted) {
            ++i;
        } else if (line[i] == '"') {
            quoted = !quoted;
        } else if (line[i] == '#' && !quoted) {
            return line.substr(0, i);
        }
    }
    return line;
}

std::string unquote(const std::string& value, std::size_t line_no) {
    if (value.size() < 2 || value.front() != '"') return value;
    if (value.back() != '"') throw usage_error("InvalidConfig", fmt::format("line {}: unterminated string", line_no));
    std::string out;
    for (std::size_t i = 1; i + 1 < value.size(); ++i) {
        if (value[i] == '\\' && i + 2 < value.size()) {
            const char c = value[++i];
            out.push_back(c == 'n' ? '\n' : c == 't' ? '\t' : c);
        } else {
            out.push_back(value[i]);
        }
    }
    return out;
}

}  // namespace

Config Config::parse(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']' || body.size() < 3) {
                throw usage_error("InvalidConfig", fmt::format("line {}: malformed section header", line_no));
            }
            section = trim(std::string_view(body).substr(1, body.size() - 2));
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw usage_error("InvalidConfig", fmt::format("line {}: expected key = value", line_no));
        }
        const auto key = trim(std::string_view(body).substr(0, eq));
        if (key.empty()) throw usage_error("InvalidConfig", fmt::format("line {}: empty key", line_no));
        cfg.values_[section.empty() ? key : section + "." + key] =
            unquote(trim(std::string_view(body).substr(eq + 1)), line_no);
    }
    return cfg;
}

Config Config::load(const std::string& path) { return parse(io::read_text_file(path)); }

void Config::check_known_keys() const {
    for (const auto& [key, value] : values_) {
        if (!known_keys().count(key)) throw usage_error("UnknownConfigKey", fmt::format("unknown config key '{}'", key));
    }
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0.0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw usage_error("InvalidConfig", fmt::format("{} = '{}' is not a number", key, s));
    }
    return v;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::int64_t v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw usage_error("InvalidConfig", fmt::format("{} = '{}' is not an integer", key, s));
    }
    return v;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
    const auto v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw usage_error("InvalidConfig", fmt::format("{} must be non-negative", key));
    return static_cast<std::size_t>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw usage_error("InvalidConfig", fmt::format("{} = '{}' is not true/false", key, it->second));
}

void Settings::validate() const {
    if (ingest.limits.min_length < 2 || ingest.limits.max_length < ingest.limits.min_length) {
        throw usage_error("InvalidConfig", "ingest lengths must satisfy 2 <= min_length <= max_length");
    }
    if (!(ingest.split_ratio > 0.0 && ingest.split_ratio < 1.0)) {
        throw usage_error("InvalidConfig", "ingest.split_ratio must be in (0,1)");
    }
    if (!(ingest.smoothing >= 0.0)) throw usage_error("InvalidConfig", "ingest.smoothing must be non-negative");
    if (embed_dimension == 0) throw usage_error("InvalidConfig", "embed.dimension must be positive");
    if (reduced_dim == 0) throw usage_error("InvalidConfig", "schema.reduced_dim must be positive");
    if (!(cluster.eps > 0.0) || cluster.min_pts == 0) {
        throw usage_error("InvalidConfig", "schema.eps and schema.min_pts must be positive");
    }
    if (bank.k_bank == 0) throw usage_error("InvalidConfig", "bank.k_bank must be positive");
    if (!(bank.min_success_fraction >= 0.0 && bank.min_success_fraction <= 1.0)) {
        throw usage_error("InvalidConfig", "bank.min_success_fraction must be in [0,1]");
    }
    if (!(memory_weight >= 0.0 && memory_weight <= 1.0)) {
        throw usage_error("InvalidConfig", "predictor.memory_weight must be in [0,1]");
    }
    static const std::set<std::string> predictors = {"auto", "heuristic", "memory", "llm"};
    if (!predictors.count(predictor)) {
        throw usage_error("InvalidConfig", fmt::format("predictor.kind '{}' is not one of auto|heuristic|memory|llm",
                                                       predictor));
    }
    retrieval.validate();
    spike.validate();
}

nlohmann::json Settings::snapshot() const {
    nlohmann::json spike_json{{"streak_len", spike.streak_len},
                              {"delta", spike.delta ? nlohmann::json(*spike.delta) : nlohmann::json(nullptr)},
                              {"delta_min", spike.delta_min},
                              {"delta_max", spike.delta_max},
                              {"delta_fallback", spike.delta_fallback}};
    return {
        {"seed", seed},
        {"ingest",
         {{"min_length", ingest.limits.min_length},
          {"max_length", ingest.limits.max_length},
          {"split_ratio", ingest.split_ratio},
          {"smoothing", ingest.smoothing}}},
        {"embed", {{"model", embed_model}, {"dimension", embed_dimension}}},
        {"schema",
         {{"reduced_dim", reduced_dim},
          {"eps", cluster.eps},
          {"min_pts", cluster.min_pts},
          {"cold_start_length", cold_start_length}}},
        {"bank", {{"k_bank", bank.k_bank}, {"min_success_fraction", bank.min_success_fraction}}},
        {"retrieval",
         {{"alpha", retrieval.alpha},
          {"n", retrieval.n},
          {"tau", retrieval.tau},
          {"m_per_side", retrieval.m_per_side},
          {"length_ratio_low", retrieval.length_ratio_low},
          {"length_ratio_high", retrieval.length_ratio_high}}},
        {"bm25", {{"k1", retrieval.bm25.k1}, {"b", retrieval.bm25.b}}},
        {"spike", spike_json},
        {"eval", {{"per_step", per_step}, {"threshold", kDecisionThreshold}}},
        {"predictor", {{"kind", predictor}, {"memory_weight", memory_weight}}},
    };
}

Settings load_settings(const Config& config) {
    config.check_known_keys();
    Settings s;
    s.seed = static_cast<std::uint64_t>(config.get_int("seed", static_cast<std::int64_t>(s.seed)));

    auto single_char = [&](const std::string& key, char fallback) {
        const auto v = config.get_string(key, std::string(1, fallback));
        if (v.size() != 1) throw usage_error("InvalidConfig", fmt::format("{} must be a single character", key));
        return v.front();
    };
    s.ingest.format.delimiter = single_char("ingest.delimiter", s.ingest.format.delimiter);
    s.ingest.format.tag_separator = single_char("ingest.tag_separator", s.ingest.format.tag_separator);
    s.ingest.format.max_malformed_fraction =
        config.get_double("ingest.max_malformed_fraction", s.ingest.format.max_malformed_fraction);
    s.ingest.limits.min_length = config.get_size("ingest.min_length", s.ingest.limits.min_length);
    s.ingest.limits.max_length = config.get_size("ingest.max_length", s.ingest.limits.max_length);
    s.ingest.split_ratio = config.get_double("ingest.split_ratio", s.ingest.split_ratio);
    s.ingest.smoothing = config.get_double("ingest.smoothing", s.ingest.smoothing);

    s.embed_endpoint = config.get_string("embed.endpoint", s.embed_endpoint);
    s.embed_model = config.get_string("embed.model", s.embed_model);
    s.embed_dimension = config.get_size("embed.dimension", s.embed_dimension);
    s.embed_batch_size = config.get_size("embed.batch_size", s.embed_batch_size);
    s.embed_max_in_flight = config.get_size("embed.max_in_flight", s.embed_max_in_flight);
    s.embed_cache_dir = config.get_string("embed.cache_dir", s.embed_cache_dir);

    s.llm_endpoint = config.get_string("llm.endpoint", s.llm_endpoint);
    s.llm_model = config.get_string("llm.model", s.llm_model);
    s.llm_temperature = config.get_double("llm.temperature", s.llm_temperature);
    s.http_attempts = config.get_size("http.attempts", s.http_attempts);
    s.http_timeout_ms = config.get_size("http.timeout_ms", s.http_timeout_ms);

    s.reduced_dim = config.get_size("schema.reduced_dim", s.reduced_dim);
    s.cluster.eps = config.get_double("schema.eps", s.cluster.eps);
    s.cluster.min_pts = config.get_size("schema.min_pts", s.cluster.min_pts);
    s.cold_start_length = config.get_size("schema.cold_start_length", s.cold_start_length);

    s.bank.k_bank = config.get_size("bank.k_bank", s.bank.k_bank);
    s.bank.workers = config.get_size("bank.workers", s.bank.workers);
    s.bank.min_success_fraction = config.get_double("bank.min_success_fraction", s.bank.min_success_fraction);

    s.retrieval.alpha = config.get_double("retrieval.alpha", s.retrieval.alpha);
    s.retrieval.n = config.get_size("retrieval.n", s.retrieval.n);
    s.retrieval.tau = config.get_double("retrieval.tau", s.retrieval.tau);
    s.retrieval.m_per_side = config.get_size("retrieval.m_per_side", s.retrieval.m_per_side);
    s.retrieval.length_ratio_low = config.get_double("retrieval.length_ratio_low", s.retrieval.length_ratio_low);
    s.retrieval.length_ratio_high = config.get_double("retrieval.length_ratio_high", s.retrieval.length_ratio_high);
    s.retrieval.bm25.k1 = config.get_double("bm25.k1", s.retrieval.bm25.k1);
    s.retrieval.bm25.b = config.get_double("bm25.b", s.retrieval.bm25.b);

    s.spike.streak_len = config.get_size("spike.streak_len", s.spike.streak_len);
    if (config.has("spike.delta")) s.spike.delta = config.get_double("spike.delta", 0.5);
    s.spike.delta_min = config.get_double("spike.delta_min", s.spike.delta_min);
    s.spike.delta_max = config.get_double("spike.delta_max", s.spike.delta_max);
    s.spike.delta_fallback = config.get_double("spike.delta_fallback", s.spike.delta_fallback);

    s.per_step = config.get_bool("eval.per_step", s.per_step);
    s.eval_workers = config.get_size("eval.workers", s.eval_workers);
    s.predictor = config.get_string("predictor.kind", s.predictor);
    s.memory_weight = config.get_double("predictor.memory_weight", s.memory_weight);

    s.validate();
    return s;
}

}  // namespace pkt::config
