#include "pkt/embedding.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <openssl/sha.h>

#include "pkt/error.hpp"
#include "pkt/parallel.hpp"
#include "pkt/text.hpp"

namespace pkt::embed {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

HashingProvider::HashingProvider(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ == 0) throw usage_error("InvalidConfig", "embedding dimension must be positive");
}

std::vector<EmbeddingVector> HashingProvider::embed(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    std::vector<double> acc(dimension_);
    for (const auto& text : texts) {
        std::fill(acc.begin(), acc.end(), 0.0);
        std::istringstream in(text);
        std::string token;
        bool any = false;
        while (in >> token) {
            const auto h = fnv1a(token);
            const double sign = (splitmix64(h) >> 63) ? -1.0 : 1.0;
            acc[h % dimension_] += sign;
            any = true;
        }
        // Tokens can cancel exactly; fall back to a fixed bucket so the
        // output is always a unit vector.
        bool zero = true;
        for (double v : acc) zero = zero && v == 0.0;
        if (!any || zero) acc[fnv1a(text) % dimension_] = 1.0;
        out.push_back(EmbeddingVector::normalized(acc));
    }
    return out;
}

RemoteProvider::RemoteProvider(RemoteConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw usage_error("InvalidConfig", "embed.endpoint is required for the remote provider");
    if (config_.batch_size == 0) config_.batch_size = 1;
}

std::vector<EmbeddingVector> RemoteProvider::embed_batch(const std::vector<std::string>& texts) const {
    http::Endpoint endpoint{config_.endpoint, config_.timeout, http::bearer_from_env(config_.api_key_env)};
    const auto response = http::post_json(endpoint, {{"model", config_.model}, {"input", texts}}, config_.retry);
    const auto data = response.find("data");
    if (data == response.end() || !data->is_array() || data->size() != texts.size()) {
        throw provider_error("MalformedResponse", "embedding response lacks a data array of the request size");
    }
    std::vector<std::pair<std::size_t, EmbeddingVector>> rows;
    for (std::size_t i = 0; i < data->size(); ++i) {
        const auto& row = (*data)[i];
        const auto index = row.value("index", i);
        std::vector<double> values = row.at("embedding").get<std::vector<double>>();
        if (values.size() != config_.dimension) {
            throw data_error("DimensionMismatch",
                             fmt::format("provider returned dimension {}, expected {}", values.size(), config_.dimension));
        }
        rows.emplace_back(index, EmbeddingVector::normalized(values));
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<EmbeddingVector> out;
    for (auto& r : rows) out.push_back(std::move(r.second));
    return out;
}

std::vector<EmbeddingVector> RemoteProvider::embed(const std::vector<std::string>& texts) const {
    const std::size_t batches = (texts.size() + config_.batch_size - 1) / config_.batch_size;
    std::vector<std::vector<EmbeddingVector>> results(batches);
    parallel_for(batches, config_.max_in_flight, [&](std::size_t b) {
        const auto begin = texts.begin() + static_cast<long>(b * config_.batch_size);
        const auto end = texts.begin() + static_cast<long>(std::min(texts.size(), (b + 1) * config_.batch_size));
        results[b] = embed_batch({begin, end});
    });
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (auto& batch : results) {
        for (auto& v : batch) out.push_back(std::move(v));
    }
    return out;
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
    std::string hex;
    hex.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char b : digest) hex += fmt::format("{:02x}", b);
    return hex;
}

CachingProvider::CachingProvider(std::shared_ptr<const EmbeddingProvider> inner, std::filesystem::path directory)
    : inner_(std::move(inner)), directory_(std::move(directory)) {
    std::filesystem::create_directories(directory_);
}

std::filesystem::path CachingProvider::path_for(const std::string& text) const {
    const auto key = sha256_hex(inner_->name() + '\0' + text);
    return directory_ / key.substr(0, 2) / (key + ".f32");
}

std::vector<EmbeddingVector> CachingProvider::embed(const std::vector<std::string>& texts) const {
    std::vector<std::optional<EmbeddingVector>> found(texts.size());
    std::vector<std::string> missing;
    std::vector<std::size_t> missing_at;
    const std::size_t dim = inner_->dimension();
    for (std::size_t i = 0; i < texts.size(); ++i) {
        std::ifstream in(path_for(texts[i]), std::ios::binary);
        std::vector<float> values(dim);
        if (in && in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(dim * sizeof(float))) &&
            in.peek() == std::char_traits<char>::eof()) {
            try {
                found[i] = EmbeddingVector::from_unit(std::move(values));
                continue;
            } catch (const Error&) {
                // Corrupt entry: recompute below.
            }
        }
        missing.push_back(texts[i]);
        missing_at.push_back(i);
    }
    if (!missing.empty()) {
        auto fresh = inner_->embed(missing);
        for (std::size_t k = 0; k < fresh.size(); ++k) {
            const auto path = path_for(missing[k]);
            std::filesystem::create_directories(path.parent_path());
            auto tmp = path;
            tmp += fmt::format(".tmp{}", std::hash<std::thread::id>{}(std::this_thread::get_id()));
            {
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                const auto values = fresh[k].values();
                out.write(reinterpret_cast<const char*>(values.data()),
                          static_cast<std::streamsize>(values.size() * sizeof(float)));
            }
            std::filesystem::rename(tmp, path);
            found[missing_at[k]] = std::move(fresh[k]);
        }
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (auto& v : found) out.push_back(std::move(*v));
    return out;
}

std::string embedding_text(const StudentSequence& sequence) {
    auto tokens = text::sequence_tokens(sequence);
    return tokens.empty() ? std::string("empty") : text::join(tokens);
}

std::vector<EmbeddingVector> embed_sequences(const std::vector<StudentSequence>& sequences,
                                             const EmbeddingProvider& provider) {
    std::vector<std::string> texts;
    texts.reserve(sequences.size());
    for (const auto& s : sequences) texts.push_back(embedding_text(s));
    auto vectors = provider.embed(texts);
    if (vectors.size() != texts.size()) {
        throw provider_error("MalformedResponse", "provider returned the wrong number of embeddings");
    }
    for (const auto& v : vectors) {
        if (v.dimension() != provider.dimension()) {
            throw data_error("DimensionMismatch",
                             fmt::format("embedding dimension {} != provider dimension {}", v.dimension(),
                                         provider.dimension()));
        }
    }
    return vectors;
}

EmbeddingVector embed_sequence(const StudentSequence& sequence, const EmbeddingProvider& provider) {
    return std::move(embed_sequences({sequence}, provider).front());
}

}  // namespace pkt::embed
