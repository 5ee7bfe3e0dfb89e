#pragma once
// Embedding providers and sequence embedding.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pkt/http.hpp"
#include "pkt/types.hpp"

namespace pkt::embed {

// Implementations must be safe to call from several threads at once.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dimension() const = 0;
    // One unit vector of length dimension() per input text, in order.
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const = 0;
};

inline constexpr std::size_t kDefaultDimension = 4096;

// Offline provider: signed feature hashing of whitespace-separated tokens,
// summed and L2-normalized.
class HashingProvider final : public EmbeddingProvider {
public:
    explicit HashingProvider(std::size_t dimension = kDefaultDimension);

    std::string name() const override { return "hashing"; }
    std::size_t dimension() const override { return dimension_; }
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const override;

private:
    std::size_t dimension_;
};

struct RemoteConfig {
    std::string endpoint;  // e.g. https://host/v1/embeddings
    std::string model;
    std::size_t dimension = kDefaultDimension;
    std::string api_key_env = "MERIT_EMBED_API_KEY";
    std::size_t batch_size = 32;
    std::size_t max_in_flight = 4;
    http::RetryPolicy retry;
    std::chrono::milliseconds timeout{60000};
};

// POST {model, input:[...]} -> {data:[{embedding:[...]}]}
class RemoteProvider final : public EmbeddingProvider {
public:
    explicit RemoteProvider(RemoteConfig config);

    std::string name() const override { return "remote:" + config_.model; }
    std::size_t dimension() const override { return config_.dimension; }
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const override;

private:
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const;
    RemoteConfig config_;
};

// Content-addressed on-disk cache in front of another provider. Keys are
// SHA-256 of (provider name, text).
class CachingProvider final : public EmbeddingProvider {
public:
    CachingProvider(std::shared_ptr<const EmbeddingProvider> inner, std::filesystem::path directory);

    std::string name() const override { return inner_->name(); }
    std::size_t dimension() const override { return inner_->dimension(); }
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const override;

    std::filesystem::path path_for(const std::string& text) const;

private:
    std::shared_ptr<const EmbeddingProvider> inner_;
    std::filesystem::path directory_;
};

std::string sha256_hex(const std::string& data);

// The text actually sent to a provider for a sequence: space-joined denoised
// tokens, or the literal "empty" when nothing survives denoising.
std::string embedding_text(const StudentSequence& sequence);

EmbeddingVector embed_sequence(const StudentSequence& sequence, const EmbeddingProvider& provider);
std::vector<EmbeddingVector> embed_sequences(const std::vector<StudentSequence>& sequences,
                                             const EmbeddingProvider& provider);

}  // namespace pkt::embed
