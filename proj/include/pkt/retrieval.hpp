#pragma once
// Partitioned hybrid retrieval: exact inner-product search and Okapi BM25
// per cluster partition, score fusion and the post-retrieval filter.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pkt/embedding.hpp"
#include "pkt/memory_bank.hpp"
#include "pkt/schema.hpp"
#include "pkt/types.hpp"

namespace pkt::retrieval {

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;

    bool operator==(const Bm25Params&) const = default;
};

struct RetrievalConfig {
    double alpha = 0.7;
    std::size_t n = 3;
    std::size_t m_per_side = 20;
    Bm25Params bm25;
    double tau = 0.3;
    double length_ratio_low = 0.5;
    double length_ratio_high = 2.0;

    void validate() const;
};

struct Hit {
    MemoryEntryPtr entry;
    double score = 0.0;
};

// Orders hits by score descending, then entry_id ascending.
bool hit_before(const Hit& a, const Hit& b);

class PartitionIndex {
public:
    PartitionIndex(ClusterId cluster, std::vector<MemoryEntryPtr> entries, Bm25Params params,
                   std::uint64_t generation = 0);

    ClusterId cluster() const noexcept { return cluster_; }
    const std::vector<MemoryEntryPtr>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t dimension() const noexcept { return dimension_; }
    // Identifies the build that produced this index; unchanged partitions
    // keep their generation across refreshes.
    std::uint64_t generation() const noexcept { return generation_; }

    const Bm25Params& bm25_params() const noexcept { return params_; }
    const std::map<std::string, std::size_t>& doc_freq() const noexcept { return doc_freq_; }
    const std::vector<std::size_t>& doc_lengths() const noexcept { return doc_lengths_; }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    const std::vector<float>& vectors() const noexcept { return matrix_; }

    double idf(const std::string& term) const;
    // Okapi BM25 of the query against document `doc`. Repeated query terms
    // count once per occurrence.
    double bm25(std::size_t doc, const std::vector<std::string>& query_tokens) const;

    // Exact top-m by inner product.
    std::vector<Hit> dense_search(const EmbeddingVector& query, std::size_t m) const;
    std::vector<Hit> sparse_search(const std::vector<std::string>& query_tokens, std::size_t m) const;

private:
    ClusterId cluster_;
    std::vector<MemoryEntryPtr> entries_;
    Bm25Params params_;
    std::uint64_t generation_;
    std::size_t dimension_ = 0;
    std::vector<float> matrix_;  // size() x dimension_, row-major
    std::vector<std::map<std::string, std::size_t>> term_freqs_;
    std::map<std::string, std::size_t> doc_freq_;
    std::vector<std::size_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

// One partition per cluster present in the bank (GENERIC included) plus a
// flat index over the whole bank for the no-routing ablation. Copies share
// partitions; refresh() returns a new snapshot.
class IndexSet {
public:
    IndexSet() = default;
    static IndexSet build(const bank::MemoryBank& bank, Bm25Params params = {});

    // nullptr when the cluster has no entries.
    const PartitionIndex* partition(ClusterId cluster) const;
    const PartitionIndex* flat() const { return flat_.get(); }
    std::vector<ClusterId> clusters() const;
    std::size_t total_entries() const { return flat_ ? flat_->size() : 0; }
    const Bm25Params& bm25_params() const noexcept { return params_; }

    // Rebuilds only the `affected` partitions (and the flat index) from
    // `bank`; every other partition is carried over as-is.
    IndexSet refresh(const bank::MemoryBank& bank, const std::set<ClusterId>& affected) const;

    friend IndexSet load_indices(const std::filesystem::path& dir, const bank::MemoryBank& bank);

private:
    std::map<ClusterId, std::shared_ptr<const PartitionIndex>> partitions_;
    std::shared_ptr<const PartitionIndex> flat_;
    Bm25Params params_;
    std::uint64_t next_generation_ = 0;
};

// Union of both result lists; a candidate missing from one side takes that
// side's minimum. Each side is min-max normalized over the pool (constant
// side -> 0.5). Throws EmptyCandidatePool.
std::vector<RetrievalCandidate> fuse_and_rank(const std::vector<Hit>& dense, const std::vector<Hit>& sparse,
                                              double alpha = 0.7, std::size_t n = 3);

struct RetrievalResult {
    ClusterId routed;  // router decision
    ClusterId searched;  // partition actually searched (GENERIC after a fallback)
    bool flat = false;  // whole bank searched (no routing)
    std::size_t searched_size = 0;
    std::vector<RetrievalCandidate> candidates;
};

// Routes the query history, searches one partition (GENERIC when the routed
// partition is empty) and fuses. With use_routing = false the flat index is
// searched instead. Throws EmptyBank, or EmptyPartition when neither the
// routed partition nor GENERIC holds entries.
RetrievalResult retrieve(const StudentSequence& query, const EmbeddingVector& query_embedding,
                         const schema::Router& router, const IndexSet& indices, const RetrievalConfig& config,
                         bool use_routing = true);

RetrievalResult retrieve(const StudentSequence& query, const schema::Router& router, const IndexSet& indices,
                         const embed::EmbeddingProvider& provider, const RetrievalConfig& config,
                         bool use_routing = true);

// Keeps candidates with fused_score >= tau whose history length ratio
// |S_v| / |S_u| lies within the configured bounds. Order is preserved.
std::vector<RetrievalCandidate> quality_filter(const std::vector<RetrievalCandidate>& candidates,
                                               std::size_t query_length, const RetrievalConfig& config);

// Per partition: <dir>/partition_<id>.f32 (row-major float vectors) and
// <dir>/partition_<id>.json (entry ids and BM25 statistics), plus
// <dir>/index.json listing the partitions.
void save_indices(const std::filesystem::path& dir, const IndexSet& indices);
// Reads saved indices back against `bank`; throws IndexStale when the files
// do not describe that bank.
IndexSet load_indices(const std::filesystem::path& dir, const bank::MemoryBank& bank);

}  // namespace pkt::retrieval
