#include "pkt/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pkt/error.hpp"
#include "pkt/serialization.hpp"
#include "pkt/text.hpp"

namespace pkt::retrieval {

void RetrievalConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw usage_error("InvalidConfig", "retrieval.alpha must be in [0,1]");
    if (n == 0) throw usage_error("InvalidConfig", "retrieval.n must be positive");
    if (m_per_side == 0) throw usage_error("InvalidConfig", "retrieval.m_per_side must be positive");
    if (!(bm25.k1 >= 0.0)) throw usage_error("InvalidConfig", "bm25.k1 must be non-negative");
    if (!(bm25.b >= 0.0 && bm25.b <= 1.0)) throw usage_error("InvalidConfig", "bm25.b must be in [0,1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw usage_error("InvalidConfig", "retrieval.tau must be in [0,1]");
    if (!(length_ratio_low > 0.0 && length_ratio_low <= 1.0 && length_ratio_high >= 1.0)) {
        throw usage_error("InvalidConfig", "length ratio bounds must satisfy 0 < low <= 1 <= high");
    }
}

bool hit_before(const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entry->entry_id < b.entry->entry_id;
}

namespace {

std::vector<Hit> top_m(std::vector<Hit> hits, std::size_t m) {
    const auto keep = std::min(m, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<long>(keep), hits.end(), hit_before);
    hits.resize(keep);
    return hits;
}

}  // namespace

PartitionIndex::PartitionIndex(ClusterId cluster, std::vector<MemoryEntryPtr> entries, Bm25Params params,
                               std::uint64_t generation)
    : cluster_(cluster), entries_(std::move(entries)), params_(params), generation_(generation) {
    if (!entries_.empty()) dimension_ = entries_.front()->embedding.dimension();
    matrix_.reserve(entries_.size() * dimension_);
    std::size_t total_len = 0;
    for (const auto& e : entries_) {
        if (e->embedding.dimension() != dimension_) {
            throw data_error("DimensionMismatch",
                             fmt::format("entry '{}' has dimension {}, partition has {}", e->entry_id,
                                         e->embedding.dimension(), dimension_));
        }
        const auto v = e->embedding.values();
        matrix_.insert(matrix_.end(), v.begin(), v.end());

        std::map<std::string, std::size_t> tf;
        const auto tokens = text::sequence_tokens(e->history);
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [term, count] : tf) ++doc_freq_[term];
        doc_lengths_.push_back(tokens.size());
        total_len += tokens.size();
        term_freqs_.push_back(std::move(tf));
    }
    if (!entries_.empty()) avg_doc_length_ = static_cast<double>(total_len) / static_cast<double>(entries_.size());
}

double PartitionIndex::idf(const std::string& term) const {
    auto it = doc_freq_.find(term);
    const double df = it == doc_freq_.end() ? 0.0 : static_cast<double>(it->second);
    const double n = static_cast<double>(entries_.size());
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double PartitionIndex::bm25(std::size_t doc, const std::vector<std::string>& query_tokens) const {
    const auto& tf = term_freqs_.at(doc);
    const double len_ratio = avg_doc_length_ > 0.0 ? static_cast<double>(doc_lengths_[doc]) / avg_doc_length_ : 1.0;
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * len_ratio);
    double score = 0.0;
    for (const auto& q : query_tokens) {
        auto it = tf.find(q);
        if (it == tf.end()) continue;
        const double f = static_cast<double>(it->second);
        score += idf(q) * f * (params_.k1 + 1.0) / (f + norm);
    }
    return score;
}

std::vector<Hit> PartitionIndex::dense_search(const EmbeddingVector& query, std::size_t m) const {
    if (entries_.empty()) return {};
    if (query.dimension() != dimension_) {
        throw data_error("DimensionMismatch",
                         fmt::format("query dimension {} != index dimension {}", query.dimension(), dimension_));
    }
    const auto q = query.values();
    std::vector<Hit> hits;
    hits.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const float* row = matrix_.data() + i * dimension_;
        double dot = 0.0;
        for (std::size_t k = 0; k < dimension_; ++k) dot += static_cast<double>(q[k]) * static_cast<double>(row[k]);
        hits.push_back({entries_[i], dot});
    }
    return top_m(std::move(hits), m);
}

std::vector<Hit> PartitionIndex::sparse_search(const std::vector<std::string>& query_tokens, std::size_t m) const {
    std::vector<Hit> hits;
    hits.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) hits.push_back({entries_[i], bm25(i, query_tokens)});
    return top_m(std::move(hits), m);
}

IndexSet IndexSet::build(const bank::MemoryBank& bank, Bm25Params params) {
    IndexSet set;
    set.params_ = params;
    for (const auto cluster : bank.cluster_ids()) {
        set.partitions_[cluster] =
            std::make_shared<const PartitionIndex>(cluster, bank.partition(cluster), params, set.next_generation_++);
    }
    set.flat_ = std::make_shared<const PartitionIndex>(ClusterId::generic(), bank.entries(), params,
                                                       set.next_generation_++);
    return set;
}

const PartitionIndex* IndexSet::partition(ClusterId cluster) const {
    auto it = partitions_.find(cluster);
    return (it == partitions_.end() || it->second->size() == 0) ? nullptr : it->second.get();
}

std::vector<ClusterId> IndexSet::clusters() const {
    std::vector<ClusterId> out;
    for (const auto& [c, p] : partitions_) out.push_back(c);
    return out;
}

IndexSet IndexSet::refresh(const bank::MemoryBank& bank, const std::set<ClusterId>& affected) const {
    IndexSet next = *this;
    for (const auto cluster : affected) {
        auto entries = bank.partition(cluster);
        if (entries.empty()) {
            next.partitions_.erase(cluster);
        } else {
            next.partitions_[cluster] =
                std::make_shared<const PartitionIndex>(cluster, std::move(entries), params_, next.next_generation_++);
        }
    }
    next.flat_ = std::make_shared<const PartitionIndex>(ClusterId::generic(), bank.entries(), params_,
                                                        next.next_generation_++);
    return next;
}

std::vector<RetrievalCandidate> fuse_and_rank(const std::vector<Hit>& dense, const std::vector<Hit>& sparse,
                                              double alpha, std::size_t n) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw usage_error("InvalidConfig", "alpha must be in [0,1]");
    struct Pool {
        MemoryEntryPtr entry;
        std::optional<double> dense, sparse;
    };
    std::map<std::string, Pool> pool;
    for (const auto& h : dense) pool[h.entry->entry_id] = {h.entry, h.score, std::nullopt};
    for (const auto& h : sparse) {
        auto& p = pool[h.entry->entry_id];
        p.entry = h.entry;
        p.sparse = h.score;
    }
    if (pool.empty()) throw data_error("EmptyCandidatePool", "no candidates to fuse");

    auto bounds = [](const std::vector<Hit>& hits) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto& h : hits) {
            lo = std::min(lo, h.score);
            hi = std::max(hi, h.score);
        }
        return std::pair{lo, hi};
    };
    const auto [dlo, dhi] = bounds(dense);
    const auto [slo, shi] = bounds(sparse);
    auto normalize = [](double x, double lo, double hi) { return hi > lo ? (x - lo) / (hi - lo) : 0.5; };

    std::vector<RetrievalCandidate> out;
    out.reserve(pool.size());
    for (const auto& [id, p] : pool) {
        RetrievalCandidate c;
        c.entry = p.entry;
        c.dense_raw = p.dense.value_or(dense.empty() ? 0.0 : dlo);
        c.sparse_raw = p.sparse.value_or(sparse.empty() ? 0.0 : slo);
        c.dense_score = dense.empty() ? 0.5 : normalize(c.dense_raw, dlo, dhi);
        c.sparse_score = sparse.empty() ? 0.5 : normalize(c.sparse_raw, slo, shi);
        c.fused_score = alpha * c.dense_score + (1.0 - alpha) * c.sparse_score;
        out.push_back(std::move(c));
    }
    const auto keep = std::min(n, out.size());
    std::partial_sort(out.begin(), out.begin() + static_cast<long>(keep), out.end(),
                      [](const RetrievalCandidate& a, const RetrievalCandidate& b) {
                          if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
                          return a.entry->entry_id < b.entry->entry_id;
                      });
    out.resize(keep);
    return out;
}

RetrievalResult retrieve(const StudentSequence& query, const EmbeddingVector& query_embedding,
                         const schema::Router& router, const IndexSet& indices, const RetrievalConfig& config,
                         bool use_routing) {
    if (indices.total_entries() == 0) throw data_error("EmptyBank", "the memory bank has no entries");
    RetrievalResult result;
    const PartitionIndex* index = nullptr;
    if (use_routing) {
        result.routed = router.route(query.student_id(), query.size(), query_embedding).cluster_id;
        result.searched = result.routed;
        index = indices.partition(result.routed);
        if (!index) {
            result.searched = ClusterId::generic();
            index = indices.partition(result.searched);
        }
        if (!index) {
            throw data_error("EmptyPartition",
                             fmt::format("partition {} and the generic pool are empty", result.routed.to_string()));
        }
    } else {
        index = indices.flat();
        result.flat = true;
    }
    result.searched_size = index->size();
    const auto tokens = text::sequence_tokens(query);
    const auto dense = index->dense_search(query_embedding, config.m_per_side);
    const auto sparse = index->sparse_search(tokens, config.m_per_side);
    result.candidates = fuse_and_rank(dense, sparse, config.alpha, config.n);
    return result;
}

RetrievalResult retrieve(const StudentSequence& query, const schema::Router& router, const IndexSet& indices,
                         const embed::EmbeddingProvider& provider, const RetrievalConfig& config, bool use_routing) {
    return retrieve(query, embed::embed_sequence(query, provider), router, indices, config, use_routing);
}

std::vector<RetrievalCandidate> quality_filter(const std::vector<RetrievalCandidate>& candidates,
                                               std::size_t query_length, const RetrievalConfig& config) {
    std::vector<RetrievalCandidate> out;
    if (query_length == 0) return out;
    for (const auto& c : candidates) {
        const double ratio = static_cast<double>(c.entry->history.size()) / static_cast<double>(query_length);
        if (c.fused_score >= config.tau && ratio >= config.length_ratio_low && ratio <= config.length_ratio_high) {
            out.push_back(c);
        }
    }
    return out;
}

namespace {

std::string partition_stem(ClusterId cluster) { return "partition_" + cluster.to_string(); }

nlohmann::json partition_stats(const PartitionIndex& p) {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& e : p.entries()) ids.push_back(e->entry_id);
    return {{"cluster_id", p.cluster().to_string()},
            {"generation", p.generation()},
            {"dimension", p.dimension()},
            {"entry_ids", ids},
            {"k1", p.bm25_params().k1},
            {"b", p.bm25_params().b},
            {"doc_lengths", p.doc_lengths()},
            {"avg_doc_length", p.avg_doc_length()},
            {"doc_freq", p.doc_freq()}};
}

void write_partition(const std::filesystem::path& dir, const std::string& stem, const PartitionIndex& p) {
    std::ofstream blob(dir / (stem + ".f32"), std::ios::binary | std::ios::trunc);
    blob.write(reinterpret_cast<const char*>(p.vectors().data()),
               static_cast<std::streamsize>(p.vectors().size() * sizeof(float)));
    if (!blob) throw data_error("WriteFailed", fmt::format("cannot write {}", (dir / (stem + ".f32")).string()));
    io::write_json_file((dir / (stem + ".json")).string(), partition_stats(p));
}

std::shared_ptr<const PartitionIndex> read_partition(const std::filesystem::path& dir, const std::string& stem,
                                                     ClusterId cluster, std::vector<MemoryEntryPtr> entries,
                                                     Bm25Params params) {
    const auto stats = io::read_json_file((dir / (stem + ".json")).string());
    auto index = std::make_shared<const PartitionIndex>(cluster, std::move(entries), params,
                                                        stats.at("generation").get<std::uint64_t>());
    std::ifstream blob(dir / (stem + ".f32"), std::ios::binary);
    std::vector<float> vectors(index->vectors().size());
    const bool read_ok =
        blob && blob.read(reinterpret_cast<char*>(vectors.data()),
                          static_cast<std::streamsize>(vectors.size() * sizeof(float))) &&
        blob.peek() == std::char_traits<char>::eof();
    auto expected = partition_stats(*index);
    if (!read_ok || vectors != index->vectors() || expected != stats) {
        throw data_error("IndexStale", fmt::format("{} does not match the memory bank; rebuild the index", stem));
    }
    return index;
}

}  // namespace

void save_indices(const std::filesystem::path& dir, const IndexSet& indices) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest{{"k1", indices.bm25_params().k1},
                            {"b", indices.bm25_params().b},
                            {"partitions", nlohmann::json::array()}};
    for (const auto cluster : indices.clusters()) {
        const auto* p = indices.partition(cluster);
        if (!p) continue;
        write_partition(dir, partition_stem(cluster), *p);
        manifest["partitions"].push_back(cluster.to_string());
    }
    if (indices.flat()) {
        write_partition(dir, "flat", *indices.flat());
        manifest["flat_generation"] = indices.flat()->generation();
    }
    io::write_json_file((dir / "index.json").string(), manifest);
}

IndexSet load_indices(const std::filesystem::path& dir, const bank::MemoryBank& bank) {
    const auto manifest = io::read_json_file((dir / "index.json").string());
    IndexSet set;
    set.params_ = {manifest.at("k1").get<double>(), manifest.at("b").get<double>()};
    std::set<ClusterId> listed;
    for (const auto& name : manifest.at("partitions")) {
        const auto text = name.get<std::string>();
        const auto cluster = text == "generic" ? ClusterId::generic() : ClusterId(std::stoi(text));
        listed.insert(cluster);
        set.partitions_[cluster] =
            read_partition(dir, partition_stem(cluster), cluster, bank.partition(cluster), set.params_);
    }
    if (listed != bank.cluster_ids()) {
        throw data_error("IndexStale", "saved partitions do not match the memory bank's clusters");
    }
    set.flat_ = read_partition(dir, "flat", ClusterId::generic(), bank.entries(), set.params_);
    std::uint64_t max_generation = set.flat_->generation();
    for (const auto& [c, p] : set.partitions_) max_generation = std::max(max_generation, p->generation());
    set.next_generation_ = max_generation + 1;
    return set;
}

}  // namespace pkt::retrieval
