#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "expect_error.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "pkt/retrieval.hpp"
#include "pkt/text.hpp"

namespace pkt::retrieval {
namespace {

MemoryEntryPtr entry_with(const std::string& id, std::size_t history_len = 4) {
    std::mt19937_64 rng(std::hash<std::string>{}(id));
    auto bank = testing::random_bank(rng, 1, 1, 4);
    auto e = *bank.entries()[0];
    e.entry_id = id;
    std::vector<Interaction> items;
    for (std::size_t i = 0; i < history_len; ++i) items.push_back(testing::make_item("Range", 0.2, true));
    e.history = StudentSequence(e.student_id, items);
    return std::make_shared<const MemoryEntry>(e);
}

TEST(Fuse, MinMaxWithMissingSides) {
    const auto a = entry_with("a"), b = entry_with("b"), c = entry_with("c");
    // a: dense only, c: sparse only, b: both.
    const auto out = fuse_and_rank({{a, 0.9}, {b, 0.5}}, {{b, 4.0}, {c, 2.0}}, 0.7, 3);
    ASSERT_EQ(out.size(), 3u);
    std::map<std::string, RetrievalCandidate> by;
    for (const auto& x : out) by[x.entry->entry_id] = x;
    EXPECT_DOUBLE_EQ(by["a"].dense_score, 1.0);
    EXPECT_DOUBLE_EQ(by["a"].sparse_score, 0.0);  // missing -> side minimum
    EXPECT_DOUBLE_EQ(by["c"].dense_score, 0.0);
    EXPECT_DOUBLE_EQ(by["b"].sparse_score, 1.0);
    EXPECT_DOUBLE_EQ(by["a"].fused_score, 0.7);
    EXPECT_DOUBLE_EQ(by["b"].fused_score, 0.3);
    EXPECT_DOUBLE_EQ(by["c"].fused_score, 0.0);
    EXPECT_EQ(out[0].entry->entry_id, "a");
    EXPECT_DOUBLE_EQ(by["c"].sparse_raw, 2.0);
}

TEST(Fuse, ConstantAndEmptySidesGiveHalf) {
    const auto a = entry_with("a"), b = entry_with("b");
    const auto same = fuse_and_rank({{a, 0.4}, {b, 0.4}}, {}, 0.7, 3);
    ASSERT_EQ(same.size(), 2u);
    for (const auto& x : same) {
        EXPECT_DOUBLE_EQ(x.dense_score, 0.5);
        EXPECT_DOUBLE_EQ(x.sparse_score, 0.5);
        EXPECT_DOUBLE_EQ(x.fused_score, 0.5);
    }
    EXPECT_EQ(same[0].entry->entry_id, "a");  // tie -> entry_id
    EXPECT_PKT_ERROR(fuse_and_rank({}, {}, 0.7, 3), ErrorKind::Data, "EmptyCandidatePool");
    EXPECT_PKT_ERROR(fuse_and_rank({{a, 1.0}}, {}, 1.5, 3), ErrorKind::Usage, "InvalidConfig");
}

TEST(Fuse, TruncatesToN) {
    std::vector<Hit> dense;
    for (int i = 0; i < 10; ++i) dense.push_back({entry_with("e" + std::to_string(i)), 0.1 * i});
    const auto out = fuse_and_rank(dense, {}, 0.7, 3);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].entry->entry_id, "e9");
    EXPECT_EQ(out[2].entry->entry_id, "e7");
}

TEST(Fuse, ScoresStayInUnitInterval) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 200; ++t) {
        std::vector<Hit> dense, sparse;
        for (int i = 0; i < 6; ++i) {
            const auto e = entry_with("x" + std::to_string(i));
            if (rng() % 2) dense.push_back({e, std::uniform_real_distribution<double>(-1, 1)(rng)});
            if (rng() % 2) sparse.push_back({e, std::uniform_real_distribution<double>(0, 5)(rng)});
        }
        if (dense.empty() && sparse.empty()) continue;
        const double alpha = std::uniform_real_distribution<double>(0, 1)(rng);
        const auto out = fuse_and_rank(dense, sparse, alpha, 10);
        for (std::size_t i = 0; i < out.size(); ++i) {
            EXPECT_GE(out[i].fused_score, 0.0);
            EXPECT_LE(out[i].fused_score, 1.0);
            EXPECT_NEAR(out[i].fused_score, alpha * out[i].dense_score + (1 - alpha) * out[i].sparse_score, 1e-12);
            if (i) EXPECT_GE(out[i - 1].fused_score, out[i].fused_score);
        }
    }
}

TEST(QualityFilter, ThresholdAndLengthRatio) {
    RetrievalConfig cfg;
    auto cand = [](std::size_t len, double fused) {
        RetrievalCandidate c;
        c.entry = entry_with("l" + std::to_string(len) + "f" + std::to_string(fused), len);
        c.fused_score = fused;
        return c;
    };
    const std::vector<RetrievalCandidate> in = {cand(10, 0.3), cand(10, 0.2999), cand(5, 0.9), cand(4, 0.9),
                                                cand(20, 0.9), cand(21, 0.9)};
    const auto out = quality_filter(in, 10, cfg);
    std::vector<std::size_t> lens;
    for (const auto& c : out) lens.push_back(c.entry->history.size());
    EXPECT_EQ(lens, (std::vector<std::size_t>{10, 5, 20}));
    EXPECT_TRUE(quality_filter(in, 0, cfg).empty());
}

TEST(PartitionIndex, Bm25MatchesReference) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 30; ++t) {
        const auto bank = testing::random_bank(rng, 1 + rng() % 30, 1, 6);
        const PartitionIndex index(ClusterId(0), bank.entries(), {1.2, 0.5});
        std::vector<std::vector<std::string>> docs;
        for (const auto& e : bank.entries()) docs.push_back(text::sequence_tokens(e->history));
        const auto query = text::sequence_tokens(testing::random_sequence(rng, "q", 3));
        const auto want = oracle::bm25_scores(docs, query, 1.2, 0.5);
        for (std::size_t i = 0; i < docs.size(); ++i) EXPECT_NEAR(index.bm25(i, query), want[i], 1e-9);
        const auto hits = index.sparse_search(query, 5);
        EXPECT_LE(hits.size(), 5u);
        EXPECT_TRUE(std::is_sorted(hits.begin(), hits.end(), hit_before));
    }
}

TEST(PartitionIndex, DenseSearchIsExhaustive) {
    std::mt19937_64 rng(13);
    const auto bank = testing::random_bank(rng, 200, 1, 16);
    const PartitionIndex index(ClusterId(0), bank.entries(), {});
    const auto q = testing::random_unit(rng, 16);
    const auto hits = index.dense_search(q, 7);
    std::vector<std::pair<double, std::string>> all;
    for (const auto& e : bank.entries()) {
        double dot = 0.0;
        for (std::size_t i = 0; i < 16; ++i) dot += double(q.values()[i]) * double(e->embedding.values()[i]);
        all.emplace_back(-dot, e->entry_id);
    }
    std::sort(all.begin(), all.end());
    ASSERT_EQ(hits.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_EQ(hits[i].entry->entry_id, all[i].second);
        EXPECT_NEAR(hits[i].score, -all[i].first, 1e-9);
    }
    EXPECT_PKT_ERROR(index.dense_search(testing::random_unit(rng, 8), 3), ErrorKind::Data, "DimensionMismatch");
}

TEST(Retrieve, EmptyBankAndPartitionFallback) {
    std::mt19937_64 rng(14);
    const auto model = testing::random_model(rng, 2, 8);
    const schema::Router router(model);
    const auto q = testing::random_sequence(rng, "q", 6, Split::Test);
    const auto qe = model.centroids[1];
    EXPECT_PKT_ERROR(retrieve(q, qe, router, IndexSet::build(bank::MemoryBank()), {}), ErrorKind::Data, "EmptyBank");

    // Only cluster 0 and GENERIC populated: a query routed to 1 falls back.
    auto full = testing::random_bank(rng, 60, 2, 8);
    std::vector<MemoryEntryPtr> kept;
    for (const auto& e : full.entries()) {
        if (e->cluster_id != ClusterId(1)) kept.push_back(e);
    }
    const bank::MemoryBank partial(kept);
    const auto r = retrieve(q, qe, router, IndexSet::build(partial), {});
    EXPECT_EQ(r.routed, ClusterId(1));
    EXPECT_TRUE(r.searched.is_generic());
    for (const auto& c : r.candidates) EXPECT_TRUE(c.entry->cluster_id.is_generic());

    std::vector<MemoryEntryPtr> only0;
    for (const auto& e : full.entries()) {
        if (e->cluster_id == ClusterId(0)) only0.push_back(e);
    }
    EXPECT_PKT_ERROR(retrieve(q, qe, router, IndexSet::build(bank::MemoryBank(only0)), {}), ErrorKind::Data,
                     "EmptyPartition");

    const auto flat = retrieve(q, qe, router, IndexSet::build(partial), {}, false);
    EXPECT_TRUE(flat.flat);
    EXPECT_EQ(flat.searched_size, partial.size());
}

TEST(IndexSet, RefreshRebuildsOnlyAffected) {
    std::mt19937_64 rng(15);
    const auto bank = testing::random_bank(rng, 50, 3, 8);
    const auto before = IndexSet::build(bank);
    EXPECT_EQ(before.total_entries(), 50u);
    const embed::HashingProvider provider(8);
    auto e = bank::make_entry(testing::random_sequence(rng, "new", 6), ClusterId(2), provider, bank::RuleAnnotator());
    const auto appended = bank::append_entries(bank, {e}, 3);
    const auto after = before.refresh(appended.bank, appended.affected);
    EXPECT_EQ(after.total_entries(), 51u);
    EXPECT_EQ(after.partition(ClusterId(0)), before.partition(ClusterId(0)));
    EXPECT_NE(after.partition(ClusterId(2))->generation(), before.partition(ClusterId(2))->generation());
    EXPECT_EQ(after.partition(ClusterId(2))->size(), before.partition(ClusterId(2))->size() + 1);
    EXPECT_EQ(before.total_entries(), 50u);
}

TEST(IndexIo, RoundTripAndStaleness) {
    std::mt19937_64 rng(16);
    const auto bank = testing::random_bank(rng, 40, 2, 8);
    const auto indices = IndexSet::build(bank);
    const auto dir = std::filesystem::temp_directory_path() / "pkt-index-test";
    std::filesystem::remove_all(dir);
    save_indices(dir, indices);
    const auto loaded = load_indices(dir, bank);
    for (const auto c : indices.clusters()) {
        EXPECT_EQ(loaded.partition(c)->vectors(), indices.partition(c)->vectors());
        EXPECT_EQ(loaded.partition(c)->doc_freq(), indices.partition(c)->doc_freq());
        EXPECT_EQ(loaded.partition(c)->generation(), indices.partition(c)->generation());
    }
    const auto other = testing::random_bank(rng, 40, 2, 8);
    EXPECT_PKT_ERROR(load_indices(dir, other), ErrorKind::Data, "IndexStale");

    // Corrupt one stored vector.
    const auto blob = dir / "partition_0.f32";
    {
        std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
        const float junk = 0.123f;
        f.write(reinterpret_cast<const char*>(&junk), sizeof junk);
    }
    EXPECT_PKT_ERROR(load_indices(dir, bank), ErrorKind::Data, "IndexStale");
    std::filesystem::remove_all(dir);
}

TEST(RetrievalConfig, Validates) {
    RetrievalConfig c;
    EXPECT_NO_THROW(c.validate());
    c.alpha = 1.1;
    EXPECT_PKT_ERROR(c.validate(), ErrorKind::Usage, "InvalidConfig");
    c = {};
    c.length_ratio_low = 1.5;
    EXPECT_PKT_ERROR(c.validate(), ErrorKind::Usage, "InvalidConfig");
    c = {};
    c.n = 0;
    EXPECT_PKT_ERROR(c.validate(), ErrorKind::Usage, "InvalidConfig");
}

}  // namespace
}  // namespace pkt::retrieval
