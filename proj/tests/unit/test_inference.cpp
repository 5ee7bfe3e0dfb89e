#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "expect_error.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "pkt/inference.hpp"

namespace pkt::inference {
namespace {

using testing::make_item;
using testing::make_sequence;

StudentSequence streak_history(std::size_t correct_tail, std::size_t length = 6) {
    std::vector<Interaction> items;
    for (std::size_t i = 0; i < length; ++i) items.push_back(make_item("Range", 0.1, i + correct_tail >= length));
    return make_sequence("s", items, Split::Test);
}

TEST(DetectSpike, NeedsFullStreakAndHardTarget) {
    bool too_short = true;
    EXPECT_TRUE(detect_spike(streak_history(3), 0.7, 3, &too_short));
    EXPECT_FALSE(too_short);
    EXPECT_FALSE(detect_spike(streak_history(2), 0.9));
    EXPECT_FALSE(detect_spike(streak_history(6), 0.6999));
    EXPECT_TRUE(detect_spike(streak_history(5), 0.9, 5));
    EXPECT_FALSE(detect_spike(streak_history(2, 2), 0.9, 3, &too_short));
    EXPECT_TRUE(too_short);
}

RetrievalCandidate candidate(double target_difficulty, bool outcome, double fused = 0.5) {
    auto seq = make_sequence("p" + std::to_string(std::rand()), {make_item("A", 0.2, true), make_item("B", target_difficulty, outcome)});
    const std::vector<double> e = {1.0, 0.0};
    auto entry = std::make_shared<const MemoryEntry>(MemoryEntry{
        "0:x", "x", ClusterId(0), seq.prefix(1), seq.back(), outcome,
        bank::rule_annotate(seq.prefix(1), seq.back(), outcome), EmbeddingVector::normalized(e)});
    RetrievalCandidate c;
    c.entry = entry;
    c.fused_score = fused;
    return c;
}

TEST(ComputeDelta, MeanOfHardOutcomesClamped) {
    EXPECT_DOUBLE_EQ(compute_delta({}), 0.5);
    EXPECT_DOUBLE_EQ(compute_delta({candidate(0.5, true)}), 0.5);  // no [HARD] targets
    EXPECT_DOUBLE_EQ(compute_delta({candidate(0.9, false), candidate(0.8, false)}), 0.2);
    EXPECT_DOUBLE_EQ(compute_delta({candidate(0.9, true), candidate(0.8, true)}), 0.6);
    EXPECT_DOUBLE_EQ(compute_delta({candidate(0.9, true), candidate(0.8, false), candidate(0.7, true),
                                    candidate(0.1, false)}),
                     0.6);
    EXPECT_NEAR(compute_delta({candidate(0.9, true), candidate(0.8, false), candidate(0.7, false)}), 1.0 / 3.0, 1e-12);
}

TEST(ComputeDelta, MatchesReference) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 200; ++t) {
        std::vector<RetrievalCandidate> cs;
        std::vector<std::pair<double, bool>> raw;
        for (int i = 0, n = static_cast<int>(rng() % 6); i < n; ++i) {
            const double d = u(rng);
            const bool o = rng() % 2;
            cs.push_back(candidate(d, o));
            raw.emplace_back(d, o);
        }
        EXPECT_NEAR(compute_delta(cs, 0.45, 0.25, 0.55), oracle::mean_hard_outcome_delta(raw, 0.45, 0.25, 0.55), 1e-12);
    }
}

TEST(Heuristic, FormulaAndClamp) {
    // 4 of the last 10 correct, target 0.5: 0.6*0.4 + 0.4*0.5 = 0.44.
    std::vector<Interaction> items;
    for (int i = 0; i < 12; ++i) items.push_back(make_item("A", 0.5, i < 2 || i >= 8));
    EXPECT_NEAR(heuristic_predict(make_sequence("s", items), make_item("B", 0.5, true)), 0.44, 1e-12);
    EXPECT_DOUBLE_EQ(heuristic_predict(streak_history(6), make_item("B", 0.0, true)), 0.95);
    EXPECT_DOUBLE_EQ(heuristic_predict(streak_history(0), make_item("B", 1.0, true)), 0.05);
}

TEST(MemoryPredictorTest, BlendsFusedWeightedOutcomes) {
    const auto h = streak_history(3);
    const auto target = make_item("B", 0.5, true);
    const std::vector<RetrievalCandidate> ps = {candidate(0.5, true, 0.75), candidate(0.5, false, 0.25)};
    const std::string prompt;
    const MemoryPredictor m(0.4);
    const double base = heuristic_predict(h, target);
    EXPECT_NEAR(m.predict({h, target, ps, prompt}).probability, 0.6 * base + 0.4 * 0.75, 1e-12);
    EXPECT_NEAR(m.predict({h, target, {}, prompt}).probability, base, 1e-12);
    EXPECT_PKT_ERROR(MemoryPredictor(1.5), ErrorKind::Usage, "InvalidConfig");
}

TEST(BuildPrompt, SectionsFollowOptions) {
    const auto h = streak_history(3);
    const auto target = make_item("Median", 1.0, false);
    const std::vector<RetrievalCandidate> ps = {candidate(0.9, false)};
    PromptOptions opt;
    opt.spike_active = true;
    opt.delta = 0.2;
    const auto full = build_prompt(h, target, ps, opt);
    EXPECT_NE(full.find("Logic Constraints (The Spike Rule)"), std::string::npos);
    EXPECT_NE(full.find("Spike status: ACTIVE"), std::string::npos);
    EXPECT_NE(full.find("0.20"), std::string::npos);
    EXPECT_NE(full.find("--- Paradigm 1 ---\nHistory Summary:"), std::string::npos);
    EXPECT_NE(full.find(ps[0].entry->annotation.causal_reasoning()), std::string::npos);
    EXPECT_NE(full.find("Incorrect (0) on the next [HARD] question: B"), std::string::npos);
    EXPECT_NE(full.find("Q: Median | concepts: Median"), std::string::npos);
    EXPECT_EQ(full.find("{paradigm_blocks}"), std::string::npos);

    opt.logic = false;
    opt.traces = false;
    const auto bare = build_prompt(h, target, ps, opt);
    EXPECT_EQ(bare.find("Logic Constraints (The Spike Rule)"), std::string::npos);
    EXPECT_EQ(bare.find("Spike status"), std::string::npos);
    EXPECT_EQ(bare.find(ps[0].entry->annotation.causal_reasoning()), std::string::npos);
    EXPECT_NE(bare.find("History:\n1. Q: A"), std::string::npos);

    const auto empty = build_prompt(h, target, {}, {});
    EXPECT_NE(empty.find(kNoParadigmsSentinel), std::string::npos);
    EXPECT_NE(empty.find("Spike status: not triggered"), std::string::npos);
}

TEST(ParsePrediction, TolerantFields) {
    auto p = parse_prediction(R"(sure: {"reasoning_trace":"r","prediction":0,"probability":"35%"})");
    ASSERT_TRUE(p);
    EXPECT_DOUBLE_EQ(p->probability, 0.35);
    EXPECT_EQ(p->reasoning_trace, "r");
    EXPECT_FALSE(parse_prediction(R"({"prediction":1})"));
    EXPECT_FALSE(parse_prediction(R"({"probability":1.7})"));
    EXPECT_FALSE(parse_prediction("I think 0.4"));
}

class FailingChat final : public llm::ChatClient {
public:
    std::string name() const override { return "failing"; }
    std::string complete(const std::vector<llm::ChatMessage>&) const override {
        throw provider_error("ProviderUnavailable", "down");
    }
};

TEST(LlmPredictorTest, RepromptsThenFallsBack) {
    const auto h = streak_history(3);
    const auto target = make_item("B", 0.5, true);
    const std::string prompt = "PROMPT";
    auto chat = std::make_shared<testing::ScriptedChat>(std::vector<std::string>{"junk", R"({"probability":0.8})"});
    const auto ok = LlmPredictor(chat).predict({h, target, {}, prompt});
    EXPECT_DOUBLE_EQ(ok.probability, 0.8);
    EXPECT_FALSE(ok.fallback);
    EXPECT_EQ(chat->requests()[0][0].content, "PROMPT");

    auto bad = std::make_shared<testing::ScriptedChat>(std::vector<std::string>{"a", "b", "c"});
    const auto fb = LlmPredictor(bad).predict({h, target, {}, prompt});
    EXPECT_TRUE(fb.fallback);
    EXPECT_DOUBLE_EQ(fb.probability, heuristic_predict(h, target));
    EXPECT_EQ(bad->calls(), 3u);
}

TEST(LlmPredictorTest, ProviderErrorsPropagateUnlessAllowed) {
    const auto h = streak_history(3);
    const auto target = make_item("B", 0.5, true);
    const std::string prompt;
    auto chat = std::make_shared<FailingChat>();
    EXPECT_PKT_ERROR(LlmPredictor(chat).predict({h, target, {}, prompt}), ErrorKind::Provider, "ProviderUnavailable");
    EXPECT_TRUE(LlmPredictor(chat, true).predict({h, target, {}, prompt}).fallback);
}

struct SmallEngine {
    std::unique_ptr<Engine> engine;
};

SmallEngine small_engine(std::size_t bank_size) {
    std::mt19937_64 rng(41);
    auto bank = testing::random_bank(rng, bank_size, 2, 16);
    auto model = testing::random_model(rng, 2, 16);
    model.dimension = 16;
    auto indices = retrieval::IndexSet::build(bank);
    return {std::make_unique<Engine>(model, std::move(bank), std::move(indices),
                                     std::make_shared<embed::HashingProvider>(16))};
}

TEST(Predict, SpikeClampAndRecord) {
    const auto e = small_engine(60);
    const auto h = streak_history(4);
    const auto target = make_item("Venn Diagram", 0.9, false);
    InferenceOptions opt;
    opt.spike.delta = 0.3;
    const auto t = predict(h, target, *e.engine, testing::FixedPredictor(0.8), opt);
    EXPECT_TRUE(t.spike_active);
    EXPECT_DOUBLE_EQ(t.record.raw_probability, 0.8);
    EXPECT_DOUBLE_EQ(t.record.probability, 0.29);
    EXPECT_TRUE(t.record.spike_clamped);
    EXPECT_TRUE(t.record.fired(Constraint::SpikeRule));
    EXPECT_EQ(t.record.label, 0);

    // Already below the threshold: recorded, not clamped.
    const auto low = predict(h, target, *e.engine, testing::FixedPredictor(0.1), opt);
    EXPECT_TRUE(low.record.fired(Constraint::SpikeRule));
    EXPECT_FALSE(low.record.spike_clamped);
    EXPECT_DOUBLE_EQ(low.record.probability, 0.1);

    opt.use_logic = false;
    const auto off = predict(h, target, *e.engine, testing::FixedPredictor(0.8), opt);
    EXPECT_TRUE(off.spike_active);
    EXPECT_TRUE(off.record.constraints_fired.empty());
    EXPECT_DOUBLE_EQ(off.record.probability, 0.8);
}

TEST(Predict, RetrievalSwitchesAndEmptyBank) {
    const auto e = small_engine(60);
    const auto h = streak_history(1, 8);
    const auto target = make_item("Mode", 0.3, true);
    InferenceOptions opt;
    opt.use_retrieval = false;
    const auto t = predict(h, target, *e.engine, HeuristicPredictor(), opt);
    EXPECT_FALSE(t.retrieval_called);
    EXPECT_TRUE(t.memory_free);
    EXPECT_TRUE(t.record.retrieved_ids.empty());
    EXPECT_NE(t.prompt.find(kNoParadigmsSentinel), std::string::npos);

    const auto empty = small_engine(0);
    const auto m = predict(h, target, *empty.engine, HeuristicPredictor());
    EXPECT_TRUE(m.retrieval_called);
    EXPECT_TRUE(m.memory_free);
    EXPECT_DOUBLE_EQ(m.record.delta, 0.5);
}

TEST(Predict, ProbabilityValidation) {
    const auto e = small_engine(10);
    const auto h = streak_history(1);
    const auto target = make_item("Mode", 0.3, true);
    EXPECT_PKT_ERROR(predict(h, target, *e.engine, testing::FixedPredictor(std::nan(""))), ErrorKind::Data,
                     "InvalidProbability");
    EXPECT_DOUBLE_EQ(predict(h, target, *e.engine, testing::FixedPredictor(1.4)).record.probability, 1.0);
}

// Property: whatever the predictor says, an active spike with logic on
// leaves the final probability strictly below delta.
TEST(Predict, SpikeInvariantHolds) {
    const auto e = small_engine(80);
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 500; ++t) {
        const auto h = streak_history(rng() % 7, 6);
        const auto target = make_item("Venn Diagram", u(rng), false);
        InferenceOptions opt;
        if (rng() % 3 == 0) opt.spike.delta = 0.005 + 0.99 * u(rng);
        const auto tr = predict(h, target, *e.engine, testing::FixedPredictor(u(rng)), opt);
        if (tr.spike_active) {
            EXPECT_LT(tr.record.probability, tr.record.delta);
            EXPECT_GE(tr.record.probability, 0.0);
        }
    }
}

TEST(EngineTest, RejectsProviderDimensionMismatch) {
    std::mt19937_64 rng(1);
    auto model = testing::random_model(rng, 1, 8);
    model.dimension = 8;
    EXPECT_PKT_ERROR(Engine(model, bank::MemoryBank(), retrieval::IndexSet(), std::make_shared<embed::HashingProvider>(16)),
                     ErrorKind::Data, "DimensionMismatch");
}

}  // namespace
}  // namespace pkt::inference
