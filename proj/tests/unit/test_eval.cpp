#include <random>

#include <gtest/gtest.h>

#include "expect_error.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "pkt/eval.hpp"

namespace pkt::eval {
namespace {

using testing::make_item;
using testing::make_sequence;

TEST(Auc, MatchesPairwiseCount) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 60;
        std::vector<int> labels(n);
        std::vector<double> scores(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(rng() % 2);
            scores[i] = static_cast<double>(rng() % 7) / 6.0;  // coarse grid forces ties
        }
        labels[0] = 0;
        labels[1] = 1;
        EXPECT_NEAR(auc(labels, scores), oracle::pairwise_auc(labels, scores), 1e-12);
    }
}

TEST(Auc, KnownValues) {
    EXPECT_DOUBLE_EQ(auc({0, 0, 1, 1}, {0.1, 0.2, 0.8, 0.9}), 1.0);
    EXPECT_DOUBLE_EQ(auc({1, 1, 0, 0}, {0.1, 0.2, 0.8, 0.9}), 0.0);
    EXPECT_DOUBLE_EQ(auc({0, 1}, {0.5, 0.5}), 0.5);
    EXPECT_DOUBLE_EQ(auc({0, 1, 0, 1}, {0.1, 0.3, 0.35, 0.8}), 0.75);
}

TEST(Auc, RejectsDegenerateInput) {
    EXPECT_PKT_ERROR(auc({1, 1, 1}, {0.1, 0.2, 0.3}), ErrorKind::Data, "SingleClass");
    EXPECT_PKT_ERROR(auc({}, {}), ErrorKind::Data, "SingleClass");
    EXPECT_PKT_ERROR(auc({0, 1}, {0.1}), ErrorKind::Data, "LengthMismatch");
}

TEST(AccF1, HandComputed) {
    // tp = 2, fp = 1, fn = 1, tn = 1
    const auto c = acc_f1({1, 1, 0, 1, 0}, {0.9, 0.5, 0.6, 0.2, 0.1});
    EXPECT_DOUBLE_EQ(c.acc, 3.0 / 5.0);
    EXPECT_DOUBLE_EQ(c.f1, 2.0 / 3.0);
}

TEST(AccF1, ThresholdIsInclusive) {
    EXPECT_DOUBLE_EQ(acc_f1({1}, {0.5}).acc, 1.0);
    EXPECT_DOUBLE_EQ(acc_f1({0}, {0.4999}).acc, 1.0);
    EXPECT_DOUBLE_EQ(acc_f1({1, 0}, {0.7, 0.7}, 0.8).acc, 0.5);
}

TEST(AccF1, F1ZeroWithoutTruePositives) {
    const auto c = acc_f1({0, 0, 0}, {0.1, 0.2, 0.3});
    EXPECT_DOUBLE_EQ(c.acc, 1.0);
    EXPECT_DOUBLE_EQ(c.f1, 0.0);
    EXPECT_DOUBLE_EQ(acc_f1({1, 1}, {0.1, 0.2}).f1, 0.0);
}

TEST(AblationFlags, Names) {
    EXPECT_EQ(AblationFlags{}.name(), "full");
    EXPECT_EQ(AblationFlags{.no_logic = true}.name(), "no_logic");
    EXPECT_EQ((AblationFlags{.no_traces = true, .no_logic = true}.name()), "no_traces+no_logic");
    EXPECT_EQ((AblationFlags{.no_retrieval = true, .no_routing = true}.name()), "no_retrieval+no_routing");
}

TEST(AblationFlags, ApplyOnlyTurnsSwitchesOff) {
    inference::InferenceOptions base;
    const auto full = AblationFlags{}.apply(base);
    EXPECT_TRUE(full.use_retrieval && full.use_routing && full.use_traces && full.use_logic);
    const auto off = AblationFlags{.no_routing = true, .no_logic = true}.apply(base);
    EXPECT_TRUE(off.use_retrieval);
    EXPECT_FALSE(off.use_routing);
    EXPECT_TRUE(off.use_traces);
    EXPECT_FALSE(off.use_logic);
    base.use_traces = false;
    EXPECT_FALSE(AblationFlags{}.apply(base).use_traces);
}

TEST(StandardVariants, ReportOrder) {
    std::vector<std::string> names;
    for (const auto& v : standard_variants()) names.push_back(v.name());
    EXPECT_EQ(names, (std::vector<std::string>{"full", "no_routing", "no_traces", "no_logic", "no_retrieval"}));
}

struct Fixture {
    std::unique_ptr<inference::Engine> engine;
    std::vector<StudentSequence> test;
};

Fixture fixture() {
    std::mt19937_64 rng(17);
    auto bank = testing::random_bank(rng, 80, 2, 16);
    auto model = testing::random_model(rng, 2, 16);
    auto indices = retrieval::IndexSet::build(bank);
    Fixture f;
    f.engine = std::make_unique<inference::Engine>(model, std::move(bank), std::move(indices),
                                                   std::make_shared<embed::HashingProvider>(16));
    for (int s = 0; s < 12; ++s) {
        f.test.push_back(testing::random_sequence(rng, "t" + std::to_string(s), 4 + s % 5, Split::Test));
    }
    return f;
}

TEST(EvaluateSplit, LastStepReport) {
    const auto f = fixture();
    const inference::HeuristicPredictor predictor;
    const auto r = evaluate_split(f.test, *f.engine, predictor, {});
    ASSERT_EQ(r.records.size(), f.test.size());
    EXPECT_EQ(r.report.at("variant"), "full");
    EXPECT_EQ(r.report.at("n_predictions"), f.test.size());
    EXPECT_EQ(r.retrieval_calls, f.test.size());
    for (const char* key : {"auc", "acc", "f1", "positives", "constraint_fires", "spike_clamped",
                            "predictor_fallbacks", "retrieval_calls", "memory_free", "history_too_short", "flags"}) {
        EXPECT_TRUE(r.report.contains(key)) << key;
    }
    std::vector<int> labels;
    std::vector<double> scores;
    for (std::size_t i = 0; i < r.records.size(); ++i) {
        EXPECT_EQ(r.records[i].student_id, f.test[i].student_id());
        EXPECT_EQ(*r.records[i].outcome, f.test[i].back().correct() ? 1 : 0);
        labels.push_back(*r.records[i].outcome);
        scores.push_back(r.records[i].probability);
    }
    EXPECT_DOUBLE_EQ(r.report.at("acc").get<double>(), acc_f1(labels, scores).acc);
}

TEST(EvaluateSplit, PerStepCountsEveryPrefix) {
    const auto f = fixture();
    const inference::HeuristicPredictor predictor;
    EvalOptions options;
    options.per_step = true;
    const auto r = evaluate_split(f.test, *f.engine, predictor, {.no_retrieval = true}, options);
    std::size_t expected = 0;
    for (const auto& s : f.test) expected += s.size() - 1;
    EXPECT_EQ(r.records.size(), expected);
    EXPECT_EQ(r.retrieval_calls, 0u);
    EXPECT_TRUE(r.report.at("per_step").get<bool>());
}

TEST(EvaluateSplit, SingleClassLeavesAucNull) {
    const auto f = fixture();
    std::vector<StudentSequence> test;
    for (int s = 0; s < 3; ++s) {
        test.push_back(make_sequence("u" + std::to_string(s),
                                     {make_item("Range", 0.1, true), make_item("Mode", 0.2, true)}, Split::Test));
    }
    const inference::HeuristicPredictor predictor;
    const auto r = evaluate_split(test, *f.engine, predictor, {.no_retrieval = true});
    EXPECT_TRUE(r.report.at("auc").is_null());
    EXPECT_TRUE(r.report.contains("auc_note"));
    EXPECT_DOUBLE_EQ(r.report.at("acc").get<double>(), 1.0);
}

TEST(EvaluateSplit, RejectsSequenceWithoutHistory) {
    const auto f = fixture();
    const inference::HeuristicPredictor predictor;
    EXPECT_PKT_ERROR(evaluate_split({make_sequence("x", {make_item("Range", 0.1, true)}, Split::Test)}, *f.engine,
                                    predictor, {}),
                     ErrorKind::Data, "SequenceTooShort");
}

TEST(EvaluateSplit, WorkerCountDoesNotChangeResults) {
    const auto f = fixture();
    const inference::MemoryPredictor predictor;
    EvalOptions one, many;
    one.workers = 1;
    many.workers = 8;
    const auto a = evaluate_split(f.test, *f.engine, predictor, {}, one);
    const auto b = evaluate_split(f.test, *f.engine, predictor, {}, many);
    EXPECT_EQ(a.report.dump(), b.report.dump());
    EXPECT_EQ(predictions_csv(a.records), predictions_csv(b.records));
}

TEST(PredictionsCsv, HeaderAndQuoting) {
    PredictionRecord r;
    r.student_id = "a,b";
    r.probability = 0.25;
    r.raw_probability = 0.7;
    r.label = 0;
    r.outcome = 1;
    r.constraints_fired = {Constraint::SpikeRule};
    r.retrieved_ids = {"0:p1", "0:p2"};
    const auto csv = predictions_csv({r});
    EXPECT_EQ(csv, "student_id,probability,raw_probability,label,outcome,constraints_fired,retrieved_ids\n"
                   "\"a,b\",0.25,0.7,0,1,SpikeRule,0:p1;0:p2\n");
}

TEST(AblationTable, FormatsNullAuc) {
    const nlohmann::json full{{"variant", "full"}, {"auc", 0.81234}, {"acc", 0.7}, {"f1", 0.65}};
    const nlohmann::json flat{{"variant", "no_logic"}, {"auc", nullptr}, {"acc", 0.5}, {"f1", 0.0}};
    const auto table = ablation_table({full, flat});
    EXPECT_NE(table.find("0.8123"), std::string::npos);
    EXPECT_NE(table.find("n/a"), std::string::npos);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
}

}  // namespace
}  // namespace pkt::eval
