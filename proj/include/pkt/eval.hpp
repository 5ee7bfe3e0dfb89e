#pragma once
// Metrics and split evaluation with the ablation switches.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pkt/inference.hpp"
#include "pkt/types.hpp"

namespace pkt::eval {

// Mann-Whitney statistic with ties counted as 0.5. Throws SingleClass
// unless both labels occur.
double auc(const std::vector<int>& labels, const std::vector<double>& scores);

struct Classification {
    double acc = 0.0;
    double f1 = 0.0;
};

// Predicted positive iff score >= threshold. F1 is 0 when precision + recall is 0.
Classification acc_f1(const std::vector<int>& labels, const std::vector<double>& scores,
                      double threshold = kDecisionThreshold);

// no_retrieval takes precedence: with it set, no_routing and no_traces
// change nothing.
struct AblationFlags {
    bool no_retrieval = false;
    bool no_routing = false;
    bool no_traces = false;
    bool no_logic = false;

    std::string name() const;  // "full", "no_routing", "no_logic+no_traces", ...
    inference::InferenceOptions apply(inference::InferenceOptions base) const;
};

// Standard variants in report order: full, no_routing, no_traces,
// no_logic, no_retrieval.
std::vector<AblationFlags> standard_variants();

struct EvalOptions {
    inference::InferenceOptions inference;
    bool per_step = false;  // predict every step t >= 1 instead of the last one
    std::size_t workers = 4;
};

struct EvalResult {
    std::vector<PredictionRecord> records;
    std::size_t retrieval_calls = 0;
    std::size_t memory_free = 0;
    std::size_t history_too_short = 0;
    std::vector<ClusterId> candidate_clusters;  // distinct clusters across all candidate pools
    nlohmann::json report;  // metrics and counts; no timings, so reruns are byte-identical
};

// One prediction per test sequence (history = all but the last
// interaction), or one per step with per_step.
EvalResult evaluate_split(const std::vector<StudentSequence>& test, const inference::Engine& engine,
                          const inference::Predictor& predictor, const AblationFlags& flags,
                          const EvalOptions& options = {});

// student_id,probability,raw_probability,label,outcome,constraints_fired,retrieved_ids
std::string predictions_csv(const std::vector<PredictionRecord>& records);

// Fixed-width comparison of variant reports (AUC / ACC / F1).
std::string ablation_table(const std::vector<nlohmann::json>& reports);

}  // namespace pkt::eval
