#pragma once
// Online inference: spike detection, the dynamic threshold, Stage III prompt
// assembly, pluggable predictors and hard enforcement of the Spike Rule.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pkt/embedding.hpp"
#include "pkt/llm.hpp"
#include "pkt/memory_bank.hpp"
#include "pkt/retrieval.hpp"
#include "pkt/schema.hpp"
#include "pkt/types.hpp"

namespace pkt::inference {

// True iff the last k responses are correct and the next item is [HARD].
// Histories shorter than k yield false and set *too_short.
bool detect_spike(const StudentSequence& history, double next_difficulty, std::size_t k = 3,
                  bool* too_short = nullptr);

// Mean outcome of the candidates whose target is [HARD], clamped to
// [lo, hi]; `fallback` when there are none.
double compute_delta(const std::vector<RetrievalCandidate>& filtered, double fallback = 0.5, double lo = 0.2,
                     double hi = 0.6);

// p = clamp(0.05, 0.95, 0.6 * accuracy(last 10) + 0.4 * (1 - difficulty)).
double heuristic_predict(const StudentSequence& history, const Interaction& target);

inline constexpr std::string_view kNoParadigmsSentinel = "(no analogous paradigms retrieved)";

struct PromptOptions {
    bool traces = true;  // false: paradigm blocks carry raw history + outcome only
    bool logic = true;  // false: the Spike Rule section is omitted
    bool spike_active = false;
    double delta = 0.5;
    std::size_t streak_len = 3;
};

std::string paradigm_outcome(const MemoryEntry& entry);
std::string paradigm_block(std::size_t index, const MemoryEntry& entry, bool traces);
std::string build_prompt(const StudentSequence& history, const Interaction& target,
                         const std::vector<RetrievalCandidate>& paradigms, const PromptOptions& options = {});

struct PredictorInput {
    const StudentSequence& history;
    const Interaction& target;
    const std::vector<RetrievalCandidate>& paradigms;  // filtered, fused-score order
    const std::string& prompt;
    bool spike_active = false;
};

struct PredictorOutput {
    double probability = 0.5;
    std::string reasoning_trace;
    bool fallback = false;
};

class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::string name() const = 0;
    virtual PredictorOutput predict(const PredictorInput& input) const = 0;
};

class HeuristicPredictor final : public Predictor {
public:
    std::string name() const override { return "heuristic"; }
    PredictorOutput predict(const PredictorInput& input) const override;
};

// Offline predictor that also reads the retrieved paradigms: the heuristic
// estimate is blended with the similarity-weighted outcome rate of the
// paradigms, p = (1 - w) * heuristic + w * memory.
class MemoryPredictor final : public Predictor {
public:
    explicit MemoryPredictor(double memory_weight = 0.4);
    std::string name() const override { return "memory"; }
    PredictorOutput predict(const PredictorInput& input) const override;

private:
    double weight_;
};

inline constexpr int kPredictionReprompts = 2;

// Sends the rendered prompt and parses {reasoning_trace, prediction,
// probability}. After the re-prompts are exhausted the heuristic answers
// with fallback = true. Transport failures propagate unless
// fallback_on_provider_error is set.
class LlmPredictor final : public Predictor {
public:
    explicit LlmPredictor(std::shared_ptr<const llm::ChatClient> client, bool fallback_on_provider_error = false,
                          int reprompts = kPredictionReprompts);
    std::string name() const override { return "llm:" + client_->name(); }
    PredictorOutput predict(const PredictorInput& input) const override;

private:
    std::shared_ptr<const llm::ChatClient> client_;
    bool fallback_on_provider_error_;
    int reprompts_;
};

// Parses one predictor reply; nullopt when it carries no usable probability.
std::optional<PredictorOutput> parse_prediction(std::string_view reply);

struct InferenceOptions {
    bool use_retrieval = true;
    bool use_routing = true;
    bool use_traces = true;
    bool use_logic = true;
    retrieval::RetrievalConfig retrieval;
    SpikeConfig spike;
};

// Everything a prediction reads, loaded once and shared across threads.
class Engine {
public:
    Engine(SchemaModel model, bank::MemoryBank bank, retrieval::IndexSet indices,
           std::shared_ptr<const embed::EmbeddingProvider> provider,
           std::size_t cold_start_length = schema::kColdStartLength);

    const SchemaModel& model() const noexcept { return *model_; }
    const bank::MemoryBank& bank() const noexcept { return bank_; }
    const retrieval::IndexSet& indices() const noexcept { return indices_; }
    const embed::EmbeddingProvider& provider() const noexcept { return *provider_; }
    const schema::Router& router() const noexcept { return *router_; }

private:
    std::unique_ptr<SchemaModel> model_;  // stable address for the router
    bank::MemoryBank bank_;
    retrieval::IndexSet indices_;
    std::shared_ptr<const embed::EmbeddingProvider> provider_;
    std::unique_ptr<schema::Router> router_;
};

struct PredictionTrace {
    PredictionRecord record;
    std::string prompt;
    std::vector<RetrievalCandidate> candidates;  // fused top-N before filtering
    std::vector<RetrievalCandidate> paradigms;  // after the quality filter
    bool spike_active = false;
    bool history_too_short = false;
    bool retrieval_called = false;
    bool memory_free = false;  // retrieval yielded nothing usable
};

// `history_embedding` may be supplied when the caller already embedded the
// history (batch evaluation); otherwise the engine's provider is used.
PredictionTrace predict(const StudentSequence& history, const Interaction& target, const Engine& engine,
                        const Predictor& predictor, const InferenceOptions& options = {},
                        const std::optional<EmbeddingVector>& history_embedding = std::nullopt);

}  // namespace pkt::inference
