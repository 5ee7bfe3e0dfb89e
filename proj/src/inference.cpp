#include "pkt/inference.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "pkt/calibration.hpp"
#include "pkt/error.hpp"
#include "pkt/prompts.hpp"

namespace pkt::inference {

bool detect_spike(const StudentSequence& history, double next_difficulty, std::size_t k, bool* too_short) {
    const auto& items = history.interactions();
    if (too_short) *too_short = items.size() < k;
    if (items.size() < k) return false;
    for (std::size_t i = items.size() - k; i < items.size(); ++i) {
        if (!items[i].correct()) return false;
    }
    return difficulty_tag(next_difficulty) == DifficultyTag::Hard;
}

double compute_delta(const std::vector<RetrievalCandidate>& filtered, double fallback, double lo, double hi) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& c : filtered) {
        if (difficulty_tag(c.entry->target.difficulty()) != DifficultyTag::Hard) continue;
        sum += c.entry->outcome ? 1.0 : 0.0;
        ++count;
    }
    if (count == 0) return fallback;
    return std::clamp(sum / static_cast<double>(count), lo, hi);
}

namespace {

double recent_accuracy(const StudentSequence& history, std::size_t window = 10) {
    const auto& items = history.interactions();
    const auto start = items.size() > window ? items.size() - window : 0;
    std::size_t correct = 0;
    for (auto i = start; i < items.size(); ++i) correct += items[i].correct() ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(items.size() - start);
}

std::string spike_status(const PromptOptions& options, std::size_t streak_len) {
    if (!options.spike_active) return "Spike status: not triggered for this question.";
    return fmt::format(
        "Spike status: ACTIVE. The last {} answers are correct and the target is [HARD]; the probability of a "
        "correct answer must stay below {:.2f}.",
        streak_len, options.delta);
}

}  // namespace

double heuristic_predict(const StudentSequence& history, const Interaction& target) {
    const double p = 0.6 * recent_accuracy(history) + 0.4 * (1.0 - target.difficulty());
    return std::clamp(p, 0.05, 0.95);
}

std::string paradigm_outcome(const MemoryEntry& entry) {
    return fmt::format("{} on the next {} question: {}", entry.outcome ? "Correct (1)" : "Incorrect (0)",
                       to_string(difficulty_tag(entry.target.difficulty())), entry.target.exercise_text());
}

std::string paradigm_block(std::size_t index, const MemoryEntry& entry, bool traces) {
    if (!traces) {
        return fmt::format("--- Paradigm {} ---\nHistory:\n{}\nOutcome: {}\n", index,
                           prompts::calibrated_history(entry.history), paradigm_outcome(entry));
    }
    const auto& a = entry.annotation;
    return prompts::render(prompts::template_text("paradigm_block"),
                           {{"index", std::to_string(index)},
                            {"retrieved_history", a.knowledge_state() + " " + a.difficulty_context()},
                            {"retrieved_pattern", std::string(to_string(a.key_pattern()))},
                            {"retrieved_outcome", paradigm_outcome(entry)},
                            {"retrieved_reasoning", a.causal_reasoning()}});
}

std::string build_prompt(const StudentSequence& history, const Interaction& target,
                         const std::vector<RetrievalCandidate>& paradigms, const PromptOptions& options) {
    std::string blocks;
    for (std::size_t i = 0; i < paradigms.size(); ++i) {
        if (i) blocks += '\n';
        blocks += paradigm_block(i + 1, *paradigms[i].entry, options.traces);
    }
    if (paradigms.empty()) blocks = std::string(kNoParadigmsSentinel) + "\n";

    std::string logic;
    if (options.logic) {
        logic = prompts::render(prompts::template_text("spike_rule"),
                                {{"spike_status", spike_status(options, options.streak_len)}}) +
                "\n";
    }
    auto target_line = "Q: " + target.exercise_text();
    if (!target.concept_tags().empty()) {
        std::string tags;
        for (const auto& t : target.concept_tags()) tags += (tags.empty() ? "" : ", ") + t;
        target_line += " | concepts: " + tags;
    }
    return prompts::render(prompts::template_text("online_inference"),
                           {{"student_history_sequence", prompts::calibrated_history(history)},
                            {"target_question_content", target_line},
                            {"difficulty_tag", std::string(to_string(difficulty_tag(target.difficulty())))},
                            {"paradigm_blocks", blocks},
                            {"logic_constraints", logic}});
}

PredictorOutput HeuristicPredictor::predict(const PredictorInput& input) const {
    const double p = heuristic_predict(input.history, input.target);
    return {p,
            fmt::format("Heuristic: recent accuracy {:.2f} over the last {} items, target difficulty {:.2f}.",
                        recent_accuracy(input.history), std::min<std::size_t>(10, input.history.size()),
                        input.target.difficulty()),
            false};
}

MemoryPredictor::MemoryPredictor(double memory_weight) : weight_(memory_weight) {
    if (!(weight_ >= 0.0 && weight_ <= 1.0)) throw usage_error("InvalidConfig", "memory weight must be in [0,1]");
}

PredictorOutput MemoryPredictor::predict(const PredictorInput& input) const {
    const double base = heuristic_predict(input.history, input.target);
    if (input.paradigms.empty()) {
        return {base, fmt::format("Heuristic {:.2f}; no paradigms retrieved.", base), false};
    }
    double weighted = 0.0;
    double total = 0.0;
    for (const auto& c : input.paradigms) {
        weighted += c.fused_score * (c.entry->outcome ? 1.0 : 0.0);
        total += c.fused_score;
    }
    double memory = 0.0;
    if (total > 0.0) {
        memory = weighted / total;
    } else {
        for (const auto& c : input.paradigms) memory += c.entry->outcome ? 1.0 : 0.0;
        memory /= static_cast<double>(input.paradigms.size());
    }
    const double p = std::clamp((1.0 - weight_) * base + weight_ * memory, 0.0, 1.0);
    return {p,
            fmt::format("Heuristic {:.2f} blended with the outcome rate {:.2f} of {} retrieved paradigms.", base,
                        memory, input.paradigms.size()),
            false};
}

std::optional<PredictorOutput> parse_prediction(std::string_view reply) {
    const auto obj = llm::extract_json_object(reply);
    if (!obj) return std::nullopt;
    auto it = obj->find("probability");
    if (it == obj->end()) return std::nullopt;
    const auto p = llm::coerce_probability(*it);
    if (!p) return std::nullopt;
    PredictorOutput out;
    out.probability = *p;
    auto trace = obj->find("reasoning_trace");
    if (trace != obj->end() && trace->is_string()) out.reasoning_trace = trace->get<std::string>();
    return out;
}

LlmPredictor::LlmPredictor(std::shared_ptr<const llm::ChatClient> client, bool fallback_on_provider_error,
                           int reprompts)
    : client_(std::move(client)), fallback_on_provider_error_(fallback_on_provider_error), reprompts_(reprompts) {}

PredictorOutput LlmPredictor::predict(const PredictorInput& input) const {
    auto fallback = [&](std::string why) {
        PredictorOutput out{heuristic_predict(input.history, input.target), std::move(why), true};
        return out;
    };
    std::vector<llm::ChatMessage> messages{{"user", input.prompt}};
    try {
        for (int attempt = 0; attempt <= reprompts_; ++attempt) {
            const auto reply = client_->complete(messages);
            if (auto parsed = parse_prediction(reply)) return *parsed;
            messages.push_back({"assistant", reply});
            messages.push_back({"user",
                                "The reply could not be parsed. Respond with only the strict JSON object "
                                "{\"reasoning_trace\": string, \"prediction\": 0 or 1, \"probability\": number in "
                                "[0,1]}."});
        }
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Provider || !fallback_on_provider_error_) throw;
        return fallback(fmt::format("Heuristic fallback: provider error ({}).", e.code()));
    }
    return fallback(fmt::format("Heuristic fallback: no parsable prediction after {} attempts.", reprompts_ + 1));
}

Engine::Engine(SchemaModel model, bank::MemoryBank bank, retrieval::IndexSet indices,
               std::shared_ptr<const embed::EmbeddingProvider> provider, std::size_t cold_start_length)
    : model_(std::make_unique<SchemaModel>(std::move(model))),
      bank_(std::move(bank)),
      indices_(std::move(indices)),
      provider_(std::move(provider)) {
    if (model_->dimension != 0 && model_->dimension != provider_->dimension()) {
        throw data_error("DimensionMismatch",
                         fmt::format("schema was fit with dimension {}, provider has {}", model_->dimension,
                                     provider_->dimension()));
    }
    router_ = std::make_unique<schema::Router>(*model_, cold_start_length);
}

PredictionTrace predict(const StudentSequence& history, const Interaction& target, const Engine& engine,
                        const Predictor& predictor, const InferenceOptions& options,
                        const std::optional<EmbeddingVector>& history_embedding) {
    PredictionTrace trace;
    auto& record = trace.record;
    record.student_id = history.student_id();

    trace.spike_active = detect_spike(history, target.difficulty(), options.spike.streak_len, &trace.history_too_short);

    if (options.use_retrieval) {
        trace.retrieval_called = true;
        const auto embedding = history_embedding ? *history_embedding : embed::embed_sequence(history, engine.provider());
        try {
            auto result = retrieval::retrieve(history, embedding, engine.router(), engine.indices(), options.retrieval,
                                              options.use_routing);
            record.routed_cluster = result.routed;
            trace.candidates = std::move(result.candidates);
        } catch (const Error& e) {
            if (e.code() != "EmptyBank" && e.code() != "EmptyPartition") throw;
        }
        trace.paradigms = retrieval::quality_filter(trace.candidates, history.size(), options.retrieval);
        for (const auto& c : trace.paradigms) record.retrieved_ids.push_back(c.entry->entry_id);
    }
    trace.memory_free = trace.paradigms.empty();

    const auto& spike = options.spike;
    record.delta = spike.delta ? *spike.delta
                               : compute_delta(trace.paradigms, spike.delta_fallback, spike.delta_min, spike.delta_max);

    PromptOptions prompt_options;
    prompt_options.traces = options.use_traces;
    prompt_options.logic = options.use_logic;
    prompt_options.spike_active = trace.spike_active;
    prompt_options.delta = record.delta;
    prompt_options.streak_len = spike.streak_len;
    trace.prompt = build_prompt(history, target, trace.paradigms, prompt_options);

    const auto out = predictor.predict(
        {history, target, trace.paradigms, trace.prompt, trace.spike_active && options.use_logic});
    if (!std::isfinite(out.probability)) {
        throw data_error("InvalidProbability", fmt::format("predictor '{}' returned a non-finite value", predictor.name()));
    }
    record.raw_probability = std::clamp(out.probability, 0.0, 1.0);
    record.probability = record.raw_probability;
    record.reasoning_trace = out.reasoning_trace;
    record.predictor_fallback = out.fallback;

    if (options.use_logic && trace.spike_active) {
        record.constraints_fired.push_back(Constraint::SpikeRule);
        if (record.probability >= record.delta) {
            record.probability = std::max(0.0, record.delta - 0.01);
            record.spike_clamped = true;
        }
    }
    record.label = record.probability >= kDecisionThreshold ? 1 : 0;
    return trace;
}

}  // namespace pkt::inference
