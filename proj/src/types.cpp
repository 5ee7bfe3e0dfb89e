#include "pkt/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "pkt/error.hpp"

namespace pkt {

namespace {

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string squash_label(std::string_view s) {
    std::string out;
    for (unsigned char c : s) {
        if (c == ' ' || c == '-' || c == '_' || c == '\t') continue;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

}  // namespace

std::string ClusterId::to_string() const {
    return is_generic() ? std::string("generic") : std::to_string(value_);
}

Interaction::Interaction(std::string exercise_text, std::vector<std::string> concept_tags, bool correct,
                         double difficulty, std::string item_id, std::int64_t timestamp)
    : exercise_text_(std::move(exercise_text)),
      concept_tags_(std::move(concept_tags)),
      correct_(correct),
      difficulty_(difficulty),
      item_id_(std::move(item_id)),
      timestamp_(timestamp) {
    if (blank(exercise_text_)) {
        throw data_error("InvalidInteraction", "exercise_text is empty");
    }
    if (!std::isfinite(difficulty_) || difficulty_ < 0.0 || difficulty_ > 1.0) {
        throw data_error("InvalidInteraction", fmt::format("difficulty {} outside [0,1]", difficulty_));
    }
}

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(std::string_view text) {
    if (text == "train") return Split::Train;
    if (text == "test") return Split::Test;
    throw data_error("InvalidSplit", fmt::format("unknown split '{}'", text));
}

StudentSequence::StudentSequence(std::string student_id, std::vector<Interaction> interactions, Split split)
    : student_id_(std::move(student_id)), interactions_(std::move(interactions)), split_(split) {
    if (interactions_.empty()) {
        throw data_error("InvalidSequence", fmt::format("sequence for student '{}' is empty", student_id_));
    }
}

StudentSequence StudentSequence::prefix(std::size_t count) const {
    count = std::min(count, interactions_.size());
    return StudentSequence(student_id_, {interactions_.begin(), interactions_.begin() + static_cast<long>(count)},
                           split_);
}

StudentSequence StudentSequence::with_split(Split split) const {
    StudentSequence copy = *this;
    copy.split_ = split;
    return copy;
}

std::string_view to_string(DifficultyTag tag) {
    switch (tag) {
        case DifficultyTag::Easy: return "[EASY]";
        case DifficultyTag::Medium: return "[MEDIUM]";
        case DifficultyTag::Hard: return "[HARD]";
    }
    return "[MEDIUM]";
}

template <typename T>
static EmbeddingVector normalize_impl(std::span<const T> values, std::vector<float>& out) {
    double sq = 0.0;
    for (T v : values) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw data_error("NonFiniteEmbedding", "embedding contains a non-finite component");
        }
        sq += static_cast<double>(v) * static_cast<double>(v);
    }
    if (sq <= 0.0) throw data_error("ZeroEmbedding", "cannot normalize a zero vector");
    const double inv = 1.0 / std::sqrt(sq);
    out.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(static_cast<double>(values[i]) * inv);
    return EmbeddingVector::from_unit(std::move(out));
}

EmbeddingVector EmbeddingVector::normalized(std::span<const double> values) {
    std::vector<float> out;
    return normalize_impl(values, out);
}

EmbeddingVector EmbeddingVector::normalized(std::span<const float> values) {
    std::vector<float> out;
    return normalize_impl(values, out);
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<float> values) {
    EmbeddingVector v(std::move(values));
    for (float x : v.values_) {
        if (!std::isfinite(x)) throw data_error("NonFiniteEmbedding", "embedding contains a non-finite component");
    }
    const double n = v.norm();
    if (std::abs(n - 1.0) > 1e-5) {
        throw data_error("DimensionMismatch", fmt::format("embedding is not unit norm (|v| = {})", n));
    }
    return v;
}

double EmbeddingVector::dot(const EmbeddingVector& other) const {
    if (other.values_.size() != values_.size()) {
        throw data_error("DimensionMismatch",
                         fmt::format("dimension {} vs {}", values_.size(), other.values_.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
        acc += static_cast<double>(values_[i]) * static_cast<double>(other.values_[i]);
    }
    return acc;
}

double EmbeddingVector::norm() const {
    double acc = 0.0;
    for (float x : values_) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

std::string_view to_string(KeyPattern pattern) {
    switch (pattern) {
        case KeyPattern::SolidMastery: return "Solid Mastery";
        case KeyPattern::DifficultySpikeFailure: return "Difficulty Spike Failure";
        case KeyPattern::CarelessSlip: return "Careless Slip";
        case KeyPattern::ConceptGaps: return "Concept Gaps";
        case KeyPattern::LuckyGuess: return "Lucky Guess";
    }
    return "Concept Gaps";
}

std::optional<KeyPattern> parse_key_pattern(std::string_view text) {
    const std::string wanted = squash_label(text);
    for (KeyPattern p : kAllKeyPatterns) {
        if (squash_label(to_string(p)) == wanted) return p;
    }
    return std::nullopt;
}

Annotation::Annotation(std::string knowledge_state, KeyPattern key_pattern, std::string difficulty_context,
                       std::string causal_reasoning, std::string summary, bool fallback)
    : knowledge_state_(std::move(knowledge_state)),
      key_pattern_(key_pattern),
      difficulty_context_(std::move(difficulty_context)),
      causal_reasoning_(std::move(causal_reasoning)),
      summary_(std::move(summary)),
      fallback_(fallback) {
    for (const std::string* field : {&knowledge_state_, &difficulty_context_, &causal_reasoning_, &summary_}) {
        if (blank(*field)) throw data_error("MalformedAnnotation", "annotation has an empty text field");
    }
}

Annotation Annotation::as_fallback() const {
    Annotation copy = *this;
    copy.fallback_ = true;
    return copy;
}

void MemoryEntry::validate() const {
    if (history.split() != Split::Train) {
        throw data_error("TestDataInBank", fmt::format("memory entry '{}' is not from the train split", entry_id));
    }
    if (embedding.empty()) throw data_error("MissingEmbedding", fmt::format("entry '{}' has no embedding", entry_id));
    if (entry_id.empty()) throw data_error("InvalidEntry", "memory entry without id");
}

void SchemaModel::validate() const {
    for (const auto& c : centroids) {
        if (c.dimension() != centroids.front().dimension()) {
            throw data_error("DimensionMismatch", "centroids have differing dimensions");
        }
    }
    if (keywords.size() != centroids.size()) {
        throw data_error("InvalidSchema", "keyword table does not match centroid count");
    }
}

void SpikeConfig::validate() const {
    if (streak_len < 1) throw usage_error("InvalidConfig", "spike.streak_len must be >= 1");
    if (delta && !(*delta > 0.0 && *delta < 1.0)) throw usage_error("InvalidConfig", "spike.delta must be in (0,1)");
    if (!(delta_min > 0.0 && delta_min <= delta_max && delta_max < 1.0)) {
        throw usage_error("InvalidConfig", "spike delta clamp bounds must satisfy 0 < min <= max < 1");
    }
}

std::string_view to_string(Constraint constraint) {
    switch (constraint) {
        case Constraint::SpikeRule: return "SpikeRule";
    }
    return "SpikeRule";
}

bool PredictionRecord::fired(Constraint c) const {
    return std::find(constraints_fired.begin(), constraints_fired.end(), c) != constraints_fired.end();
}

}  // namespace pkt
