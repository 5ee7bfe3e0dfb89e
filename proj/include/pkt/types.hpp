#pragma once
// Domain model shared by every pipeline stage. Constructors enforce the
// invariants; nothing here performs I/O.

#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pkt {

// Cluster identifier. GENERIC is the cold-start / noise pool and is a real
// partition key, not an absent value.
class ClusterId {
public:
    constexpr ClusterId() = default;
    constexpr explicit ClusterId(int value) : value_(value < 0 ? kGenericValue : value) {}

    static constexpr ClusterId generic() { return ClusterId(); }

    constexpr bool is_generic() const noexcept { return value_ == kGenericValue; }
    constexpr int value() const noexcept { return value_; }

    std::string to_string() const;

    constexpr auto operator<=>(const ClusterId&) const = default;

private:
    static constexpr int kGenericValue = -1;
    int value_ = kGenericValue;
};

class Interaction {
public:
    Interaction(std::string exercise_text, std::vector<std::string> concept_tags, bool correct,
                double difficulty, std::string item_id = {}, std::int64_t timestamp = 0);

    const std::string& exercise_text() const noexcept { return exercise_text_; }
    const std::vector<std::string>& concept_tags() const noexcept { return concept_tags_; }
    bool correct() const noexcept { return correct_; }
    double difficulty() const noexcept { return difficulty_; }
    const std::string& item_id() const noexcept { return item_id_; }
    std::int64_t timestamp() const noexcept { return timestamp_; }

    bool operator==(const Interaction&) const = default;

private:
    std::string exercise_text_;
    std::vector<std::string> concept_tags_;
    bool correct_;
    double difficulty_;
    std::string item_id_;
    std::int64_t timestamp_;
};

enum class Split { Train, Test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

// Ordered interaction history of one student. Ingestion guarantees 5..50
// interactions; prefixes used as memory histories and cold-start queries
// may be shorter, so the constructor only requires a non-empty sequence.
class StudentSequence {
public:
    StudentSequence(std::string student_id, std::vector<Interaction> interactions,
                    Split split = Split::Train);

    const std::string& student_id() const noexcept { return student_id_; }
    const std::vector<Interaction>& interactions() const noexcept { return interactions_; }
    Split split() const noexcept { return split_; }
    std::size_t size() const noexcept { return interactions_.size(); }

    const Interaction& back() const { return interactions_.back(); }

    // First `count` interactions as a new sequence with the same identity.
    StudentSequence prefix(std::size_t count) const;
    StudentSequence with_split(Split split) const;

    bool operator==(const StudentSequence&) const = default;

private:
    std::string student_id_;
    std::vector<Interaction> interactions_;
    Split split_;
};

enum class DifficultyTag { Easy = 0, Medium = 1, Hard = 2 };

// "[EASY]" / "[MEDIUM]" / "[HARD]"
std::string_view to_string(DifficultyTag tag);

// Unit-L2 vector with finite components.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    // Normalizes `values`. Throws on non-finite input or zero norm.
    static EmbeddingVector normalized(std::span<const double> values);
    static EmbeddingVector normalized(std::span<const float> values);
    // Accepts an already-normalized vector (e.g. read back from disk) after
    // checking the norm contract.
    static EmbeddingVector from_unit(std::vector<float> values);

    std::size_t dimension() const noexcept { return values_.size(); }
    std::span<const float> values() const noexcept { return values_; }
    bool empty() const noexcept { return values_.empty(); }

    double dot(const EmbeddingVector& other) const;
    double norm() const;

    bool operator==(const EmbeddingVector&) const = default;

private:
    explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {}
    std::vector<float> values_;
};

// Closed archetype label set.
enum class KeyPattern { SolidMastery, DifficultySpikeFailure, CarelessSlip, ConceptGaps, LuckyGuess };

inline constexpr KeyPattern kAllKeyPatterns[] = {
    KeyPattern::SolidMastery, KeyPattern::DifficultySpikeFailure, KeyPattern::CarelessSlip,
    KeyPattern::ConceptGaps, KeyPattern::LuckyGuess};

// Display names, e.g. "Difficulty Spike Failure".
std::string_view to_string(KeyPattern pattern);
// Case-insensitive; spaces, hyphens and underscores are ignored so both
// "Careless Slip" and "CarelessSlip" resolve. nullopt when not in the set.
std::optional<KeyPattern> parse_key_pattern(std::string_view text);

class Annotation {
public:
    Annotation(std::string knowledge_state, KeyPattern key_pattern, std::string difficulty_context,
               std::string causal_reasoning, std::string summary, bool fallback = false);

    const std::string& knowledge_state() const noexcept { return knowledge_state_; }
    KeyPattern key_pattern() const noexcept { return key_pattern_; }
    const std::string& difficulty_context() const noexcept { return difficulty_context_; }
    const std::string& causal_reasoning() const noexcept { return causal_reasoning_; }
    const std::string& summary() const noexcept { return summary_; }
    // True when produced by the rule annotator in place of a failed LLM call.
    bool fallback() const noexcept { return fallback_; }

    Annotation as_fallback() const;

    bool operator==(const Annotation&) const = default;

private:
    std::string knowledge_state_;
    KeyPattern key_pattern_;
    std::string difficulty_context_;
    std::string causal_reasoning_;
    std::string summary_;
    bool fallback_;
};

struct MemoryEntry {
    std::string entry_id;
    std::string student_id;
    ClusterId cluster_id;
    StudentSequence history;  // prefix preceding the target
    Interaction target;
    bool outcome;
    Annotation annotation;
    EmbeddingVector embedding;  // of the history's denoised serialization

    void validate() const;
    bool operator==(const MemoryEntry&) const = default;
};

using MemoryEntryPtr = std::shared_ptr<const MemoryEntry>;

struct ReducerParams {
    std::string kind = "random_projection";  // or "identity"
    std::uint64_t seed = 42;
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;

    bool operator==(const ReducerParams&) const = default;
};

struct ClusterParams {
    double eps = 0.4;
    std::size_t min_pts = 5;

    bool operator==(const ClusterParams&) const = default;
};

struct WeightedKeyword {
    std::string word;
    double weight = 0.0;

    bool operator==(const WeightedKeyword&) const = default;
};

struct ClusterAssignment {
    std::string student_id;
    ClusterId cluster_id;
    double distance_to_centroid = 0.0;  // cosine distance, [0,2]

    bool operator==(const ClusterAssignment&) const = default;
};

struct SchemaModel {
    std::uint64_t seed = 42;
    std::string provider_name;
    std::size_t dimension = 0;  // provider embedding dimension D
    ReducerParams reducer_params;
    ClusterParams cluster_params;
    std::vector<EmbeddingVector> centroids;  // reduced space, unit norm
    std::vector<std::vector<WeightedKeyword>> keywords;  // per cluster, ranked
    EmbeddingVector global_mean;  // reduced space; anchors the GENERIC pool
    // Training memberships from the fit (noise points are GENERIC), in
    // student_id order. Used to pick memory-bank prototypes.
    std::vector<ClusterAssignment> members;

    std::size_t num_clusters() const noexcept { return centroids.size(); }
    void validate() const;

    bool operator==(const SchemaModel&) const = default;
};

struct RetrievalCandidate {
    MemoryEntryPtr entry;
    double dense_raw = 0.0;  // cosine before normalization
    double sparse_raw = 0.0;  // BM25 before normalization
    double dense_score = 0.0;  // [0,1]
    double sparse_score = 0.0;  // [0,1]
    double fused_score = 0.0;  // alpha*dense + (1-alpha)*sparse
};

struct SpikeConfig {
    std::size_t streak_len = 3;
    std::optional<double> delta;  // nullopt = derive from retrieved paradigms
    double delta_min = 0.2;
    double delta_max = 0.6;
    double delta_fallback = 0.5;

    void validate() const;
};

enum class Constraint { SpikeRule };
std::string_view to_string(Constraint constraint);

struct PredictionRecord {
    std::string student_id;
    double probability = 0.5;  // after logic enforcement
    double raw_probability = 0.5;  // predictor output
    int label = 1;  // probability >= 0.5
    std::string reasoning_trace;
    std::vector<Constraint> constraints_fired;
    bool spike_clamped = false;  // probability was lowered to satisfy the Spike Rule
    double delta = 0.5;
    bool predictor_fallback = false;  // heuristic substituted for an unusable LLM response
    ClusterId routed_cluster;
    std::vector<std::string> retrieved_ids;
    std::optional<int> outcome;  // ground truth, when known

    bool fired(Constraint c) const;
    bool operator==(const PredictionRecord&) const = default;
};

inline constexpr double kDecisionThreshold = 0.5;

}  // namespace pkt
