#pragma once
// Interpretative memory bank: prototype selection, annotation and the
// partitioned store of annotated paradigms.

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pkt/embedding.hpp"
#include "pkt/llm.hpp"
#include "pkt/types.hpp"

namespace pkt::bank {

class Annotator {
public:
    virtual ~Annotator() = default;
    virtual std::string name() const = 0;
    // Must return a key pattern from the closed label set. May throw; the
    // bank builder substitutes a flagged rule annotation.
    virtual Annotation annotate(const StudentSequence& history, const Interaction& target, bool outcome) const = 0;
};

// Deterministic archetype rules, checked in order:
//   (a) fail, target HARD, last 3 history items correct and non-HARD -> Difficulty Spike Failure
//   (b) fail, target EASY, overall accuracy >= 0.7                    -> Careless Slip
//   (c) fail, accuracy on the target's concepts < 0.5                 -> Concept Gaps
//   (d) pass, target HARD, overall accuracy < 0.4                     -> Lucky Guess
//   (e) otherwise Solid Mastery on a pass, Concept Gaps on a fail
Annotation rule_annotate(const StudentSequence& history, const Interaction& target, bool outcome);

class RuleAnnotator final : public Annotator {
public:
    std::string name() const override { return "rule"; }
    Annotation annotate(const StudentSequence& history, const Interaction& target, bool outcome) const override {
        return rule_annotate(history, target, outcome);
    }
};

inline constexpr int kAnnotationReprompts = 2;

// Renders the paradigm-construction prompt, parses the strict-JSON reply
// and re-prompts up to `reprompts` times on malformed output. Throws
// MalformedAnnotation when every attempt fails, ProviderUnavailable on
// transport failure.
Annotation llm_annotate(const StudentSequence& history, const Interaction& target, bool outcome,
                        const llm::ChatClient& client, int reprompts = kAnnotationReprompts);

// Parses one model reply; nullopt when it is not a usable annotation.
std::optional<Annotation> parse_annotation(std::string_view reply);

class LlmAnnotator final : public Annotator {
public:
    explicit LlmAnnotator(std::shared_ptr<const llm::ChatClient> client) : client_(std::move(client)) {}
    std::string name() const override { return "llm:" + client_->name(); }
    Annotation annotate(const StudentSequence& history, const Interaction& target, bool outcome) const override {
        return llm_annotate(history, target, outcome, *client_);
    }

private:
    std::shared_ptr<const llm::ChatClient> client_;
};

class MemoryBank {
public:
    MemoryBank() = default;
    explicit MemoryBank(std::vector<MemoryEntryPtr> entries);

    const std::vector<MemoryEntryPtr>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    std::vector<MemoryEntryPtr> partition(ClusterId cluster) const;
    std::set<ClusterId> cluster_ids() const;
    MemoryEntryPtr find(const std::string& entry_id) const;

private:
    std::vector<MemoryEntryPtr> entries_;
    std::map<std::string, std::size_t> by_id_;
};

// Per cluster, the k_bank members nearest their centroid (ties: lower
// student_id). The GENERIC pool takes the k_bank training sequences nearest
// the global mean, so a student may appear in both. `reduced` is aligned
// with `assignments`.
std::map<ClusterId, std::vector<std::string>> select_prototypes(const std::vector<ClusterAssignment>& assignments,
                                                                const std::vector<EmbeddingVector>& reduced,
                                                                const SchemaModel& model, std::size_t k_bank = 100);

struct BuildOptions {
    std::size_t k_bank = 100;
    std::size_t workers = 4;
    double min_success_fraction = 0.5;
};

struct BuildReport {
    std::size_t entries = 0;
    std::size_t fallbacks = 0;
    std::map<std::string, std::size_t> failure_codes;
};

std::string entry_id_for(ClusterId cluster, const std::string& student_id);

// Target = last interaction, history = the preceding prefix, embedding of
// the history. Throws BankBuildFailed when fewer than min_success_fraction
// of the annotations succeed.
MemoryBank build_bank(const std::vector<StudentSequence>& train, const SchemaModel& model,
                      const embed::EmbeddingProvider& provider, const Annotator& annotator,
                      const BuildOptions& options = {}, BuildReport* report = nullptr);

// Builds one entry for an arbitrary (train) sequence with the rule annotator.
MemoryEntry make_entry(const StudentSequence& sequence, ClusterId cluster, const embed::EmbeddingProvider& provider,
                       const Annotator& annotator);

struct AppendResult {
    MemoryBank bank;
    std::set<ClusterId> affected;
};

// Returns a new snapshot holding every previous entry plus the new ones.
// Entries naming a cluster outside [0, num_clusters) are stored under
// GENERIC.
AppendResult append_entries(const MemoryBank& bank, std::vector<MemoryEntry> new_entries, std::size_t num_clusters);

void save_bank(const std::string& path, const MemoryBank& bank);
MemoryBank load_bank(const std::string& path);
std::string bank_jsonl(const MemoryBank& bank);

}  // namespace pkt::bank
