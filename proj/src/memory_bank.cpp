#include "pkt/memory_bank.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

#include "pkt/calibration.hpp"
#include "pkt/error.hpp"
#include "pkt/parallel.hpp"
#include "pkt/prompts.hpp"
#include "pkt/schema.hpp"
#include "pkt/serialization.hpp"

namespace pkt::bank {

namespace {

struct HistoryStats {
    std::size_t n = 0;
    std::size_t correct = 0;
    std::size_t tag_counts[3] = {0, 0, 0};
    double mean_difficulty = 0.0;
    std::size_t concept_attempts = 0;
    std::size_t concept_correct = 0;

    double accuracy() const { return n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0; }
    double concept_accuracy() const {
        return concept_attempts ? static_cast<double>(concept_correct) / static_cast<double>(concept_attempts) : 0.0;
    }
};

bool shares_concept(const Interaction& a, const Interaction& target) {
    if (target.concept_tags().empty()) return a.exercise_text() == target.exercise_text();
    for (const auto& tag : a.concept_tags()) {
        if (std::find(target.concept_tags().begin(), target.concept_tags().end(), tag) != target.concept_tags().end()) {
            return true;
        }
    }
    return false;
}

HistoryStats history_stats(const StudentSequence& history, const Interaction& target) {
    HistoryStats s;
    double sum = 0.0;
    for (const auto& it : history.interactions()) {
        ++s.n;
        s.correct += it.correct() ? 1 : 0;
        ++s.tag_counts[static_cast<int>(difficulty_tag(it.difficulty()))];
        sum += it.difficulty();
        if (shares_concept(it, target)) {
            ++s.concept_attempts;
            s.concept_correct += it.correct() ? 1 : 0;
        }
    }
    s.mean_difficulty = s.n ? sum / static_cast<double>(s.n) : 0.0;
    return s;
}

std::string concept_label(const Interaction& target) {
    if (target.concept_tags().empty()) return target.exercise_text();
    std::string out;
    for (const auto& t : target.concept_tags()) out += (out.empty() ? "" : ", ") + t;
    return out;
}

bool recent_easy_streak(const StudentSequence& history, std::size_t k) {
    const auto& items = history.interactions();
    if (items.size() < k) return false;
    for (std::size_t i = items.size() - k; i < items.size(); ++i) {
        if (!items[i].correct() || difficulty_tag(items[i].difficulty()) == DifficultyTag::Hard) return false;
    }
    return true;
}

}  // namespace

Annotation rule_annotate(const StudentSequence& history, const Interaction& target, bool outcome) {
    const auto stats = history_stats(history, target);
    const auto tag = difficulty_tag(target.difficulty());
    const double acc = stats.accuracy();

    KeyPattern pattern;
    if (!outcome && tag == DifficultyTag::Hard && recent_easy_streak(history, 3)) {
        pattern = KeyPattern::DifficultySpikeFailure;
    } else if (!outcome && tag == DifficultyTag::Easy && acc >= 0.7) {
        pattern = KeyPattern::CarelessSlip;
    } else if (!outcome && stats.concept_accuracy() < 0.5) {
        pattern = KeyPattern::ConceptGaps;
    } else if (outcome && tag == DifficultyTag::Hard && acc < 0.4) {
        pattern = KeyPattern::LuckyGuess;
    } else {
        pattern = outcome ? KeyPattern::SolidMastery : KeyPattern::ConceptGaps;
    }

    const auto concept_part =
        stats.concept_attempts
            ? fmt::format("{:.0f}% on {} ({} attempts)", 100.0 * stats.concept_accuracy(), concept_label(target),
                          stats.concept_attempts)
            : fmt::format("no prior attempts on {}", concept_label(target));
    auto knowledge = fmt::format(
        "Overall accuracy {:.0f}% over {} items ({} [EASY], {} [MEDIUM], {} [HARD]); {}.", 100.0 * acc, stats.n,
        stats.tag_counts[0], stats.tag_counts[1], stats.tag_counts[2], concept_part);

    std::string relative;
    if (target.difficulty() > stats.mean_difficulty + 0.25) {
        relative = "significantly harder than previous items";
    } else if (target.difficulty() < stats.mean_difficulty - 0.25) {
        relative = "easier than previous items";
    } else {
        relative = "in line with previous items";
    }
    auto context = fmt::format("Target is {} ({:.2f}) while history averages {:.2f}: {}.", to_string(tag),
                               target.difficulty(), stats.mean_difficulty, relative);

    std::string reasoning;
    std::string summary;
    switch (pattern) {
        case KeyPattern::DifficultySpikeFailure:
            reasoning = fmt::format(
                "The last three answers were correct on non-[HARD] items, so the streak says little about "
                "{}-level work. The target jumps from a history mean of {:.2f} to {:.2f} and the student failed it: "
                "the streak did not transfer across the difficulty spike.",
                to_string(tag), stats.mean_difficulty, target.difficulty());
            summary = "Failure after an easy streak when difficulty spiked.";
            break;
        case KeyPattern::CarelessSlip:
            reasoning = fmt::format(
                "Accuracy of {:.0f}% shows the material is known, yet an [EASY] item was missed. The error is "
                "inconsistent with the demonstrated level and reads as a slip rather than a gap.",
                100.0 * acc);
            summary = "Unexpected miss on an easy item by a strong student.";
            break;
        case KeyPattern::ConceptGaps:
            reasoning = fmt::format(
                "Performance on the target concept is weak ({}). Without a working grasp of {} the student could "
                "not answer, independent of the {} difficulty.",
                concept_part, concept_label(target), to_string(tag));
            summary = fmt::format("Failure rooted in a gap on {}.", concept_label(target));
            break;
        case KeyPattern::LuckyGuess:
            reasoning = fmt::format(
                "Overall accuracy is only {:.0f}% and the target is {}. A correct answer is not supported by the "
                "history, so it most likely reflects a guess.",
                100.0 * acc, to_string(tag));
            summary = "Correct on a hard item despite a weak history.";
            break;
        case KeyPattern::SolidMastery:
            reasoning = fmt::format(
                "Accuracy of {:.0f}% across difficulties ({}) supports the correct answer on a {} target.",
                100.0 * acc, concept_part, to_string(tag));
            summary = "Consistent success backed by the history.";
            break;
    }
    return Annotation(std::move(knowledge), pattern, std::move(context), std::move(reasoning), std::move(summary));
}

std::optional<Annotation> parse_annotation(std::string_view reply) {
    const auto obj = llm::extract_json_object(reply);
    if (!obj) return std::nullopt;
    auto text = [&](const char* key) -> std::string {
        auto it = obj->find(key);
        return (it != obj->end() && it->is_string()) ? it->get<std::string>() : std::string();
    };
    const auto pattern = parse_key_pattern(text("key_pattern"));
    if (!pattern) return std::nullopt;
    try {
        return Annotation(text("knowledge_state"), *pattern, text("difficulty_context"), text("causal_reasoning"),
                          text("summary"));
    } catch (const Error&) {
        return std::nullopt;
    }
}

Annotation llm_annotate(const StudentSequence& history, const Interaction& target, bool outcome,
                        const llm::ChatClient& client, int reprompts) {
    std::vector<llm::ChatMessage> messages{{"user", prompts::paradigm_prompt(history, target, outcome)}};
    for (int attempt = 0; attempt <= reprompts; ++attempt) {
        const auto reply = client.complete(messages);
        if (auto parsed = parse_annotation(reply)) return *parsed;
        messages.push_back({"assistant", reply});
        messages.push_back({"user",
                            "The reply was not a valid annotation. Respond with only the strict JSON object, with "
                            "non-empty knowledge_state, key_pattern, difficulty_context, causal_reasoning and summary; "
                            "key_pattern must be one of: Solid Mastery, Difficulty Spike Failure, Careless Slip, "
                            "Concept Gaps, Lucky Guess."});
    }
    throw data_error("MalformedAnnotation",
                     fmt::format("no valid annotation after {} attempts for student '{}'", reprompts + 1,
                                 history.student_id()));
}

MemoryBank::MemoryBank(std::vector<MemoryEntryPtr> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!by_id_.emplace(entries_[i]->entry_id, i).second) {
            throw data_error("DuplicateEntry", fmt::format("duplicate entry id '{}'", entries_[i]->entry_id));
        }
    }
}

std::vector<MemoryEntryPtr> MemoryBank::partition(ClusterId cluster) const {
    std::vector<MemoryEntryPtr> out;
    for (const auto& e : entries_) {
        if (e->cluster_id == cluster) out.push_back(e);
    }
    return out;
}

std::set<ClusterId> MemoryBank::cluster_ids() const {
    std::set<ClusterId> ids;
    for (const auto& e : entries_) ids.insert(e->cluster_id);
    return ids;
}

MemoryEntryPtr MemoryBank::find(const std::string& entry_id) const {
    auto it = by_id_.find(entry_id);
    return it == by_id_.end() ? nullptr : entries_[it->second];
}

std::map<ClusterId, std::vector<std::string>> select_prototypes(const std::vector<ClusterAssignment>& assignments,
                                                                const std::vector<EmbeddingVector>& reduced,
                                                                const SchemaModel& model, std::size_t k_bank) {
    if (assignments.size() != reduced.size()) {
        throw data_error("Misaligned", "assignments and reduced vectors differ in length");
    }
    using Ranked = std::pair<double, std::string>;
    std::map<ClusterId, std::vector<Ranked>> pools;
    for (const auto& a : assignments) {
        if (!a.cluster_id.is_generic()) pools[a.cluster_id].emplace_back(a.distance_to_centroid, a.student_id);
    }
    if (!model.global_mean.empty()) {
        auto& generic = pools[ClusterId::generic()];
        for (std::size_t i = 0; i < assignments.size(); ++i) {
            generic.emplace_back(schema::cosine_distance(reduced[i], model.global_mean), assignments[i].student_id);
        }
    }
    std::map<ClusterId, std::vector<std::string>> out;
    for (auto& [cluster, ranked] : pools) {
        const auto keep = std::min(k_bank, ranked.size());
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<long>(keep), ranked.end());
        auto& ids = out[cluster];
        for (std::size_t i = 0; i < keep; ++i) ids.push_back(ranked[i].second);
    }
    return out;
}

std::string entry_id_for(ClusterId cluster, const std::string& student_id) {
    return cluster.to_string() + ":" + student_id;
}

MemoryEntry make_entry(const StudentSequence& sequence, ClusterId cluster, const embed::EmbeddingProvider& provider,
                       const Annotator& annotator) {
    if (sequence.size() < 2) {
        throw data_error("SequenceTooShort", fmt::format("'{}' has no history before its target", sequence.student_id()));
    }
    auto history = sequence.prefix(sequence.size() - 1);
    const auto& target = sequence.back();
    auto annotation = annotator.annotate(history, target, target.correct());
    auto embedding = embed::embed_sequence(history, provider);
    MemoryEntry entry{entry_id_for(cluster, sequence.student_id()),
                      sequence.student_id(),
                      cluster,
                      std::move(history),
                      target,
                      target.correct(),
                      std::move(annotation),
                      std::move(embedding)};
    entry.validate();
    return entry;
}

MemoryBank build_bank(const std::vector<StudentSequence>& train, const SchemaModel& model,
                      const embed::EmbeddingProvider& provider, const Annotator& annotator,
                      const BuildOptions& options, BuildReport* report) {
    std::map<std::string, const StudentSequence*> by_student;
    for (const auto& s : train) {
        if (s.split() != Split::Train) {
            throw data_error("TestDataInBank", fmt::format("sequence '{}' is not from the train split", s.student_id()));
        }
        by_student[s.student_id()] = &s;
    }
    std::vector<StudentSequence> ordered;
    for (const auto& [id, s] : by_student) ordered.push_back(*s);

    // Memberships come from the fit; students the fit never saw are routed.
    const auto full = embed::embed_sequences(ordered, provider);
    std::vector<EmbeddingVector> reduced;
    std::vector<ClusterAssignment> assignments;
    std::map<std::string, ClusterAssignment> fitted;
    for (const auto& m : model.members) fitted.emplace(m.student_id, m);
    const schema::Router router(model, 0);
    const auto reducer = schema::make_reducer(model.reducer_params);
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        reduced.push_back(reducer->project(full[i]));
        auto it = fitted.find(ordered[i].student_id());
        assignments.push_back(it != fitted.end() ? it->second
                                                 : router.route(ordered[i].student_id(), ordered[i].size(), full[i]));
    }
    const auto prototypes = select_prototypes(assignments, reduced, model, options.k_bank);

    struct Job {
        ClusterId cluster;
        const StudentSequence* sequence;
    };
    std::vector<Job> jobs;
    for (const auto& [cluster, ids] : prototypes) {
        for (const auto& id : ids) {
            const auto* seq = by_student.at(id);
            if (seq->size() >= 2) jobs.push_back({cluster, seq});
        }
    }
    std::vector<StudentSequence> histories;
    for (const auto& job : jobs) histories.push_back(job.sequence->prefix(job.sequence->size() - 1));
    const auto embeddings = embed::embed_sequences(histories, provider);

    std::vector<std::optional<Annotation>> annotations(jobs.size());
    std::vector<std::string> failures(jobs.size());
    parallel_for(jobs.size(), options.workers, [&](std::size_t i) {
        const auto& target = jobs[i].sequence->back();
        try {
            annotations[i] = annotator.annotate(histories[i], target, target.correct());
        } catch (const Error& e) {
            failures[i] = e.code();
        } catch (const std::exception&) {
            failures[i] = "AnnotatorError";
        }
    });

    BuildReport local;
    std::vector<MemoryEntryPtr> entries;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& target = jobs[i].sequence->back();
        if (!annotations[i]) {
            ++local.fallbacks;
            ++local.failure_codes[failures[i]];
            annotations[i] = rule_annotate(histories[i], target, target.correct()).as_fallback();
        }
        auto entry = std::make_shared<MemoryEntry>(MemoryEntry{entry_id_for(jobs[i].cluster, jobs[i].sequence->student_id()),
                                                               jobs[i].sequence->student_id(), jobs[i].cluster,
                                                               histories[i], target, target.correct(),
                                                               *annotations[i], embeddings[i]});
        entry->validate();
        entries.push_back(std::move(entry));
    }
    local.entries = entries.size();
    if (report) *report = local;
    if (!jobs.empty() && static_cast<double>(jobs.size() - local.fallbacks) <
                             options.min_success_fraction * static_cast<double>(jobs.size())) {
        throw provider_error("BankBuildFailed",
                             fmt::format("only {} of {} annotations succeeded", jobs.size() - local.fallbacks,
                                         jobs.size()));
    }
    return MemoryBank(std::move(entries));
}

AppendResult append_entries(const MemoryBank& bank, std::vector<MemoryEntry> new_entries, std::size_t num_clusters) {
    AppendResult result;
    auto entries = bank.entries();
    for (auto& e : new_entries) {
        if (!e.cluster_id.is_generic() && static_cast<std::size_t>(e.cluster_id.value()) >= num_clusters) {
            if (e.entry_id == entry_id_for(e.cluster_id, e.student_id)) {
                e.entry_id = entry_id_for(ClusterId::generic(), e.student_id);
            }
            e.cluster_id = ClusterId::generic();
        }
        e.validate();
        result.affected.insert(e.cluster_id);
        entries.push_back(std::make_shared<const MemoryEntry>(std::move(e)));
    }
    result.bank = MemoryBank(std::move(entries));
    return result;
}

std::string bank_jsonl(const MemoryBank& bank) {
    std::string out;
    for (const auto& e : bank.entries()) {
        out += io::to_json(*e).dump();
        out += '\n';
    }
    return out;
}

void save_bank(const std::string& path, const MemoryBank& bank) { io::write_text_file(path, bank_jsonl(bank)); }

MemoryBank load_bank(const std::string& path) {
    std::vector<MemoryEntryPtr> entries;
    for (const auto& row : io::read_jsonl(path)) {
        entries.push_back(std::make_shared<const MemoryEntry>(io::memory_entry_from_json(row)));
    }
    return MemoryBank(std::move(entries));
}

}  // namespace pkt::bank
