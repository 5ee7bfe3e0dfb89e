#include "pkt/eval.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "pkt/error.hpp"
#include "pkt/parallel.hpp"

namespace pkt::eval {

double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    if (labels.size() != scores.size()) throw data_error("LengthMismatch", "labels and scores differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (auto k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                positive_rank_sum += avg_rank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = labels.size() - positives;
    if (positives == 0 || negatives == 0) throw data_error("SingleClass", "AUC needs both classes");
    const double p = static_cast<double>(positives);
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

Classification acc_f1(const std::vector<int>& labels, const std::vector<double>& scores, double threshold) {
    if (labels.size() != scores.size()) throw data_error("LengthMismatch", "labels and scores differ in length");
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        const bool actual = labels[i] == 1;
        if (predicted && actual) ++tp;
        else if (predicted) ++fp;
        else if (actual) ++fn;
        else ++tn;
    }
    Classification out;
    if (!labels.empty()) out.acc = static_cast<double>(tp + tn) / static_cast<double>(labels.size());
    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    out.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return out;
}

std::string AblationFlags::name() const {
    std::vector<std::string> parts;
    if (no_retrieval) parts.emplace_back("no_retrieval");
    if (no_routing) parts.emplace_back("no_routing");
    if (no_traces) parts.emplace_back("no_traces");
    if (no_logic) parts.emplace_back("no_logic");
    if (parts.empty()) return "full";
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : "+") + p;
    return out;
}

inference::InferenceOptions AblationFlags::apply(inference::InferenceOptions base) const {
    base.use_retrieval = base.use_retrieval && !no_retrieval;
    base.use_routing = base.use_routing && !no_routing;
    base.use_traces = base.use_traces && !no_traces;
    base.use_logic = base.use_logic && !no_logic;
    return base;
}

std::vector<AblationFlags> standard_variants() {
    return {{}, {.no_routing = true}, {.no_traces = true}, {.no_logic = true}, {.no_retrieval = true}};
}

EvalResult evaluate_split(const std::vector<StudentSequence>& test, const inference::Engine& engine,
                          const inference::Predictor& predictor, const AblationFlags& flags,
                          const EvalOptions& options) {
    struct Task {
        StudentSequence history;
        const Interaction* target;
    };
    std::vector<Task> tasks;
    for (const auto& seq : test) {
        if (seq.size() < 2) {
            throw data_error("SequenceTooShort", fmt::format("test sequence '{}' has no history", seq.student_id()));
        }
        const std::size_t first = options.per_step ? 1 : seq.size() - 1;
        for (auto t = first; t < seq.size(); ++t) tasks.push_back({seq.prefix(t), &seq.interactions()[t]});
    }
    const auto inference_options = flags.apply(options.inference);

    std::vector<EmbeddingVector> embeddings;
    if (inference_options.use_retrieval && !tasks.empty()) {
        std::vector<StudentSequence> histories;
        histories.reserve(tasks.size());
        for (const auto& t : tasks) histories.push_back(t.history);
        embeddings = embed::embed_sequences(histories, engine.provider());
    }

    std::vector<inference::PredictionTrace> traces(tasks.size());
    parallel_for(tasks.size(), options.workers, [&](std::size_t i) {
        std::optional<EmbeddingVector> embedding;
        if (!embeddings.empty()) embedding = embeddings[i];
        traces[i] = inference::predict(tasks[i].history, *tasks[i].target, engine, predictor, inference_options,
                                       embedding);
        traces[i].record.outcome = tasks[i].target->correct() ? 1 : 0;
    });

    EvalResult result;
    std::set<ClusterId> clusters;
    std::vector<int> labels;
    std::vector<double> scores;
    std::size_t spike_fires = 0, clamped = 0, fallbacks = 0;
    for (auto& trace : traces) {
        result.retrieval_calls += trace.retrieval_called ? 1 : 0;
        result.memory_free += trace.memory_free ? 1 : 0;
        result.history_too_short += trace.history_too_short ? 1 : 0;
        for (const auto& c : trace.candidates) clusters.insert(c.entry->cluster_id);
        const auto& r = trace.record;
        spike_fires += r.fired(Constraint::SpikeRule) ? 1 : 0;
        clamped += r.spike_clamped ? 1 : 0;
        fallbacks += r.predictor_fallback ? 1 : 0;
        labels.push_back(*r.outcome);
        scores.push_back(r.probability);
        result.records.push_back(std::move(trace.record));
    }
    result.candidate_clusters.assign(clusters.begin(), clusters.end());

    auto& report = result.report;
    report["variant"] = flags.name();
    report["flags"] = {{"no_retrieval", flags.no_retrieval},
                       {"no_routing", flags.no_routing},
                       {"no_traces", flags.no_traces},
                       {"no_logic", flags.no_logic}};
    report["n_predictions"] = result.records.size();
    report["positives"] = std::count(labels.begin(), labels.end(), 1);
    try {
        report["auc"] = auc(labels, scores);
    } catch (const Error& e) {
        if (e.code() != "SingleClass") throw;
        report["auc"] = nullptr;
        report["auc_note"] = "AUC undefined: the evaluated outcomes contain a single class";
    }
    const auto cls = acc_f1(labels, scores);
    report["acc"] = cls.acc;
    report["f1"] = cls.f1;
    report["constraint_fires"] = {{std::string(to_string(Constraint::SpikeRule)), spike_fires}};
    report["spike_clamped"] = clamped;
    report["predictor_fallbacks"] = fallbacks;
    report["retrieval_calls"] = result.retrieval_calls;
    report["memory_free"] = result.memory_free;
    report["history_too_short"] = result.history_too_short;
    report["per_step"] = options.per_step;
    return result;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string predictions_csv(const std::vector<PredictionRecord>& records) {
    std::string out = "student_id,probability,raw_probability,label,outcome,constraints_fired,retrieved_ids\n";
    for (const auto& r : records) {
        std::string fired;
        for (auto c : r.constraints_fired) fired += (fired.empty() ? "" : ";") + std::string(to_string(c));
        std::string ids;
        for (const auto& id : r.retrieved_ids) ids += (ids.empty() ? "" : ";") + id;
        out += fmt::format("{},{},{},{},{},{},{}\n", csv_field(r.student_id), r.probability, r.raw_probability,
                           r.label, r.outcome ? std::to_string(*r.outcome) : std::string(), csv_field(fired),
                           csv_field(ids));
    }
    return out;
}

std::string ablation_table(const std::vector<nlohmann::json>& reports) {
    auto metric = [](const nlohmann::json& r, const char* key) {
        const auto& v = r.at(key);
        return v.is_null() ? std::string("n/a") : fmt::format("{:.4f}", v.get<double>());
    };
    std::string out = fmt::format("{:<28} {:>8} {:>8} {:>8}\n", "variant", "AUC", "ACC", "F1");
    for (const auto& r : reports) {
        out += fmt::format("{:<28} {:>8} {:>8} {:>8}\n", r.at("variant").get<std::string>(), metric(r, "auc"),
                           metric(r, "acc"), metric(r, "f1"));
    }
    return out;
}

}  // namespace pkt::eval
