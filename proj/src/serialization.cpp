#include "pkt/serialization.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "pkt/error.hpp"

namespace pkt::io {

namespace {

// Shortest decimal form of a float, widened to the double with the same
// text so the JSON dump stays compact and reads back bit-exact.
double compact(float value) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    double out = 0.0;
    std::from_chars(buf, res.ptr, out);
    return out;
}

template <typename T>
T required(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw data_error("MissingField", fmt::format("missing field '{}'", key));
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw data_error("MalformedField", fmt::format("field '{}': {}", key, e.what()));
    }
}

int read_binary(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw data_error("MissingField", fmt::format("missing field '{}'", key));
    if (it->is_boolean()) return it->get<bool>() ? 1 : 0;
    const int v = it->get<int>();
    if (v != 0 && v != 1) throw data_error("MalformedField", fmt::format("field '{}' must be 0 or 1", key));
    return v;
}

}  // namespace

json to_json(const Interaction& interaction, bool with_metadata) {
    json j = {{"exercise_text", interaction.exercise_text()},
              {"concept_tags", interaction.concept_tags()},
              {"correct", interaction.correct() ? 1 : 0},
              {"difficulty", interaction.difficulty()}};
    if (with_metadata) {
        j["item_id"] = interaction.item_id();
        j["timestamp"] = interaction.timestamp();
    }
    return j;
}

Interaction interaction_from_json(const json& j) {
    return Interaction(required<std::string>(j, "exercise_text"),
                       j.value("concept_tags", std::vector<std::string>{}), read_binary(j, "correct") == 1,
                       required<double>(j, "difficulty"), j.value("item_id", std::string{}),
                       j.value("timestamp", std::int64_t{0}));
}

json to_json(const StudentSequence& sequence) {
    json items = json::array();
    for (const auto& it : sequence.interactions()) items.push_back(to_json(it, true));
    return {{"student_id", sequence.student_id()},
            {"split", std::string(to_string(sequence.split()))},
            {"interactions", std::move(items)}};
}

StudentSequence sequence_from_json(const json& j) {
    std::vector<Interaction> items;
    for (const auto& it : required<json>(j, "interactions")) items.push_back(interaction_from_json(it));
    return StudentSequence(required<std::string>(j, "student_id"), std::move(items),
                           parse_split(j.value("split", std::string("train"))));
}

json to_json(const Annotation& annotation) {
    return {{"knowledge_state", annotation.knowledge_state()},
            {"key_pattern", std::string(to_string(annotation.key_pattern()))},
            {"difficulty_context", annotation.difficulty_context()},
            {"causal_reasoning", annotation.causal_reasoning()},
            {"summary", annotation.summary()},
            {"fallback", annotation.fallback()}};
}

Annotation annotation_from_json(const json& j) {
    const auto label = required<std::string>(j, "key_pattern");
    const auto pattern = parse_key_pattern(label);
    if (!pattern) throw data_error("MalformedAnnotation", fmt::format("unknown key_pattern '{}'", label));
    return Annotation(required<std::string>(j, "knowledge_state"), *pattern,
                      required<std::string>(j, "difficulty_context"), required<std::string>(j, "causal_reasoning"),
                      required<std::string>(j, "summary"), j.value("fallback", false));
}

json to_json(const EmbeddingVector& vector) {
    json arr = json::array();
    for (float v : vector.values()) arr.push_back(compact(v));
    return arr;
}

EmbeddingVector embedding_from_json(const json& j) {
    if (!j.is_array()) throw data_error("MalformedField", "embedding must be an array");
    std::vector<float> values;
    values.reserve(j.size());
    for (const auto& v : j) values.push_back(v.get<float>());
    return EmbeddingVector::from_unit(std::move(values));
}

json to_json(const MemoryEntry& entry) {
    json history = json::array();
    for (const auto& it : entry.history.interactions()) history.push_back(to_json(it));
    return {{"entry_id", entry.entry_id},
            {"student_id", entry.student_id},
            {"cluster_id", entry.cluster_id.is_generic() ? json("generic") : json(entry.cluster_id.value())},
            {"history", std::move(history)},
            {"target", to_json(entry.target)},
            {"outcome", entry.outcome ? 1 : 0},
            {"annotation", to_json(entry.annotation)},
            {"embedding", to_json(entry.embedding)}};
}

MemoryEntry memory_entry_from_json(const json& j) {
    std::vector<Interaction> history;
    for (const auto& it : required<json>(j, "history")) history.push_back(interaction_from_json(it));
    const auto& cid = required<json>(j, "cluster_id");
    ClusterId cluster = cid.is_string() ? ClusterId::generic() : ClusterId(cid.get<int>());
    auto student = required<std::string>(j, "student_id");
    MemoryEntry entry{required<std::string>(j, "entry_id"),
                      student,
                      cluster,
                      StudentSequence(student, std::move(history), Split::Train),
                      interaction_from_json(required<json>(j, "target")),
                      read_binary(j, "outcome") == 1,
                      annotation_from_json(required<json>(j, "annotation")),
                      embedding_from_json(required<json>(j, "embedding"))};
    entry.validate();
    return entry;
}

namespace {

json members_json(const std::vector<ClusterAssignment>& members) {
    json arr = json::array();
    for (const auto& m : members) {
        arr.push_back({{"student_id", m.student_id},
                       {"cluster_id", m.cluster_id.is_generic() ? json("generic") : json(m.cluster_id.value())},
                       {"distance", m.distance_to_centroid}});
    }
    return arr;
}

}  // namespace

json to_json(const SchemaModel& model) {
    json centroids = json::array();
    for (const auto& c : model.centroids) centroids.push_back(to_json(c));
    json keywords = json::array();
    for (const auto& list : model.keywords) {
        json words = json::array();
        for (const auto& kw : list) words.push_back({{"word", kw.word}, {"weight", kw.weight}});
        keywords.push_back(std::move(words));
    }
    return {{"seed", model.seed},
            {"provider_name", model.provider_name},
            {"dimension", model.dimension},
            {"reducer_params",
             {{"kind", model.reducer_params.kind},
              {"seed", model.reducer_params.seed},
              {"input_dim", model.reducer_params.input_dim},
              {"output_dim", model.reducer_params.output_dim}}},
            {"cluster_params", {{"eps", model.cluster_params.eps}, {"min_pts", model.cluster_params.min_pts}}},
            {"centroids", std::move(centroids)},
            {"keywords", std::move(keywords)},
            {"global_mean", model.global_mean.empty() ? json(nullptr) : to_json(model.global_mean)},
            {"members", members_json(model.members)}};
}

SchemaModel schema_from_json(const json& j) {
    SchemaModel m;
    m.seed = required<std::uint64_t>(j, "seed");
    m.provider_name = required<std::string>(j, "provider_name");
    m.dimension = required<std::size_t>(j, "dimension");
    const auto& rp = required<json>(j, "reducer_params");
    m.reducer_params = {required<std::string>(rp, "kind"), required<std::uint64_t>(rp, "seed"),
                        required<std::size_t>(rp, "input_dim"), required<std::size_t>(rp, "output_dim")};
    const auto& cp = required<json>(j, "cluster_params");
    m.cluster_params = {required<double>(cp, "eps"), required<std::size_t>(cp, "min_pts")};
    for (const auto& c : required<json>(j, "centroids")) m.centroids.push_back(embedding_from_json(c));
    for (const auto& list : required<json>(j, "keywords")) {
        auto& out = m.keywords.emplace_back();
        for (const auto& kw : list) out.push_back({required<std::string>(kw, "word"), required<double>(kw, "weight")});
    }
    if (auto it = j.find("global_mean"); it != j.end() && !it->is_null()) m.global_mean = embedding_from_json(*it);
    if (auto it = j.find("members"); it != j.end()) {
        for (const auto& row : *it) {
            const auto& cid = required<json>(row, "cluster_id");
            m.members.push_back({required<std::string>(row, "student_id"),
                                 cid.is_string() ? ClusterId::generic() : ClusterId(cid.get<int>()),
                                 required<double>(row, "distance")});
        }
    }
    m.validate();
    return m;
}

json to_json(const PredictionRecord& record) {
    json fired = json::array();
    for (auto c : record.constraints_fired) fired.push_back(std::string(to_string(c)));
    json j = {{"student_id", record.student_id},
              {"probability", record.probability},
              {"raw_probability", record.raw_probability},
              {"label", record.label},
              {"reasoning_trace", record.reasoning_trace},
              {"constraints_fired", std::move(fired)},
              {"spike_clamped", record.spike_clamped},
              {"delta", record.delta},
              {"predictor_fallback", record.predictor_fallback},
              {"routed_cluster", record.routed_cluster.to_string()},
              {"retrieved_ids", record.retrieved_ids}};
    j["outcome"] = record.outcome ? json(*record.outcome) : json(nullptr);
    return j;
}

PredictionRecord prediction_from_json(const json& j) {
    PredictionRecord r;
    r.student_id = required<std::string>(j, "student_id");
    r.probability = required<double>(j, "probability");
    r.raw_probability = required<double>(j, "raw_probability");
    r.label = required<int>(j, "label");
    r.reasoning_trace = required<std::string>(j, "reasoning_trace");
    for (const auto& c : required<json>(j, "constraints_fired")) {
        if (c.get<std::string>() != "SpikeRule") throw data_error("MalformedField", "unknown constraint");
        r.constraints_fired.push_back(Constraint::SpikeRule);
    }
    r.spike_clamped = required<bool>(j, "spike_clamped");
    r.delta = required<double>(j, "delta");
    r.predictor_fallback = required<bool>(j, "predictor_fallback");
    const auto routed = required<std::string>(j, "routed_cluster");
    r.routed_cluster = routed == "generic" ? ClusterId::generic() : ClusterId(std::stoi(routed));
    r.retrieved_ids = required<std::vector<std::string>>(j, "retrieved_ids");
    if (auto it = j.find("outcome"); it != j.end() && !it->is_null()) r.outcome = it->get<int>();
    return r;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("FileNotFound", fmt::format("cannot open '{}'", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("WriteFailed", fmt::format("cannot write '{}'", path));
    out << text;
}

std::vector<json> read_jsonl(const std::string& path) {
    std::istringstream in(read_text_file(path));
    std::vector<json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw data_error("MalformedJson", fmt::format("{}:{}: {}", path, lineno, e.what()));
        }
    }
    return rows;
}

void write_jsonl(const std::string& path, const std::vector<json>& rows) {
    std::string text;
    for (const auto& row : rows) {
        text += row.dump();
        text += '\n';
    }
    write_text_file(path, text);
}

json read_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw data_error("MalformedJson", fmt::format("{}: {}", path, e.what()));
    }
}

void write_json_file(const std::string& path, const json& value) { write_text_file(path, value.dump(2) + "\n"); }

std::vector<StudentSequence> read_sequences(const std::string& path) {
    std::vector<StudentSequence> out;
    for (const auto& row : read_jsonl(path)) out.push_back(sequence_from_json(row));
    return out;
}

void write_sequences(const std::string& path, const std::vector<StudentSequence>& sequences) {
    std::vector<json> rows;
    rows.reserve(sequences.size());
    for (const auto& s : sequences) rows.push_back(to_json(s));
    write_jsonl(path, rows);
}

}  // namespace pkt::io
