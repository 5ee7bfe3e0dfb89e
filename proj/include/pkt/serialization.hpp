#pragma once
// JSON codecs for the domain model. Field names here are the on-disk
// contract for sequence JSONL, bank JSONL, schema JSON and prediction JSON.

#include <nlohmann/json.hpp>

#include "pkt/types.hpp"

namespace pkt::io {

using nlohmann::json;

// `with_metadata` adds item_id and timestamp (ingest outputs carry them,
// bank histories do not).
json to_json(const Interaction& interaction, bool with_metadata = false);
Interaction interaction_from_json(const json& j);

json to_json(const StudentSequence& sequence);
StudentSequence sequence_from_json(const json& j);

json to_json(const Annotation& annotation);
Annotation annotation_from_json(const json& j);

json to_json(const EmbeddingVector& vector);
EmbeddingVector embedding_from_json(const json& j);

json to_json(const MemoryEntry& entry);
MemoryEntry memory_entry_from_json(const json& j);

json to_json(const SchemaModel& model);
SchemaModel schema_from_json(const json& j);

json to_json(const PredictionRecord& record);
PredictionRecord prediction_from_json(const json& j);

// Reads one JSON value per non-blank line.
std::vector<json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<json>& rows);

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& value);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

std::vector<StudentSequence> read_sequences(const std::string& path);
void write_sequences(const std::string& path, const std::vector<StudentSequence>& sequences);

}  // namespace pkt::io
