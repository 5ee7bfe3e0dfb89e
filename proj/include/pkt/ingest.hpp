#pragma once
// Interaction-log ingestion: CSV parsing, difficulty estimation, length
// filtering/truncation and the leak-free temporal split.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pkt/types.hpp"

namespace pkt::ingest {

struct RawRecord {
    std::string student_id;
    std::int64_t timestamp = 0;
    std::string item_id;
    std::string exercise_text;
    std::string concept_tags;  // ';'-joined
    bool correct = false;
    std::optional<double> difficulty;
    std::size_t line = 0;  // 1-based line in the source file
};

struct FormatConfig {
    char delimiter = ',';
    char tag_separator = ';';
    double max_malformed_fraction = 0.01;
};

struct ParseResult {
    std::vector<RawRecord> records;
    std::size_t malformed_rows = 0;
    std::vector<std::size_t> malformed_lines;
};

inline const std::vector<std::string> kRequiredColumns = {"student_id",    "timestamp",    "item_id",
                                                          "exercise_text", "concept_tags", "correct"};

ParseResult parse_corpus(const std::string& path, const FormatConfig& config = {});
ParseResult parse_corpus_text(const std::string& text, const FormatConfig& config = {});

std::vector<std::string> split_tags(const std::string& joined, char separator = ';');

class DifficultyMap {
public:
    DifficultyMap() = default;
    DifficultyMap(std::map<std::string, double> per_item, double global_mean)
        : per_item_(std::move(per_item)), global_mean_(global_mean) {}

    // Unknown items fall back to the global mean.
    double lookup(const std::string& item_id) const;
    bool contains(const std::string& item_id) const { return per_item_.count(item_id) != 0; }
    const std::map<std::string, double>& items() const noexcept { return per_item_; }
    double global_mean() const noexcept { return global_mean_; }

private:
    std::map<std::string, double> per_item_;
    double global_mean_ = 0.5;
};

// 1 - (correct + s) / (attempts + 2s) per item.
DifficultyMap estimate_difficulty(const std::vector<RawRecord>& records, double smoothing = 1.0);

struct RawSequence {
    std::string student_id;
    std::vector<RawRecord> records;  // temporal order

    std::int64_t representative_timestamp() const { return records.back().timestamp; }
};

struct PreprocessLimits {
    std::size_t min_length = 5;
    std::size_t max_length = 50;
};

struct PreprocessReport {
    std::size_t students = 0;
    std::size_t dropped_short = 0;
    std::size_t truncated = 0;
};

// Groups by student, sorts each student's records by timestamp (stable),
// drops students below the minimum and keeps the most recent max_length.
std::vector<RawSequence> preprocess(const std::vector<RawRecord>& records, const PreprocessLimits& limits = {},
                                    PreprocessReport* report = nullptr);

// Earliest ceil(ratio * n) sequences by last timestamp (ties by student_id)
// form the train split.
std::pair<std::vector<RawSequence>, std::vector<RawSequence>> temporal_split(std::vector<RawSequence> sequences,
                                                                             double ratio = 0.8);

StudentSequence materialize(const RawSequence& raw, const DifficultyMap& difficulty, Split split,
                            char tag_separator = ';');

struct IngestConfig {
    FormatConfig format;
    PreprocessLimits limits;
    double split_ratio = 0.8;
    double smoothing = 1.0;
};

struct CorpusStats {
    std::size_t responses = 0;
    std::size_t sequences = 0;
    std::size_t questions = 0;
    std::size_t concepts = 0;
};

CorpusStats corpus_stats(const std::vector<StudentSequence>& sequences);

struct IngestResult {
    std::vector<StudentSequence> train;
    std::vector<StudentSequence> test;
    DifficultyMap difficulty;
    nlohmann::json report;
};

IngestResult run_ingest(const ParseResult& parsed, const IngestConfig& config = {});

}  // namespace pkt::ingest
