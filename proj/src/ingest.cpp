#include "pkt/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "pkt/error.hpp"
#include "pkt/serialization.hpp"

namespace pkt::ingest {

namespace {

// RFC 4180 style: quoted fields may contain the delimiter, newlines and
// doubled quotes. Returns false at end of input.
bool next_row(std::string_view text, std::size_t& pos, char delim, std::vector<std::string>& fields,
              std::size_t& line, std::size_t& row_line) {
    fields.clear();
    if (pos >= text.size()) return false;
    row_line = line;
    std::string field;
    bool quoted = false;
    while (pos < text.size()) {
        const char c = text[pos++];
        if (quoted) {
            if (c == '"') {
                if (pos < text.size() && text[pos] == '"') {
                    field.push_back('"');
                    ++pos;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            ++line;
            break;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    fields.push_back(std::move(field));
    return true;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

template <typename T>
std::optional<T> parse_number(const std::string& s) {
    T value{};
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
    return value;
}

}  // namespace

ParseResult parse_corpus(const std::string& path, const FormatConfig& config) {
    return parse_corpus_text(io::read_text_file(path), config);
}

ParseResult parse_corpus_text(const std::string& text, const FormatConfig& config) {
    std::size_t pos = 0;
    std::size_t line = 1;
    std::size_t row_line = 1;
    std::vector<std::string> fields;
    // Strip a UTF-8 BOM.
    if (text.rfind("\xEF\xBB\xBF", 0) == 0) pos = 3;
    if (!next_row(text, pos, config.delimiter, fields, line, row_line)) {
        throw data_error("EmptyCorpus", "corpus has no header row");
    }
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < fields.size(); ++i) column[trim(fields[i])] = i;
    for (const auto& name : kRequiredColumns) {
        if (!column.count(name)) throw data_error("MissingColumn", fmt::format("missing column '{}'", name));
    }
    const auto difficulty_col = column.count("difficulty") ? std::optional(column["difficulty"]) : std::nullopt;

    ParseResult result;
    std::size_t rows = 0;
    while (next_row(text, pos, config.delimiter, fields, line, row_line)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;
        ++rows;
        auto bad = [&] {
            ++result.malformed_rows;
            result.malformed_lines.push_back(row_line);
        };
        if (fields.size() != column.size()) {
            bad();
            continue;
        }
        RawRecord rec;
        rec.line = row_line;
        rec.student_id = trim(fields[column["student_id"]]);
        rec.item_id = trim(fields[column["item_id"]]);
        rec.exercise_text = trim(fields[column["exercise_text"]]);
        rec.concept_tags = trim(fields[column["concept_tags"]]);
        const auto ts = parse_number<std::int64_t>(trim(fields[column["timestamp"]]));
        const auto correct = trim(fields[column["correct"]]);
        if (rec.student_id.empty() || rec.exercise_text.empty() || !ts || (correct != "0" && correct != "1")) {
            bad();
            continue;
        }
        rec.timestamp = *ts;
        rec.correct = correct == "1";
        if (difficulty_col) {
            const auto d_text = trim(fields[*difficulty_col]);
            if (!d_text.empty()) {
                const auto d = parse_number<double>(d_text);
                if (!d || !std::isfinite(*d) || *d < 0.0 || *d > 1.0) {
                    bad();
                    continue;
                }
                rec.difficulty = *d;
            }
        }
        result.records.push_back(std::move(rec));
    }
    if (rows == 0 || result.records.empty()) throw data_error("EmptyCorpus", "corpus contains no data rows");
    if (static_cast<double>(result.malformed_rows) > config.max_malformed_fraction * static_cast<double>(rows)) {
        throw data_error("MalformedRowLimitExceeded",
                         fmt::format("{} of {} rows are malformed (limit {:.1f}%)", result.malformed_rows, rows,
                                     100.0 * config.max_malformed_fraction));
    }
    return result;
}

std::vector<std::string> split_tags(const std::string& joined, char separator) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= joined.size()) {
        auto end = joined.find(separator, start);
        if (end == std::string::npos) end = joined.size();
        auto tag = trim(joined.substr(start, end - start));
        if (!tag.empty()) out.push_back(std::move(tag));
        start = end + 1;
    }
    return out;
}

double DifficultyMap::lookup(const std::string& item_id) const {
    auto it = per_item_.find(item_id);
    return it == per_item_.end() ? global_mean_ : it->second;
}

DifficultyMap estimate_difficulty(const std::vector<RawRecord>& records, double smoothing) {
    if (records.empty()) throw data_error("EmptyCorpus", "cannot estimate difficulty from no records");
    if (smoothing < 0.0) throw usage_error("InvalidConfig", "difficulty smoothing must be >= 0");
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // item -> (correct, attempts)
    for (const auto& r : records) {
        auto& c = counts[r.item_id];
        c.first += r.correct ? 1 : 0;
        c.second += 1;
    }
    std::map<std::string, double> per_item;
    double sum = 0.0;
    for (const auto& [item, c] : counts) {
        const double d = 1.0 - (static_cast<double>(c.first) + smoothing) /
                                   (static_cast<double>(c.second) + 2.0 * smoothing);
        per_item[item] = std::clamp(d, 0.0, 1.0);
        sum += per_item[item];
    }
    return DifficultyMap(std::move(per_item), sum / static_cast<double>(counts.size()));
}

std::vector<RawSequence> preprocess(const std::vector<RawRecord>& records, const PreprocessLimits& limits,
                                    PreprocessReport* report) {
    std::map<std::string, std::vector<RawRecord>> by_student;
    for (const auto& r : records) by_student[r.student_id].push_back(r);

    PreprocessReport local;
    std::vector<RawSequence> out;
    for (auto& [student, recs] : by_student) {
        ++local.students;
        std::stable_sort(recs.begin(), recs.end(),
                         [](const RawRecord& a, const RawRecord& b) { return a.timestamp < b.timestamp; });
        if (recs.size() < limits.min_length) {
            ++local.dropped_short;
            continue;
        }
        if (recs.size() > limits.max_length) {
            ++local.truncated;
            recs.erase(recs.begin(), recs.end() - static_cast<long>(limits.max_length));
        }
        out.push_back({student, std::move(recs)});
    }
    if (report) *report = local;
    return out;
}

std::pair<std::vector<RawSequence>, std::vector<RawSequence>> temporal_split(std::vector<RawSequence> sequences,
                                                                             double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw usage_error("InvalidConfig", "split ratio must be in (0,1)");
    const std::size_t n = sequences.size();
    const auto n_train = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
    if (n_train == 0 || n_train >= n) {
        throw data_error("DegenerateSplit",
                         fmt::format("{} sequences cannot be split {}/{}", n, ratio, 1.0 - ratio));
    }
    std::sort(sequences.begin(), sequences.end(), [](const RawSequence& a, const RawSequence& b) {
        const auto ta = a.representative_timestamp();
        const auto tb = b.representative_timestamp();
        return ta != tb ? ta < tb : a.student_id < b.student_id;
    });
    std::vector<RawSequence> test(std::make_move_iterator(sequences.begin() + static_cast<long>(n_train)),
                                  std::make_move_iterator(sequences.end()));
    sequences.resize(n_train);
    return {std::move(sequences), std::move(test)};
}

StudentSequence materialize(const RawSequence& raw, const DifficultyMap& difficulty, Split split,
                            char tag_separator) {
    std::vector<Interaction> items;
    items.reserve(raw.records.size());
    for (const auto& r : raw.records) {
        items.emplace_back(r.exercise_text, split_tags(r.concept_tags, tag_separator), r.correct,
                           r.difficulty.value_or(difficulty.lookup(r.item_id)), r.item_id, r.timestamp);
    }
    return StudentSequence(raw.student_id, std::move(items), split);
}

CorpusStats corpus_stats(const std::vector<StudentSequence>& sequences) {
    CorpusStats stats;
    std::set<std::string> questions;
    std::set<std::string> concepts;
    for (const auto& s : sequences) {
        ++stats.sequences;
        stats.responses += s.size();
        for (const auto& it : s.interactions()) {
            questions.insert(it.item_id());
            concepts.insert(it.concept_tags().begin(), it.concept_tags().end());
        }
    }
    stats.questions = questions.size();
    stats.concepts = concepts.size();
    return stats;
}

namespace {

nlohmann::json stats_json(const CorpusStats& s) {
    return {{"responses", s.responses}, {"sequences", s.sequences}, {"questions", s.questions}, {"concepts", s.concepts}};
}

}  // namespace

IngestResult run_ingest(const ParseResult& parsed, const IngestConfig& config) {
    PreprocessReport pre;
    auto sequences = preprocess(parsed.records, config.limits, &pre);
    auto [train_raw, test_raw] = temporal_split(std::move(sequences), config.split_ratio);

    // Difficulty is estimated from train interactions only.
    std::vector<RawRecord> train_records;
    for (const auto& s : train_raw) train_records.insert(train_records.end(), s.records.begin(), s.records.end());

    IngestResult result;
    result.difficulty = estimate_difficulty(train_records, config.smoothing);
    const char sep = config.format.tag_separator;
    for (const auto& s : train_raw) result.train.push_back(materialize(s, result.difficulty, Split::Train, sep));
    for (const auto& s : test_raw) result.test.push_back(materialize(s, result.difficulty, Split::Test, sep));

    std::vector<StudentSequence> all = result.train;
    all.insert(all.end(), result.test.begin(), result.test.end());

    std::int64_t max_train = result.train.front().back().timestamp();
    for (const auto& s : result.train) max_train = std::max(max_train, s.back().timestamp());
    std::int64_t min_test = result.test.front().back().timestamp();
    for (const auto& s : result.test) min_test = std::min(min_test, s.back().timestamp());

    result.report = {{"rows_parsed", parsed.records.size() + parsed.malformed_rows},
                     {"records", parsed.records.size()},
                     {"malformed_rows", parsed.malformed_rows},
                     {"students", pre.students},
                     {"dropped_short", pre.dropped_short},
                     {"truncated", pre.truncated},
                     {"min_length", config.limits.min_length},
                     {"max_length", config.limits.max_length},
                     {"split_ratio", config.split_ratio},
                     {"max_train_timestamp", max_train},
                     {"min_test_timestamp", min_test},
                     {"total", stats_json(corpus_stats(all))},
                     {"train", stats_json(corpus_stats(result.train))},
                     {"test", stats_json(corpus_stats(result.test))}};
    return result;
}

}  // namespace pkt::ingest
