#pragma once
// Workdir-based stage drivers shared by the CLI and the end-to-end tests.
//
// Layout under the workdir:
//   train.jsonl test.jsonl ingest_report.json difficulty.json
//   schema.json coordinates.csv
//   bank.jsonl bank_report.json
//   index/
//   report.json predictions.csv ablation.json ablation.txt

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "pkt/config.hpp"
#include "pkt/eval.hpp"
#include "pkt/inference.hpp"
#include "pkt/memory_bank.hpp"

namespace pkt::pipeline {

enum class ProviderMode { Offline, Remote };

struct Context {
    config::Settings settings;
    ProviderMode mode = ProviderMode::Offline;
    std::filesystem::path workdir = ".";
    std::function<void(const std::string&)> log;  // progress lines; may be empty

    std::filesystem::path file(const std::string& name) const { return workdir / name; }
    void info(const std::string& line) const {
        if (log) log(line);
    }
};

std::shared_ptr<const embed::EmbeddingProvider> make_provider(const Context& ctx);
std::shared_ptr<const bank::Annotator> make_annotator(const Context& ctx);
std::shared_ptr<const inference::Predictor> make_predictor(const Context& ctx);
inference::InferenceOptions inference_options(const config::Settings& settings);

// Each stage reads its inputs from the workdir, writes its outputs there and
// returns a short JSON summary.
nlohmann::json ingest(const Context& ctx, const std::string& csv_path);
nlohmann::json discover_schemas(const Context& ctx);
nlohmann::json build_bank(const Context& ctx);
nlohmann::json build_index(const Context& ctx);

// Loads schema, bank and index (building the index in memory when it was
// never persisted). Throws ProviderMismatch when the schema was fit with a
// different embedding provider.
inference::Engine load_engine(const Context& ctx);

// The last interaction of `sequence` is the prediction target.
inference::PredictionTrace predict(const Context& ctx, const StudentSequence& sequence);

// Writes report.json and predictions.csv; returns the report.
nlohmann::json evaluate(const Context& ctx, const eval::AblationFlags& flags = {});

// Runs the standard variants; writes ablation.json and ablation.txt.
nlohmann::json ablate(const Context& ctx);

}  // namespace pkt::pipeline
