#include "pkt/pipeline.hpp"

#include <fmt/format.h>

#include "pkt/error.hpp"
#include "pkt/ingest.hpp"
#include "pkt/llm.hpp"
#include "pkt/retrieval.hpp"
#include "pkt/schema.hpp"
#include "pkt/serialization.hpp"

namespace pkt::pipeline {

namespace {

http::RetryPolicy retry_policy(const config::Settings& s) {
    http::RetryPolicy retry;
    retry.attempts = static_cast<int>(std::max<std::size_t>(1, s.http_attempts));
    return retry;
}

std::shared_ptr<const llm::ChatClient> make_chat_client(const Context& ctx) {
    const auto& s = ctx.settings;
    if (s.llm_endpoint.empty()) throw usage_error("InvalidConfig", "llm.endpoint is required for the remote provider");
    llm::HttpChatConfig cfg;
    cfg.endpoint = s.llm_endpoint;
    cfg.model = s.llm_model;
    cfg.temperature = s.llm_temperature;
    cfg.retry = retry_policy(s);
    cfg.timeout = std::chrono::milliseconds(s.http_timeout_ms);
    return std::make_shared<llm::HttpChatClient>(cfg);
}

std::vector<StudentSequence> read_split(const Context& ctx, const char* name) {
    const auto path = ctx.file(name);
    if (!std::filesystem::exists(path)) {
        throw data_error("MissingArtifact", fmt::format("{} not found; run ingest first", path.string()));
    }
    return io::read_sequences(path.string());
}

SchemaModel read_schema(const Context& ctx) {
    const auto path = ctx.file("schema.json");
    if (!std::filesystem::exists(path)) {
        throw data_error("MissingArtifact", fmt::format("{} not found; run discover-schemas first", path.string()));
    }
    auto model = io::schema_from_json(io::read_json_file(path.string()));
    model.validate();
    return model;
}

bank::MemoryBank read_bank(const Context& ctx) {
    const auto path = ctx.file("bank.jsonl");
    if (!std::filesystem::exists(path)) {
        throw data_error("MissingArtifact", fmt::format("{} not found; run build-bank first", path.string()));
    }
    return bank::load_bank(path.string());
}

void check_provider(const SchemaModel& model, const embed::EmbeddingProvider& provider) {
    if (model.provider_name != provider.name() || model.dimension != provider.dimension()) {
        throw data_error("ProviderMismatch",
                         fmt::format("schema was fit with '{}' ({} dims) but the active provider is '{}' ({} dims)",
                                     model.provider_name, model.dimension, provider.name(), provider.dimension()));
    }
}

}  // namespace

std::shared_ptr<const embed::EmbeddingProvider> make_provider(const Context& ctx) {
    const auto& s = ctx.settings;
    if (ctx.mode == ProviderMode::Offline) return std::make_shared<embed::HashingProvider>(s.embed_dimension);
    embed::RemoteConfig cfg;
    cfg.endpoint = s.embed_endpoint;
    cfg.model = s.embed_model;
    cfg.dimension = s.embed_dimension;
    cfg.batch_size = s.embed_batch_size;
    cfg.max_in_flight = s.embed_max_in_flight;
    cfg.retry = retry_policy(s);
    cfg.timeout = std::chrono::milliseconds(s.http_timeout_ms);
    auto remote = std::make_shared<embed::RemoteProvider>(cfg);
    const auto cache = s.embed_cache_dir.empty() ? ctx.file("cache/embeddings") : std::filesystem::path(s.embed_cache_dir);
    return std::make_shared<embed::CachingProvider>(remote, cache);
}

std::shared_ptr<const bank::Annotator> make_annotator(const Context& ctx) {
    if (ctx.mode == ProviderMode::Offline) return std::make_shared<bank::RuleAnnotator>();
    return std::make_shared<bank::LlmAnnotator>(make_chat_client(ctx));
}

std::shared_ptr<const inference::Predictor> make_predictor(const Context& ctx) {
    auto kind = ctx.settings.predictor;
    if (kind == "auto") kind = ctx.mode == ProviderMode::Offline ? "memory" : "llm";
    if (kind == "heuristic") return std::make_shared<inference::HeuristicPredictor>();
    if (kind == "memory") return std::make_shared<inference::MemoryPredictor>(ctx.settings.memory_weight);
    if (ctx.mode == ProviderMode::Offline) {
        throw usage_error("InvalidConfig", "predictor.kind = llm needs --provider remote");
    }
    return std::make_shared<inference::LlmPredictor>(make_chat_client(ctx));
}

inference::InferenceOptions inference_options(const config::Settings& settings) {
    inference::InferenceOptions options;
    options.retrieval = settings.retrieval;
    options.spike = settings.spike;
    return options;
}

nlohmann::json ingest(const Context& ctx, const std::string& csv_path) {
    const auto& s = ctx.settings;
    const auto parsed = ingest::parse_corpus(csv_path, s.ingest.format);
    ctx.info(fmt::format("parsed {} records ({} malformed rows)", parsed.records.size(), parsed.malformed_rows));
    auto result = ingest::run_ingest(parsed, s.ingest);
    io::write_sequences(ctx.file("train.jsonl").string(), result.train);
    io::write_sequences(ctx.file("test.jsonl").string(), result.test);
    io::write_json_file(ctx.file("ingest_report.json").string(), result.report);
    io::write_json_file(ctx.file("difficulty.json").string(),
                        {{"global_mean", result.difficulty.global_mean()}, {"items", result.difficulty.items()}});
    ctx.info(fmt::format("train {} / test {} sequences", result.train.size(), result.test.size()));
    return result.report;
}

nlohmann::json discover_schemas(const Context& ctx) {
    const auto& s = ctx.settings;
    const auto train = read_split(ctx, "train.jsonl");
    const auto provider = make_provider(ctx);
    schema::FitOptions options;
    options.target_dim = s.reduced_dim;
    options.cluster_params = s.cluster;
    options.seed = s.seed;
    const auto fit = schema::fit_schema(train, *provider, options);
    io::write_json_file(ctx.file("schema.json").string(), io::to_json(fit.model));
    io::write_text_file(ctx.file("coordinates.csv").string(), schema::coordinates_csv(fit));

    std::size_t noise = 0;
    for (const auto& a : fit.assignments) noise += a.cluster_id.is_generic() ? 1 : 0;
    nlohmann::json clusters = nlohmann::json::array();
    for (std::size_t k = 0; k < fit.model.num_clusters(); ++k) {
        std::size_t members = 0;
        for (const auto& a : fit.assignments) members += a.cluster_id == ClusterId(static_cast<int>(k)) ? 1 : 0;
        nlohmann::json words = nlohmann::json::array();
        for (const auto& w : fit.model.keywords[k]) words.push_back(w.word);
        clusters.push_back({{"cluster_id", k}, {"members", members}, {"keywords", words}});
    }
    ctx.info(fmt::format("{} clusters, {} noise sequences", fit.model.num_clusters(), noise));
    return {{"clusters", clusters}, {"noise", noise}, {"sequences", fit.assignments.size()}};
}

nlohmann::json build_bank(const Context& ctx) {
    const auto train = read_split(ctx, "train.jsonl");
    const auto model = read_schema(ctx);
    const auto provider = make_provider(ctx);
    check_provider(model, *provider);
    const auto annotator = make_annotator(ctx);
    bank::BuildReport report;
    const auto memory = bank::build_bank(train, model, *provider, *annotator, ctx.settings.bank, &report);
    bank::save_bank(ctx.file("bank.jsonl").string(), memory);

    nlohmann::json partitions = nlohmann::json::object();
    for (const auto cluster : memory.cluster_ids()) partitions[cluster.to_string()] = memory.partition(cluster).size();
    nlohmann::json summary{{"entries", report.entries},
                           {"fallbacks", report.fallbacks},
                           {"failure_codes", report.failure_codes},
                           {"partitions", partitions},
                           {"annotator", annotator->name()}};
    io::write_json_file(ctx.file("bank_report.json").string(), summary);
    ctx.info(fmt::format("bank: {} entries, {} fallback annotations", report.entries, report.fallbacks));
    return summary;
}

nlohmann::json build_index(const Context& ctx) {
    const auto memory = read_bank(ctx);
    if (memory.empty()) throw data_error("EmptyBank", "the memory bank has no entries");
    const auto indices = retrieval::IndexSet::build(memory, ctx.settings.retrieval.bm25);
    retrieval::save_indices(ctx.file("index"), indices);
    nlohmann::json partitions = nlohmann::json::object();
    for (const auto cluster : indices.clusters()) {
        if (const auto* p = indices.partition(cluster)) partitions[cluster.to_string()] = p->size();
    }
    ctx.info(fmt::format("indexed {} partitions", partitions.size()));
    return {{"partitions", partitions}, {"entries", indices.total_entries()}};
}

inference::Engine load_engine(const Context& ctx) {
    auto model = read_schema(ctx);
    auto memory = read_bank(ctx);
    auto provider = make_provider(ctx);
    check_provider(model, *provider);
    retrieval::IndexSet indices;
    if (std::filesystem::exists(ctx.file("index") / "index.json")) {
        indices = retrieval::load_indices(ctx.file("index"), memory);
    } else {
        indices = retrieval::IndexSet::build(memory, ctx.settings.retrieval.bm25);
    }
    return inference::Engine(std::move(model), std::move(memory), std::move(indices), std::move(provider),
                             ctx.settings.cold_start_length);
}

inference::PredictionTrace predict(const Context& ctx, const StudentSequence& sequence) {
    if (sequence.size() < 2) {
        throw data_error("SequenceTooShort", "the input needs at least one history interaction before the target");
    }
    const auto engine = load_engine(ctx);
    const auto predictor = make_predictor(ctx);
    return inference::predict(sequence.prefix(sequence.size() - 1), sequence.back(), engine, *predictor,
                              inference_options(ctx.settings));
}

namespace {

nlohmann::json evaluate_with(const Context& ctx, const inference::Engine& engine, const inference::Predictor& predictor,
                             const std::vector<StudentSequence>& test, const eval::AblationFlags& flags,
                             std::vector<PredictionRecord>* records) {
    eval::EvalOptions options;
    options.inference = inference_options(ctx.settings);
    options.per_step = ctx.settings.per_step;
    options.workers = ctx.settings.eval_workers;
    auto result = eval::evaluate_split(test, engine, predictor, flags, options);
    auto report = std::move(result.report);
    report["provider"] = engine.provider().name();
    report["predictor"] = predictor.name();
    report["config"] = ctx.settings.snapshot();
    if (records) *records = std::move(result.records);
    return report;
}

}  // namespace

nlohmann::json evaluate(const Context& ctx, const eval::AblationFlags& flags) {
    const auto test = read_split(ctx, "test.jsonl");
    const auto engine = load_engine(ctx);
    const auto predictor = make_predictor(ctx);
    std::vector<PredictionRecord> records;
    auto report = evaluate_with(ctx, engine, *predictor, test, flags, &records);
    io::write_json_file(ctx.file("report.json").string(), report);
    io::write_text_file(ctx.file("predictions.csv").string(), eval::predictions_csv(records));
    ctx.info(fmt::format("{}: {} predictions", flags.name(), records.size()));
    return report;
}

nlohmann::json ablate(const Context& ctx) {
    const auto test = read_split(ctx, "test.jsonl");
    const auto engine = load_engine(ctx);
    const auto predictor = make_predictor(ctx);
    std::vector<nlohmann::json> reports;
    for (const auto& flags : eval::standard_variants()) {
        reports.push_back(evaluate_with(ctx, engine, *predictor, test, flags, nullptr));
        ctx.info(fmt::format("{} done", flags.name()));
    }
    nlohmann::json out{{"variants", reports}};
    io::write_json_file(ctx.file("ablation.json").string(), out);
    io::write_text_file(ctx.file("ablation.txt").string(), eval::ablation_table(reports));
    return out;
}

}  // namespace pkt::pipeline
