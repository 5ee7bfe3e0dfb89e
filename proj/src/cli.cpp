#include "pkt/cli.hpp"

#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pkt/error.hpp"
#include "pkt/pipeline.hpp"
#include "pkt/serialization.hpp"

namespace pkt::cli {

namespace {

void write_error(std::ostream& err, std::string_view kind, std::string_view code, std::string_view message) {
    err << nlohmann::json{{"error", {{"kind", kind}, {"code", code}, {"message", message}}}}.dump() << '\n';
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage: return kExitUsage;
        case ErrorKind::Data: return kExitData;
        case ErrorKind::Provider: return kExitProvider;
    }
    return kExitData;
}

std::string_view kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Data: return "data";
        case ErrorKind::Provider: return "provider";
    }
    return "data";
}

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string provider = "offline";
    bool quiet = false;
    std::string workdir = ".";
};

pipeline::Context make_context(const GlobalOptions& g, std::ostream& err) {
    config::Config cfg;
    if (!g.config_path.empty()) cfg = config::Config::load(g.config_path);
    if (g.seed) cfg.set("seed", std::to_string(*g.seed));
    pipeline::Context ctx;
    ctx.settings = config::load_settings(cfg);
    ctx.mode = g.provider == "remote" ? pipeline::ProviderMode::Remote : pipeline::ProviderMode::Offline;
    ctx.workdir = g.workdir;
    if (!g.quiet) ctx.log = [&err](const std::string& line) { err << line << '\n'; };
    return ctx;
}

std::string read_input(const std::string& path) {
    if (path == "-") return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
    return io::read_text_file(path);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Training-free knowledge tracing: schema discovery, memory bank, hybrid retrieval, "
                 "constrained prediction",
                 "pkt"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config_path, "TOML-style config file");
    app.add_option("--seed", g.seed, "Random seed (overrides config)");
    app.add_option("--provider", g.provider, "Embedding/LLM providers")
        ->check(CLI::IsMember({"remote", "offline"}));
    app.add_flag("--quiet", g.quiet, "Suppress progress output");
    app.add_option("--workdir", g.workdir, "Directory holding pipeline artifacts");

    std::string csv_path;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse a CSV log into train/test sequences");
    ingest_cmd->add_option("--input", csv_path, "Interaction CSV")->required();

    auto* discover_cmd = app.add_subcommand("discover-schemas", "Fit cognitive schemas on the train split");
    auto* bank_cmd = app.add_subcommand("build-bank", "Select and annotate prototypes into the memory bank");
    auto* index_cmd = app.add_subcommand("index", "Build and persist the partitioned retrieval indices");

    std::string predict_input;
    bool show_prompt = false;
    auto* predict_cmd = app.add_subcommand("predict", "Predict the last interaction of one sequence");
    predict_cmd->add_option("--input", predict_input, "Sequence JSON file, or - for stdin")->required();
    predict_cmd->add_flag("--show-prompt", show_prompt, "Include the rendered prompt in the output");

    eval::AblationFlags flags;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate the test split");
    evaluate_cmd->add_flag("--no-retrieval", flags.no_retrieval, "Skip retrieval entirely");
    evaluate_cmd->add_flag("--no-routing", flags.no_routing, "Search the whole bank instead of the routed partition");
    evaluate_cmd->add_flag("--no-traces", flags.no_traces, "Show raw history in paradigm blocks");
    evaluate_cmd->add_flag("--no-logic", flags.no_logic, "Disable the Spike Rule");

    auto* ablate_cmd = app.add_subcommand("ablate", "Evaluate the full pipeline and every ablation variant");

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        write_error(err, "usage", "InvalidArguments", e.what());
        err << app.help();
        return kExitUsage;
    }

    try {
        const auto ctx = make_context(g, err);
        if (ingest_cmd->parsed()) {
            out << pipeline::ingest(ctx, csv_path).dump(2) << '\n';
        } else if (discover_cmd->parsed()) {
            out << pipeline::discover_schemas(ctx).dump(2) << '\n';
        } else if (bank_cmd->parsed()) {
            out << pipeline::build_bank(ctx).dump(2) << '\n';
        } else if (index_cmd->parsed()) {
            out << pipeline::build_index(ctx).dump(2) << '\n';
        } else if (predict_cmd->parsed()) {
            nlohmann::json input;
            try {
                input = nlohmann::json::parse(read_input(predict_input));
            } catch (const nlohmann::json::parse_error& e) {
                throw data_error("MalformedInput", e.what());
            }
            const auto trace = pipeline::predict(ctx, io::sequence_from_json(input));
            auto j = io::to_json(trace.record);
            if (show_prompt) j["prompt"] = trace.prompt;
            out << j.dump(2) << '\n';
        } else if (evaluate_cmd->parsed()) {
            out << pipeline::evaluate(ctx, flags).dump(2) << '\n';
        } else if (ablate_cmd->parsed()) {
            const auto result = pipeline::ablate(ctx);
            std::vector<nlohmann::json> reports(result.at("variants").begin(), result.at("variants").end());
            out << eval::ablation_table(reports);
        }
        return kExitOk;
    } catch (const Error& e) {
        write_error(err, kind_name(e.kind()), e.code(), e.what());
        return exit_code(e.kind());
    } catch (const nlohmann::json::exception& e) {
        write_error(err, "data", "MalformedInput", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        write_error(err, "data", "Unexpected", e.what());
        return kExitData;
    }
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace pkt::cli
