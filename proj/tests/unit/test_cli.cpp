#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "pkt/cli.hpp"
#include "pkt/serialization.hpp"

namespace pkt::cli {
namespace {

namespace fs = std::filesystem;

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

nlohmann::json error_json(const Run& r) {
    const auto first_line = r.err.substr(0, r.err.find('\n'));
    return nlohmann::json::parse(first_line).at("error");
}

std::vector<std::string> global(const std::string& workdir) {
    return {"--quiet", "--seed", "42", "--provider", "offline", "--workdir", workdir};
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

class CliPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        workdir_ = (fs::temp_directory_path() / ("pkt-cli-" + std::to_string(::getpid()))).string();
        fs::remove_all(workdir_);
        for (const auto& step : std::vector<std::vector<std::string>>{
                 {"ingest", "--input", testing::fixture_path("toy_log.csv")},
                 {"discover-schemas"},
                 {"build-bank"},
                 {"index"}}) {
            const auto r = run(with(global(workdir_), step));
            ASSERT_EQ(r.code, kExitOk) << step.front() << ": " << r.err;
        }
    }
    static void TearDownTestSuite() { fs::remove_all(workdir_); }

    static std::string file(const std::string& name) { return workdir_ + "/" + name; }
    static inline std::string workdir_;
};

TEST_F(CliPipeline, ArtifactsWritten) {
    for (const char* name : {"train.jsonl", "test.jsonl", "ingest_report.json", "difficulty.json", "schema.json",
                             "coordinates.csv", "bank.jsonl", "bank_report.json", "index/index.json"}) {
        EXPECT_TRUE(fs::exists(file(name))) << name;
    }
}

TEST_F(CliPipeline, EvaluateWritesReportAndPredictions) {
    const auto r = run(with(global(workdir_), {"evaluate", "--no-logic"}));
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto stdout_report = nlohmann::json::parse(r.out);
    const auto report = io::read_json_file(file("report.json"));
    EXPECT_EQ(stdout_report, report);
    EXPECT_EQ(report.at("variant"), "no_logic");
    EXPECT_EQ(report.at("provider"), "hashing");
    EXPECT_TRUE(report.contains("config"));
    const auto csv = io::read_text_file(file("predictions.csv"));
    const auto rows = std::count(csv.begin(), csv.end(), '\n') - 1;
    EXPECT_EQ(static_cast<std::size_t>(rows), report.at("n_predictions").get<std::size_t>());
}

TEST_F(CliPipeline, PredictFromSequenceFile) {
    const auto test = io::read_sequences(file("test.jsonl"));
    ASSERT_FALSE(test.empty());
    const auto input = file("one.json");
    io::write_json_file(input, io::to_json(test.front()));
    const auto r = run(with(global(workdir_), {"predict", "--input", input, "--show-prompt"}));
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j.at("student_id"), test.front().student_id());
    const double p = j.at("probability").get<double>();
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    EXPECT_NE(j.at("prompt").get<std::string>().find("Target Student"), std::string::npos);

    const auto plain = nlohmann::json::parse(run(with(global(workdir_), {"predict", "--input", input})).out);
    EXPECT_FALSE(plain.contains("prompt"));
}

TEST_F(CliPipeline, AblateCoversStandardVariants) {
    const auto r = run(with(global(workdir_), {"ablate"}));
    ASSERT_EQ(r.code, kExitOk) << r.err;
    const auto ablation = io::read_json_file(file("ablation.json"));
    ASSERT_EQ(ablation.at("variants").size(), 5u);
    EXPECT_EQ(ablation.at("variants").at(4).at("variant"), "no_retrieval");
    EXPECT_EQ(io::read_text_file(file("ablation.txt")), r.out);
    EXPECT_NE(r.out.find("no_routing"), std::string::npos);
}

TEST_F(CliPipeline, ProviderMismatchIsDataError) {
    const auto cfg = file("wide.toml");
    io::write_text_file(cfg, "[embed]\ndimension = 64\n");
    const auto r = run(with(with(global(workdir_), {"--config", cfg}), {"evaluate"}));
    EXPECT_EQ(r.code, kExitData);
    EXPECT_EQ(error_json(r).at("code"), "ProviderMismatch");
}

TEST_F(CliPipeline, MalformedPredictInput) {
    const auto input = file("broken.json");
    io::write_text_file(input, "{\"student_id\": ");
    const auto r = run(with(global(workdir_), {"predict", "--input", input}));
    EXPECT_EQ(r.code, kExitData);
    EXPECT_EQ(error_json(r).at("code"), "MalformedInput");
}

TEST(Cli, UsageErrors) {
    auto r = run({});
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_EQ(error_json(r).at("kind"), "usage");
    r = run({"--provider", "cloud", "evaluate"});
    EXPECT_EQ(r.code, kExitUsage);
    r = run({"ingest"});
    EXPECT_EQ(r.code, kExitUsage);
    r = run({"--help"});
    EXPECT_EQ(r.code, kExitOk);
    EXPECT_NE(r.out.find("discover-schemas"), std::string::npos);
}

TEST(Cli, ConfigErrorsAreUsage) {
    const auto dir = fs::temp_directory_path() / ("pkt-cli-cfg-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    io::write_text_file((dir / "bad.toml").string(), "[retrieval]\nalpah = 0.5\n");
    const auto r = run({"--quiet", "--config", (dir / "bad.toml").string(), "--workdir", dir.string(), "evaluate"});
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_EQ(error_json(r).at("code"), "UnknownConfigKey");
    fs::remove_all(dir);
}

TEST(Cli, MissingArtifactsAreDataErrors) {
    const auto dir = fs::temp_directory_path() / ("pkt-cli-empty-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    auto r = run(with(global(dir.string()), {"discover-schemas"}));
    EXPECT_EQ(r.code, kExitData);
    r = run(with(global(dir.string()), {"ingest", "--input", (dir / "none.csv").string()}));
    EXPECT_EQ(r.code, kExitData);
    EXPECT_EQ(error_json(r).at("kind"), "data");
    fs::remove_all(dir);
}

TEST(Cli, UnreachableProviderExitsThree) {
    const auto dir = fs::temp_directory_path() / ("pkt-cli-remote-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    ASSERT_EQ(run(with(global(dir.string()), {"ingest", "--input", testing::fixture_path("toy_log.csv")})).code,
              kExitOk);
    const auto cfg = (dir / "remote.toml").string();
    io::write_text_file(cfg,
                        "[embed]\nendpoint = \"http://127.0.0.1:1/v1/embeddings\"\ndimension = 8\n"
                        "[llm]\nendpoint = \"http://127.0.0.1:1/v1/chat\"\n"
                        "[http]\nattempts = 1\ntimeout_ms = 2000\n");
    const auto r = run({"--quiet", "--provider", "remote", "--config", cfg, "--workdir", dir.string(),
                        "discover-schemas"});
    EXPECT_EQ(r.code, kExitProvider) << r.err;
    EXPECT_EQ(error_json(r).at("kind"), "provider");
    fs::remove_all(dir);
}

}  // namespace
}  // namespace pkt::cli
