#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "cli_harness.hpp"
#include "doctest.h"
#include "fewshot/corpus.hpp"
#include "fewshot/results.hpp"
#include "toy_corpus.hpp"

using namespace fewshot;
using namespace fewshot::toy;

namespace {

/// One tiny corpus + work dir shared by the whole suite.
struct Fixture {
    std::string dir = fresh_temp_dir("cli");
    ToyCorpus corpus = write_toy_corpus(dir + "/corpus", 30, 10, 3);
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("gradcheck exits zero and reports every op") {
    Fixture& f = fixture();
    CommandResult result = run_cli({"gradcheck", "--seed", "3"}, f.dir);
    CHECK(result.exit_code == 0);
    CHECK(result.err.find("all") != std::string::npos);
    CHECK(result.out.empty());
}

TEST_CASE("sampling twice with one seed is byte-identical") {
    Fixture& f = fixture();
    std::string a = f.dir + "/episodes-a.jsonl";
    std::string b = f.dir + "/episodes-b.jsonl";
    std::string c = f.dir + "/episodes-c.jsonl";
    const std::vector<std::pair<std::string, std::string>> runs = {
        {a, "7"}, {b, "7"}, {c, "8"}};
    for (const auto& [path, seed] : runs) {
        CommandResult result =
            run_cli({"sample", "--split", f.corpus.test_path, "--kmax",
                     "20", "--count", "40", "--seed", seed, "--out", path},
                    f.dir);
        REQUIRE(result.exit_code == 0);
    }
    CHECK(files_identical(a, b));
    CHECK_FALSE(files_identical(a, c));
    // Sanity: the dump is line-oriented JSON with traces.
    std::string dump = slurp(a);
    CHECK(dump.find("\"beta\"") != std::string::npos);
    CHECK(dump.find("\"support_shot\"") != std::string::npos);
}

TEST_CASE("missing files map to exit status 2 with the path named") {
    Fixture& f = fixture();
    CommandResult sample =
        run_cli({"sample", "--split", f.dir + "/nope.txt", "--kmax", "20",
                 "--count", "1", "--seed", "1", "--out", f.dir + "/x"},
                f.dir);
    CHECK(sample.exit_code == 2);
    CHECK(sample.err.find("nope.txt") != std::string::npos);

    CommandResult train =
        run_cli({"train", "--config", f.dir + "/absent-config.json"}, f.dir);
    CHECK(train.exit_code == 2);
    CHECK(train.err.find("absent-config.json") != std::string::npos);

    CommandResult eval =
        run_cli({"eval", "--config", f.dir + "/absent-config.json",
                 "--checkpoint", f.dir + "/none.ckpt"},
                f.dir);
    CHECK(eval.exit_code == 2);
}

TEST_CASE("bad flags and bad configs map to exit status 1") {
    Fixture& f = fixture();
    CommandResult unknown = run_cli({"frobnicate"}, f.dir);
    CHECK(unknown.exit_code == 1);
    CommandResult badflag =
        run_cli({"gradcheck", "--no-such-flag"}, f.dir);
    CHECK(badflag.exit_code == 1);

    std::string config_path = f.dir + "/bad-config.json";
    {
        std::ofstream out(config_path);
        out << "{\"algorithm\": \"proto\", \"surprise\": 1}\n";
    }
    CommandResult bad = run_cli({"train", "--config", config_path}, f.dir);
    CHECK(bad.exit_code == 1);
    CHECK(bad.err.find("surprise") != std::string::npos);
}

TEST_CASE("prepare-splits writes partitioned files and statistics") {
    Fixture& f = fixture();
    // A raw corpus with unprefixed labels, two intents per split.
    std::vector<UtteranceRecord> raw;
    for (const std::string intent : {"alpha", "beta", "gamma"})
        for (int i = 0; i < 4; ++i) {
            UtteranceRecord r;
            r.intent = intent;
            r.tokens = {"go", "val" + std::to_string(i)};
            r.slots = {"O", "target"};
            raw.push_back(r);
        }
    std::string data_path = f.dir + "/raw.txt";
    write_dataset_file(data_path, raw);
    std::string splits_path = f.dir + "/splits.json";
    {
        std::ofstream out(splits_path);
        out << "{\"train\": [\"alpha\", \"beta\"], \"test\": [\"gamma\"]}\n";
    }
    std::string out_dir = f.dir + "/splits-out";
    CommandResult result = run_cli({"prepare-splits", "--data", data_path,
                                    "--splits", splits_path, "--out",
                                    out_dir},
                                   f.dir);
    REQUIRE(result.exit_code == 0);
    CHECK(std::filesystem::exists(out_dir + "/train.txt"));
    CHECK(std::filesystem::exists(out_dir + "/test.txt"));
    CHECK_FALSE(std::filesystem::exists(out_dir + "/dev.txt"));
    CHECK(result.out.find("train") != std::string::npos);
    CHECK(result.out == slurp(out_dir + "/stats.txt"));

    auto train_records = parse_dataset_file(out_dir + "/train.txt");
    CHECK(train_records.size() == 8);
    for (const auto& record : train_records)
        CHECK(record.slots[1] == record.intent + ":target");
}

TEST_CASE("train then eval produces checkpoints, tables and reports") {
    Fixture& f = fixture();
    std::string out_dir = f.dir + "/run";
    ToyRunSettings settings;
    settings.algorithm = "proto";
    settings.epochs = 2;
    settings.episodes_per_epoch = 4;
    settings.eval_episodes = 3;
    settings.hidden_dim = 8;
    settings.seeds = {5, 6};
    std::string config_path = write_toy_run_config(
        f.corpus, f.dir + "/run-config.json", out_dir, settings);

    CommandResult train = run_cli({"train", "--config", config_path}, f.dir);
    REQUIRE_MESSAGE(train.exit_code == 0, train.err);
    CHECK(std::filesystem::exists(out_dir + "/proto-toy-k20-epoch1.ckpt"));
    CHECK(std::filesystem::exists(out_dir + "/proto-toy-k20-epoch2.ckpt"));
    std::string checkpoint = out_dir + "/proto-toy-k20.ckpt";
    REQUIRE(std::filesystem::exists(checkpoint));

    CommandResult eval =
        run_cli({"eval", "--config", config_path, "--checkpoint",
                 checkpoint, "--split", f.corpus.test_path, "--episodes",
                 "3", "--seeds", "11,12"},
                f.dir);
    REQUIRE_MESSAGE(eval.exit_code == 0, eval.err);
    CHECK(eval.out.find("proto") != std::string::npos);
    CHECK(eval.out.find("toy") != std::string::npos);
    std::string result_json = out_dir + "/proto-toy-k20-eval.json";
    REQUIRE(std::filesystem::exists(result_json));
    RunResult stored = read_run_result(result_json);
    CHECK(stored.report.seeds == std::vector<std::uint64_t>{11, 12});
    CHECK(stored.report.episodes_per_seed == 3);

    CommandResult report =
        run_cli({"report", "--in", out_dir, "--out",
                 f.dir + "/merged-table.txt"},
                f.dir);
    REQUIRE_MESSAGE(report.exit_code == 0, report.err);
    std::string merged = slurp(f.dir + "/merged-table.txt");
    CHECK(merged.find("proto") != std::string::npos);
    CHECK(merged.find("toy") != std::string::npos);
}

TEST_CASE("evaluating a wrong-width checkpoint is refused") {
    Fixture& f = fixture();
    std::string out_dir = f.dir + "/narrow-run";
    ToyRunSettings settings;
    settings.algorithm = "proto";
    settings.epochs = 1;
    settings.episodes_per_epoch = 2;
    settings.hidden_dim = 4;
    std::string narrow_config = write_toy_run_config(
        f.corpus, f.dir + "/narrow-config.json", out_dir, settings);
    CommandResult train =
        run_cli({"train", "--config", narrow_config}, f.dir);
    REQUIRE_MESSAGE(train.exit_code == 0, train.err);

    settings.hidden_dim = 8;  // config no longer matches the checkpoint
    std::string wide_config = write_toy_run_config(
        f.corpus, f.dir + "/wide-config.json", out_dir, settings);
    CommandResult eval =
        run_cli({"eval", "--config", wide_config, "--checkpoint",
                 out_dir + "/proto-toy-k20.ckpt", "--episodes", "1"},
                f.dir);
    CHECK(eval.exit_code == 1);
    CHECK(eval.err.find("hidden width") != std::string::npos);
}
