#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fewshot/config.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/gradcheck.hpp"
#include "fewshot/results.hpp"
#include "fewshot/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        std::string piece = text.substr(
            start, comma == std::string::npos ? std::string::npos
                                              : comma - start);
        if (piece.empty())
            fewshot::fail("cli", "empty entry in seed list '" + text + "'");
        try {
            std::size_t used = 0;
            unsigned long long value = std::stoull(piece, &used);
            if (used != piece.size()) throw std::invalid_argument(piece);
            seeds.push_back(static_cast<std::uint64_t>(value));
        } catch (const std::exception&) {
            fewshot::fail("cli", "seed list entry '" + piece +
                                     "' is not a non-negative integer");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (seeds.empty()) fewshot::fail("cli", "seed list is empty");
    return seeds;
}

fewshot::RunConfig load_config_checked(const std::string& path) {
    if (!std::filesystem::exists(path))
        fewshot::fail_io("cli", "config file does not exist: " + path);
    return fewshot::read_run_config(path);
}

int run_prepare_splits(const std::string& data, const std::string& splits,
                       const std::string& out_dir) {
    std::string table = fewshot::prepare_splits_run(data, splits, out_dir);
    std::fputs(table.c_str(), stdout);
    return kExitOk;
}

int run_sample(const std::string& split, std::size_t k_max,
               std::size_t count, std::uint64_t seed,
               const std::string& out) {
    fewshot::sample_run(split, k_max, count, seed, out);
    std::fprintf(stderr, "cli: wrote %zu episodes to %s\n", count,
                 out.c_str());
    return kExitOk;
}

int run_train(const std::string& config_path, bool joint) {
    fewshot::RunConfig config = load_config_checked(config_path);
    if (joint) config.joint = true;
    std::vector<fewshot::TrainedModel> models = fewshot::train_run(config);
    for (const fewshot::TrainedModel& model : models)
        std::fprintf(stderr, "cli: trained '%s' -> %s\n",
                     model.model_name.c_str(),
                     model.checkpoint_path.c_str());
    return kExitOk;
}

int run_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& split, std::size_t episodes,
             const std::string& seed_list) {
    fewshot::RunConfig config = load_config_checked(config_path);
    fewshot::EvalRequest request;
    request.checkpoint_path = checkpoint;
    request.split_path = split;
    request.episodes = episodes;
    if (!seed_list.empty()) request.seeds = parse_seed_list(seed_list);
    fewshot::RunResult result = fewshot::eval_run(config, request);
    std::fputs(fewshot::render_results_table({result}).c_str(), stdout);
    return kExitOk;
}

int run_gradcheck(std::uint64_t seed) {
    fewshot::GradCheckReport report = fewshot::run_gradient_checks(seed);
    const double threshold = 1e-6;
    for (const fewshot::GradCheckEntry& entry : report.entries)
        std::fprintf(stderr, "gradcheck: %-24s max relative error %.3e\n",
                     entry.op.c_str(), entry.max_relative_error);
    if (!report.passed(threshold)) {
        std::fprintf(stderr,
                     "gradcheck: FAILED (worst %.3e >= %.0e over %zu ops)\n",
                     report.worst(), threshold, report.entries.size());
        return kExitValidation;
    }
    std::fprintf(stderr, "gradcheck: all %zu ops below %.0e (worst %.3e)\n",
                 report.entries.size(), threshold, report.worst());
    return kExitOk;
}

int run_report(const std::string& in_dir, const std::string& out) {
    fewshot::merge_results(in_dir, out);
    std::fprintf(stderr, "cli: merged results from %s into %s\n",
                 in_dir.c_str(), out.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Few-shot joint intent classification and slot filling: episodic "
        "sampling, training, and span-F1 evaluation"};
    app.require_subcommand(1);

    // prepare-splits
    std::string ps_data, ps_splits, ps_out;
    CLI::App* prepare = app.add_subcommand(
        "prepare-splits",
        "Prefix slot labels, partition a corpus by intent, and emit "
        "train/dev/test files with statistics");
    prepare->add_option("--data", ps_data, "Corpus file to partition")
        ->required();
    prepare
        ->add_option("--splits", ps_splits,
                     "JSON file listing train/dev/test intents")
        ->required();
    prepare->add_option("--out", ps_out, "Output directory")->required();

    // sample
    std::string sm_split, sm_out;
    std::size_t sm_kmax = 0, sm_count = 0;
    std::uint64_t sm_seed = 0;
    CLI::App* sample = app.add_subcommand(
        "sample", "Sample episodes from a split file and dump them as JSONL "
                  "with full traces");
    sample->add_option("--split", sm_split, "Split file to sample from")
        ->required();
    sample
        ->add_option("--kmax", sm_kmax,
                     "Support budget cap per episode (20 and 100 are the "
                     "standard regimes)")
        ->required();
    sample->add_option("--count", sm_count, "Number of episodes")
        ->required();
    sample->add_option("--seed", sm_seed, "Sampler seed (required: no "
                                          "wall-clock seeding)")
        ->required();
    sample->add_option("--out", sm_out, "Output JSONL path")->required();

    // train
    std::string tr_config;
    bool tr_joint = false;
    CLI::App* train = app.add_subcommand(
        "train", "Train the configured algorithm; writes a checkpoint after "
                 "every epoch");
    train->add_option("--config", tr_config, "Run configuration JSON")
        ->required();
    train->add_flag("--joint", tr_joint,
                    "Train one model over all configured datasets, drawing "
                    "each episode's dataset uniformly");

    // eval
    std::string ev_config, ev_checkpoint, ev_split, ev_seeds;
    std::size_t ev_episodes = 0;
    CLI::App* eval = app.add_subcommand(
        "eval", "Episodic evaluation of a checkpoint: intent accuracy and "
                "span F1, aggregated over seeds");
    eval->add_option("--config", ev_config,
                     "Run configuration JSON (datasets and hyperparameters)")
        ->required();
    eval->add_option("--checkpoint", ev_checkpoint, "Checkpoint to evaluate")
        ->required();
    eval->add_option("--split", ev_split,
                     "Split file to evaluate on (default: the configured "
                     "dataset's test split)");
    eval->add_option("--episodes", ev_episodes,
                     "Episodes per seed (default: the config's "
                     "eval_episodes, 100)");
    eval->add_option("--seeds", ev_seeds,
                     "Comma-separated evaluation seeds (default: the "
                     "config's seed list)");

    // gradcheck
    std::uint64_t gc_seed = 7;
    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "Compare every differentiable op's backward pass "
                     "against finite differences");
    gradcheck->add_option("--seed", gc_seed,
                          "Seed for the random probe tensors (default 7)");

    // report
    std::string rp_in, rp_out;
    CLI::App* report = app.add_subcommand(
        "report", "Merge per-run result records into one rendered table");
    report->add_option("--in", rp_in, "Directory of result JSON files")
        ->required();
    report->add_option("--out", rp_out, "Merged table output path")
        ->required();

    try {
        app.parse(argc, argv);
        if (prepare->parsed())
            return run_prepare_splits(ps_data, ps_splits, ps_out);
        if (sample->parsed())
            return run_sample(sm_split, sm_kmax, sm_count, sm_seed, sm_out);
        if (train->parsed()) return run_train(tr_config, tr_joint);
        if (eval->parsed())
            return run_eval(ev_config, ev_checkpoint, ev_split, ev_episodes,
                            ev_seeds);
        if (gradcheck->parsed()) return run_gradcheck(gc_seed);
        if (report->parsed()) return run_report(rp_in, rp_out);
        std::fprintf(stderr, "cli: no subcommand selected\n");
        return kExitValidation;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // help text, status 0
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the parse error
        return kExitValidation;
    } catch (const fewshot::IoError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitIo;
    } catch (const fewshot::ValidationError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "cli: unexpected error: %s\n", e.what());
        return kExitValidation;
    }
}
