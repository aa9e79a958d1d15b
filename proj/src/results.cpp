#include "fewshot/results.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fewshot/errors.hpp"
#include "json.hpp"

namespace fewshot {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json aggregate_to_json(const MetricAggregate& aggregate) {
    return ordered_json{{"mean", aggregate.mean},
                        {"std_dev", aggregate.std_dev},
                        {"seed_means", aggregate.seed_means},
                        {"seed_episode_stds", aggregate.seed_episode_stds}};
}

MetricAggregate aggregate_from_json(const ordered_json& value) {
    MetricAggregate aggregate;
    aggregate.mean = value.at("mean").get<double>();
    aggregate.std_dev = value.at("std_dev").get<double>();
    aggregate.seed_means =
        value.at("seed_means").get<std::vector<double>>();
    aggregate.seed_episode_stds =
        value.at("seed_episode_stds").get<std::vector<double>>();
    return aggregate;
}

}  // namespace

std::string format_mean_std(double mean, double std_dev) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%.2f +/- %.2f", mean * 100.0,
                  std_dev * 100.0);
    return buffer;
}

void write_run_result(const std::string& path, const RunResult& result) {
    ordered_json root{
        {"algorithm", result.algorithm},
        {"dataset", result.dataset},
        {"k_max", result.k_max},
        {"seeds", result.report.seeds},
        {"episodes_per_seed", result.report.episodes_per_seed},
        {"intent_accuracy", aggregate_to_json(result.report.intent_accuracy)},
        {"slot_precision", aggregate_to_json(result.report.slot_precision)},
        {"slot_recall", aggregate_to_json(result.report.slot_recall)},
        {"slot_f1", aggregate_to_json(result.report.slot_f1)},
    };
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("results", "cannot write '" + path + "'");
    out << root.dump(2) << '\n';
    if (!out) fail_io("results", "write to '" + path + "' failed");
}

RunResult parse_run_result(const std::string& text,
                           const std::string& source) {
    ordered_json root = ordered_json::parse(text, nullptr, false);
    if (root.is_discarded() || !root.is_object())
        fail_io("results", source + ": not a result record");
    try {
        RunResult result;
        result.algorithm = root.at("algorithm").get<std::string>();
        result.dataset = root.at("dataset").get<std::string>();
        result.k_max = root.at("k_max").get<std::size_t>();
        result.report.seeds =
            root.at("seeds").get<std::vector<std::uint64_t>>();
        result.report.episodes_per_seed =
            root.at("episodes_per_seed").get<std::size_t>();
        result.report.intent_accuracy =
            aggregate_from_json(root.at("intent_accuracy"));
        result.report.slot_precision =
            aggregate_from_json(root.at("slot_precision"));
        result.report.slot_recall =
            aggregate_from_json(root.at("slot_recall"));
        result.report.slot_f1 = aggregate_from_json(root.at("slot_f1"));
        return result;
    } catch (const ordered_json::exception& e) {
        fail_io("results", source + ": " + e.what());
    }
}

RunResult read_run_result(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("results", "cannot open '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_run_result(text.str(), path);
}

std::string render_results_table(const std::vector<RunResult>& results) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"algorithm", "dataset", "k_max", "intent_acc",
                    "slot_precision", "slot_recall", "slot_f1"});
    for (const RunResult& r : results) {
        rows.push_back(
            {r.algorithm, r.dataset, std::to_string(r.k_max),
             format_mean_std(r.report.intent_accuracy.mean,
                             r.report.intent_accuracy.std_dev),
             format_mean_std(r.report.slot_precision.mean,
                             r.report.slot_precision.std_dev),
             format_mean_std(r.report.slot_recall.mean,
                             r.report.slot_recall.std_dev),
             format_mean_std(r.report.slot_f1.mean,
                             r.report.slot_f1.std_dev)});
    }
    std::vector<std::size_t> widths(rows[0].size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], row[c].size());
    std::ostringstream out;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << "  ";
            out << std::left << std::setw(static_cast<int>(widths[c]))
                << row[c];
        }
        out << '\n';
    }
    return out.str();
}

void merge_results(const std::string& in_dir, const std::string& out_path) {
    if (!std::filesystem::is_directory(in_dir))
        fail_io("results", "'" + in_dir + "' is not a directory");
    std::vector<std::string> paths;
    for (const auto& entry : std::filesystem::directory_iterator(in_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    std::vector<RunResult> results;
    for (const std::string& path : paths)
        results.push_back(read_run_result(path));
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("results", "cannot write '" + out_path + "'");
    out << render_results_table(results);
    if (!out) fail_io("results", "write to '" + out_path + "' failed");
}

std::string episode_to_json_line(const Episode& episode) {
    auto items_to_json = [](const std::vector<EpisodeItem>& items) {
        ordered_json out = ordered_json::array();
        for (const EpisodeItem& item : items) {
            std::vector<std::size_t> remapped;
            for (std::size_t j = 0; j < item.remapped.size(); ++j)
                if (item.remapped[j]) remapped.push_back(j);
            out.push_back(ordered_json{{"id", item.record.id},
                                       {"intent", item.record.intent},
                                       {"tokens", item.record.tokens},
                                       {"slots", item.record.slots},
                                       {"remapped", remapped}});
        }
        return out;
    };
    ordered_json traces = ordered_json::array();
    for (const ClassTrace& c : episode.trace.class_traces)
        traces.push_back(ordered_json{{"label", c.label},
                                      {"population", c.population},
                                      {"alpha", c.alpha},
                                      {"proportion", c.proportion},
                                      {"support_shot", c.support_shot}});
    ordered_json root{
        {"index", episode.index},
        {"dataset", episode.source_dataset},
        {"way", episode.trace.way},
        {"classes", episode.trace.classes},
        {"query_shot", episode.trace.query_shot},
        {"beta", episode.trace.beta},
        {"support_budget", episode.trace.support_budget},
        {"class_traces", traces},
        {"support", items_to_json(episode.support)},
        {"query", items_to_json(episode.query)},
    };
    return root.dump();
}

void write_episode_dump(const std::string& path,
                        const std::vector<Episode>& episodes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("results", "cannot write '" + path + "'");
    for (const Episode& episode : episodes)
        out << episode_to_json_line(episode) << '\n';
    if (!out) fail_io("results", "write to '" + path + "' failed");
}

}  // namespace fewshot
