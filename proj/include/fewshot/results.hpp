#pragma once

#include <string>
#include <vector>

#include "fewshot/episode.hpp"
#include "fewshot/metrics.hpp"

namespace fewshot {

/// One evaluation outcome: an (algorithm, dataset, support-cap) cell with
/// its multi-seed aggregate.
struct RunResult {
    std::string algorithm;
    std::string dataset;
    std::size_t k_max = 0;
    AggregateReport report;
};

/// Renders a mean/std pair the way result tables print them: values scaled
/// to percentages with two decimals, e.g. "65.46 +/- 0.81".
std::string format_mean_std(double mean, double std_dev);

/// Machine-readable result record. Writing then reading reproduces the
/// result exactly, including every stored double.
void write_run_result(const std::string& path, const RunResult& result);
RunResult read_run_result(const std::string& path);
RunResult parse_run_result(const std::string& text, const std::string& source);

/// Renders results as an aligned table, one row per (algorithm, dataset,
/// k_max) cell with IC accuracy and slot precision/recall/F1 columns. An
/// empty list renders the header only.
std::string render_results_table(const std::vector<RunResult>& results);

/// Reads every .json result record in a directory (sorted by filename) and
/// writes the merged table to out_path.
void merge_results(const std::string& in_dir, const std::string& out_path);

/// One episode as a single JSON line: the full trace (way, classes, shots,
/// beta, budget, per-class draws) plus support and query items with
/// remapped token positions listed explicitly.
std::string episode_to_json_line(const Episode& episode);
void write_episode_dump(const std::string& path,
                        const std::vector<Episode>& episodes);

}  // namespace fewshot
