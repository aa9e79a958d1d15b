#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace fewshot {

/// A labeled token range, start inclusive, end exclusive. The label is never
/// the outside label.
struct Span {
    std::string label;
    std::size_t start = 0;
    std::size_t end = 0;

    auto operator<=>(const Span&) const = default;
};

/// Fraction of positions where prediction and gold agree exactly.
double ic_accuracy(const std::vector<std::size_t>& predicted,
                   const std::vector<std::size_t>& gold);

/// Segments a label sequence into spans. Maximal runs of one identical
/// non-outside label form a span; when labels carry explicit B-/I- prefixes
/// (possibly after an "intent:" prefix), a B- token additionally starts a
/// new span even mid-run. Outside-labeled tokens separate spans and never
/// appear in one.
std::vector<Span> extract_spans(const std::vector<std::string>& labels);

struct EpisodeMetrics {
    double intent_accuracy = 0.0;
    double slot_precision = 0.0;
    double slot_recall = 0.0;
    double slot_f1 = 0.0;
    std::size_t query_count = 0;
    std::size_t gold_spans = 0;
    std::size_t predicted_spans = 0;
    std::size_t matched_spans = 0;
};

/// Span-exact precision/recall/F1 over a batch of utterances. A predicted
/// span counts as matched only when the same utterance's gold side has a
/// span with identical label, start and end. All 0/0 ratios are defined
/// as 0.
EpisodeMetrics span_f1(const std::vector<std::vector<std::string>>& predicted,
                       const std::vector<std::vector<std::string>>& gold);

/// One metric summarized across seeds: the per-seed episode means, their
/// overall mean, and the sample standard deviation across seeds (0 when
/// only one seed ran). Also keeps each seed's episode-level spread.
struct MetricAggregate {
    std::vector<double> seed_means;
    std::vector<double> seed_episode_stds;
    double mean = 0.0;
    double std_dev = 0.0;
};

struct AggregateReport {
    std::vector<std::uint64_t> seeds;
    std::size_t episodes_per_seed = 0;
    MetricAggregate intent_accuracy;
    MetricAggregate slot_precision;
    MetricAggregate slot_recall;
    MetricAggregate slot_f1;
};

/// Aggregates per-episode metrics: mean over episodes within each seed,
/// then mean and sample standard deviation across seeds.
AggregateReport aggregate(
    const std::vector<std::vector<EpisodeMetrics>>& per_seed_episodes,
    const std::vector<std::uint64_t>& seeds);

}  // namespace fewshot
