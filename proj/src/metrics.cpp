#include "fewshot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fewshot/corpus.hpp"
#include "fewshot/errors.hpp"

namespace fewshot {

namespace {

/// Splits a label into its span type and whether it explicitly begins a
/// span. "B-x" begins type "x"; "I-x" continues type "x"; an "intent:"
/// prefix ahead of B-/I- is kept as part of the type. Plain labels are
/// their own type and never force a begin.
struct LabelParts {
    std::string type;
    bool begins = false;
};

LabelParts parse_label(const std::string& label) {
    std::size_t tag = 0;
    auto colon = label.find(':');
    if (colon != std::string::npos) tag = colon + 1;
    if (label.compare(tag, 2, "B-") == 0)
        return {label.substr(0, tag) + label.substr(tag + 2), true};
    if (label.compare(tag, 2, "I-") == 0)
        return {label.substr(0, tag) + label.substr(tag + 2), false};
    return {label, false};
}

double safe_ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double mean_of(const std::vector<double>& xs) {
    double total = 0.0;
    for (double x : xs) total += x;
    return total / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

MetricAggregate aggregate_metric(
    const std::vector<std::vector<double>>& per_seed_values) {
    MetricAggregate out;
    for (const auto& values : per_seed_values) {
        out.seed_means.push_back(mean_of(values));
        out.seed_episode_stds.push_back(sample_std(values));
    }
    out.mean = mean_of(out.seed_means);
    out.std_dev = sample_std(out.seed_means);
    return out;
}

}  // namespace

double ic_accuracy(const std::vector<std::size_t>& predicted,
                   const std::vector<std::size_t>& gold) {
    if (predicted.size() != gold.size())
        fail("metrics", "ic_accuracy: " + std::to_string(predicted.size()) +
                            " predictions vs " + std::to_string(gold.size()) +
                            " gold labels");
    if (predicted.empty()) fail("metrics", "ic_accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == gold[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

std::vector<Span> extract_spans(const std::vector<std::string>& labels) {
    std::vector<Span> spans;
    bool open = false;
    Span current;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == kOutsideLabel) {
            if (open) {
                current.end = i;
                spans.push_back(current);
                open = false;
            }
            continue;
        }
        LabelParts parts = parse_label(labels[i]);
        bool continues = open && !parts.begins && parts.type == current.label;
        if (continues) continue;
        if (open) {
            current.end = i;
            spans.push_back(current);
        }
        current = {parts.type, i, 0};
        open = true;
    }
    if (open) {
        current.end = labels.size();
        spans.push_back(current);
    }
    return spans;
}

EpisodeMetrics span_f1(const std::vector<std::vector<std::string>>& predicted,
                       const std::vector<std::vector<std::string>>& gold) {
    if (predicted.size() != gold.size())
        fail("metrics", "span_f1: " + std::to_string(predicted.size()) +
                            " predicted utterances vs " +
                            std::to_string(gold.size()) + " gold");
    EpisodeMetrics m;
    m.query_count = predicted.size();
    for (std::size_t u = 0; u < predicted.size(); ++u) {
        if (predicted[u].size() != gold[u].size())
            fail("metrics", "span_f1: utterance " + std::to_string(u) +
                                " has " + std::to_string(predicted[u].size()) +
                                " predicted tokens vs " +
                                std::to_string(gold[u].size()) + " gold");
        std::vector<Span> p = extract_spans(predicted[u]);
        std::vector<Span> g = extract_spans(gold[u]);
        m.predicted_spans += p.size();
        m.gold_spans += g.size();
        std::set<Span> gold_set(g.begin(), g.end());
        for (const Span& span : p)
            if (gold_set.count(span)) ++m.matched_spans;
    }
    m.slot_precision = safe_ratio(m.matched_spans, m.predicted_spans);
    m.slot_recall = safe_ratio(m.matched_spans, m.gold_spans);
    double pr = m.slot_precision + m.slot_recall;
    m.slot_f1 = pr == 0.0 ? 0.0
                          : 2.0 * m.slot_precision * m.slot_recall / pr;
    return m;
}

AggregateReport aggregate(
    const std::vector<std::vector<EpisodeMetrics>>& per_seed_episodes,
    const std::vector<std::uint64_t>& seeds) {
    if (per_seed_episodes.size() != seeds.size())
        fail("metrics", "aggregate: " +
                            std::to_string(per_seed_episodes.size()) +
                            " metric groups vs " +
                            std::to_string(seeds.size()) + " seeds");
    if (per_seed_episodes.empty())
        fail("metrics", "aggregate: no seeds");
    std::size_t episodes = per_seed_episodes.front().size();
    if (episodes == 0) fail("metrics", "aggregate: no episodes");
    for (const auto& group : per_seed_episodes)
        if (group.size() != episodes)
            fail("metrics",
                 "aggregate: seeds ran different numbers of episodes");

    auto collect = [&](auto field) {
        std::vector<std::vector<double>> values;
        for (const auto& group : per_seed_episodes) {
            std::vector<double> seed_values;
            seed_values.reserve(group.size());
            for (const auto& m : group) seed_values.push_back(m.*field);
            values.push_back(std::move(seed_values));
        }
        return aggregate_metric(values);
    };

    AggregateReport report;
    report.seeds = seeds;
    report.episodes_per_seed = episodes;
    report.intent_accuracy = collect(&EpisodeMetrics::intent_accuracy);
    report.slot_precision = collect(&EpisodeMetrics::slot_precision);
    report.slot_recall = collect(&EpisodeMetrics::slot_recall);
    report.slot_f1 = collect(&EpisodeMetrics::slot_f1);
    return report;
}

}  // namespace fewshot
