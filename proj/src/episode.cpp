#include "fewshot/episode.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "fewshot/errors.hpp"

namespace fewshot {

FewShotSplit FewShotSplit::from_records(
    std::string name, const std::vector<UtteranceRecord>& records) {
    FewShotSplit split;
    split.name = std::move(name);
    for (const auto& r : records) {
        auto [it, inserted] = split.examples.try_emplace(r.intent);
        if (inserted) split.classes.push_back(r.intent);
        it->second.push_back(r);
    }
    return split;
}

const std::vector<UtteranceRecord>& FewShotSplit::class_examples(
    const std::string& label) const {
    auto it = examples.find(label);
    if (it == examples.end())
        fail("sampler", "unknown class '" + label + "' in split " + name);
    return it->second;
}

std::size_t FewShotSplit::class_size(const std::string& label) const {
    return class_examples(label).size();
}

std::size_t query_shot_for(const std::vector<std::size_t>& class_sizes,
                           std::size_t query_cap) {
    if (class_sizes.empty()) fail("sampler", "query_shot_for: no classes");
    std::size_t smallest = SIZE_MAX;
    for (std::size_t size : class_sizes)
        smallest = std::min(smallest, size / 2);
    return std::min(query_cap, smallest);
}

std::size_t support_budget_for(const std::vector<std::size_t>& class_sizes,
                               std::size_t query_shot, double beta,
                               std::size_t k_max, std::size_t per_class_cap) {
    if (beta <= 0.0 || beta > 1.0)
        fail("sampler", "support_budget_for: beta outside (0, 1]");
    std::size_t total = 0;
    for (std::size_t size : class_sizes) {
        if (size <= query_shot)
            fail("sampler",
                 "support_budget_for: class of size " + std::to_string(size) +
                     " cannot spare a query shot of " +
                     std::to_string(query_shot));
        std::size_t room = std::min(per_class_cap, size - query_shot);
        total += static_cast<std::size_t>(
            std::ceil(beta * static_cast<double>(room)));
    }
    return std::min(k_max, total);
}

std::vector<double> shot_proportions(const std::vector<std::size_t>& class_sizes,
                                     const std::vector<double>& alphas) {
    if (class_sizes.size() != alphas.size())
        fail("sampler", "shot_proportions: size/alpha count mismatch");
    std::vector<double> weighted(class_sizes.size());
    double total = 0.0;
    for (std::size_t i = 0; i < class_sizes.size(); ++i) {
        weighted[i] =
            std::exp(alphas[i]) * static_cast<double>(class_sizes[i]);
        total += weighted[i];
    }
    for (double& w : weighted) w /= total;
    return weighted;
}

std::vector<std::size_t> class_shots_for(
    const std::vector<std::size_t>& class_sizes,
    const std::vector<double>& proportions, std::size_t support_budget,
    std::size_t query_shot) {
    std::size_t way = class_sizes.size();
    if (proportions.size() != way)
        fail("sampler", "class_shots_for: size/proportion count mismatch");
    if (support_budget < way)
        fail("sampler", "class_shots_for: support budget " +
                            std::to_string(support_budget) +
                            " cannot cover " + std::to_string(way) +
                            " classes");
    std::vector<std::size_t> shots(way);
    double spread = static_cast<double>(support_budget - way);
    for (std::size_t i = 0; i < way; ++i) {
        std::size_t base =
            static_cast<std::size_t>(std::floor(proportions[i] * spread)) + 1;
        shots[i] = std::min(base, class_sizes[i] - query_shot);
    }
    return shots;
}

EpisodeSampler::EpisodeSampler(FewShotSplit split, SamplerConfig config)
    : split_(std::move(split)), config_(config), master_(config.seed) {
    if (config_.k_max < 3)
        fail("sampler", "k_max must be at least 3, got " +
                            std::to_string(config_.k_max));
    if (config_.query_cap == 0)
        fail("sampler", "query_cap must be positive");
    for (const auto& label : split_.classes) {
        auto& pool = available_[label];
        pool.resize(split_.class_size(label));
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    }
}

std::size_t EpisodeSampler::buffer_remaining(const std::string& label) const {
    auto it = available_.find(label);
    if (it == available_.end())
        fail("sampler", "unknown class '" + label + "'");
    return it->second.size();
}

Episode EpisodeSampler::next() {
    Rng rng = master_.child(counter_);
    return next_with(rng, counter_);
}

Episode EpisodeSampler::next_with(Rng& rng, std::uint64_t stream_index) {
    if (split_.classes.size() < 3)
        fail("sampler", "split " + split_.name + " has only " +
                            std::to_string(split_.classes.size()) +
                            " classes; episodes need at least 3");

    EpisodeTrace trace;
    trace.way = static_cast<std::size_t>(
        rng.uniform_int(3, split_.classes.size()));
    for (std::size_t idx :
         rng.sample_indices(split_.classes.size(), trace.way))
        trace.classes.push_back(split_.classes[idx]);

    std::vector<std::size_t> sizes;
    sizes.reserve(trace.way);
    for (const auto& label : trace.classes) {
        std::size_t size = split_.class_size(label);
        if (size / 2 == 0)
            fail("sampler", "class '" + label + "' has " +
                                std::to_string(size) +
                                " example(s); too few for a query shot");
        sizes.push_back(size);
    }
    trace.query_shot = query_shot_for(sizes, config_.query_cap);

    trace.beta = rng.uniform_open_closed();
    trace.support_budget =
        support_budget_for(sizes, trace.query_shot, trace.beta,
                           config_.k_max, config_.per_class_cap);

    std::vector<double> alphas(trace.way);
    for (double& a : alphas)
        a = rng.uniform_in(std::log(0.5), std::log(2.0));
    std::vector<double> proportions = shot_proportions(sizes, alphas);
    std::vector<std::size_t> shots = class_shots_for(
        sizes, proportions, trace.support_budget, trace.query_shot);

    for (std::size_t i = 0; i < trace.way; ++i)
        trace.class_traces.push_back({trace.classes[i], sizes[i], alphas[i],
                                      proportions[i], shots[i]});

    // The buffer supplies concrete examples. If any chosen class cannot
    // cover its support and query draw, every class's pool is refilled.
    bool exhausted = false;
    for (std::size_t i = 0; i < trace.way; ++i) {
        std::size_t needed = shots[i] + trace.query_shot;
        if (available_[trace.classes[i]].size() < needed) {
            exhausted = true;
            break;
        }
    }
    if (exhausted) {
        for (const auto& label : split_.classes) {
            auto& pool = available_[label];
            pool.resize(split_.class_size(label));
            for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
        }
        ++refreshes_;
    }

    Episode episode;
    episode.source_dataset = split_.name;
    episode.index = stream_index;

    for (std::size_t i = 0; i < trace.way; ++i) {
        const auto& label = trace.classes[i];
        const auto& pool_records = split_.class_examples(label);
        auto& pool = available_[label];
        std::size_t needed = shots[i] + trace.query_shot;

        std::vector<std::size_t> positions =
            rng.sample_indices(pool.size(), needed);
        for (std::size_t d = 0; d < needed; ++d) {
            EpisodeItem item;
            item.record = pool_records[pool[positions[d]]];
            item.remapped.assign(item.record.tokens.size(), false);
            if (d < shots[i]) episode.support.push_back(std::move(item));
            else episode.query.push_back(std::move(item));
        }

        std::sort(positions.rbegin(), positions.rend());
        for (std::size_t pos : positions)
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pos));
    }

    // Cross-side remapping: any non-sentinel slot label present on only one
    // of the two sides collapses to the sentinel, in both directions.
    auto label_set = [](const std::vector<EpisodeItem>& items) {
        std::unordered_set<std::string> labels;
        for (const auto& item : items)
            for (const auto& slot : item.record.slots)
                if (slot != kOutsideLabel) labels.insert(slot);
        return labels;
    };
    auto remap = [](std::vector<EpisodeItem>& items,
                    const std::unordered_set<std::string>& keep) {
        for (auto& item : items)
            for (std::size_t j = 0; j < item.record.slots.size(); ++j) {
                auto& slot = item.record.slots[j];
                if (slot == kOutsideLabel || keep.count(slot)) continue;
                slot = kOutsideLabel;
                item.remapped[j] = true;
            }
    };
    std::unordered_set<std::string> support_labels = label_set(episode.support);
    std::unordered_set<std::string> query_labels = label_set(episode.query);
    remap(episode.query, support_labels);
    remap(episode.support, query_labels);

    episode.trace = std::move(trace);
    ++counter_;
    return episode;
}

JointEpisodeSampler::JointEpisodeSampler(
    std::vector<std::pair<std::string, FewShotSplit>> datasets,
    SamplerConfig config)
    : master_(config.seed) {
    if (datasets.empty())
        fail("sampler", "joint sampler needs at least one dataset");
    for (auto& [name, split] : datasets) {
        names_.push_back(name);
        samplers_.emplace_back(std::move(split), config);
    }
}

Episode JointEpisodeSampler::next() {
    Rng rng = master_.child(counter_);
    std::size_t pick = rng.index(samplers_.size());
    Episode episode = samplers_[pick].next_with(rng, counter_);
    episode.source_dataset = names_[pick];
    ++counter_;
    return episode;
}

}  // namespace fewshot
