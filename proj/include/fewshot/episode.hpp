#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "fewshot/corpus.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {

/// A split's class inventory and per-class example pools.
struct FewShotSplit {
    std::string name;
    std::vector<std::string> classes;  // first-appearance order
    std::unordered_map<std::string, std::vector<UtteranceRecord>> examples;

    static FewShotSplit from_records(std::string name,
                                     const std::vector<UtteranceRecord>& records);

    const std::vector<UtteranceRecord>& class_examples(
        const std::string& label) const;
    std::size_t class_size(const std::string& label) const;
};

struct SamplerConfig {
    std::size_t k_max = 0;       // episode support budget cap; required
    std::uint64_t seed = 0;
    std::size_t query_cap = 10;
    std::size_t per_class_cap = 20;
};

struct ClassTrace {
    std::string label;
    std::size_t population = 0;  // |X_l| in the split
    double alpha = 0.0;          // log-noise draw
    double proportion = 0.0;     // normalized noisy share R_l
    std::size_t support_shot = 0;  // k_l
};

struct EpisodeTrace {
    std::size_t way = 0;                 // n
    std::vector<std::string> classes;    // L, in draw order
    std::size_t query_shot = 0;          // k_q, shared by all classes
    double beta = 0.0;
    std::size_t support_budget = 0;      // |S|
    std::vector<ClassTrace> class_traces;
};

/// One utterance inside an episode. Slot labels may have been remapped to
/// the outside sentinel; remapped[j] marks the tokens that were.
struct EpisodeItem {
    UtteranceRecord record;
    std::vector<bool> remapped;
};

struct Episode {
    std::vector<EpisodeItem> support;
    std::vector<EpisodeItem> query;
    EpisodeTrace trace;
    std::string source_dataset;
    std::uint64_t index = 0;  // position in the sampler's stream
};

// The sampling formulas, exposed for direct evaluation in tests. All take
// the chosen classes' full population sizes in draw order.

/// min(query_cap, min_l floor(|X_l| / 2)). May be 0 for degenerate pools;
/// the sampler turns that into an error naming the class.
std::size_t query_shot_for(const std::vector<std::size_t>& class_sizes,
                           std::size_t query_cap);

/// min(k_max, sum_l ceil(beta * min(per_class_cap, |X_l| - query_shot))).
std::size_t support_budget_for(const std::vector<std::size_t>& class_sizes,
                               std::size_t query_shot, double beta,
                               std::size_t k_max, std::size_t per_class_cap);

/// R_l = exp(alpha_l)|X_l| / sum exp(alpha_l')|X_l'|.
std::vector<double> shot_proportions(const std::vector<std::size_t>& class_sizes,
                                     const std::vector<double>& alphas);

/// k_l = min(floor(R_l * (|S| - n)) + 1, |X_l| - query_shot). Requires the
/// budget to cover at least one example per class (|S| >= n).
std::vector<std::size_t> class_shots_for(
    const std::vector<std::size_t>& class_sizes,
    const std::vector<double>& proportions, std::size_t support_budget,
    std::size_t query_shot);

/// Draws episodes from one split. Episode parameters (way, shots, budget)
/// always come from the split's full class populations; the example buffer
/// only decides which concrete examples are still available. Drawn examples
/// leave the buffer, and when a chosen class cannot supply its shots the
/// whole buffer is refreshed to all examples before drawing. Each episode
/// uses an rng derived from the seed and the episode counter, so a stream
/// replays identically from a fresh sampler.
class EpisodeSampler {
public:
    EpisodeSampler(FewShotSplit split, SamplerConfig config);

    Episode next();

    /// Samples using external randomness; used by the joint sampler so one
    /// derived stream covers both the dataset choice and the episode.
    Episode next_with(Rng& rng, std::uint64_t stream_index);

    std::uint64_t episodes_sampled() const { return counter_; }
    std::uint64_t refresh_count() const { return refreshes_; }
    std::size_t buffer_remaining(const std::string& label) const;
    const FewShotSplit& split() const { return split_; }

private:
    FewShotSplit split_;
    SamplerConfig config_;
    Rng master_;
    std::unordered_map<std::string, std::vector<std::size_t>> available_;
    std::uint64_t counter_ = 0;
    std::uint64_t refreshes_ = 0;
};

/// Zips several datasets into one episode stream: each episode first picks
/// its source dataset uniformly, then samples from that dataset's buffer.
class JointEpisodeSampler {
public:
    JointEpisodeSampler(
        std::vector<std::pair<std::string, FewShotSplit>> datasets,
        SamplerConfig config);

    Episode next();

    std::size_t dataset_count() const { return samplers_.size(); }
    const std::string& dataset_name(std::size_t i) const { return names_[i]; }

private:
    std::vector<std::string> names_;
    std::vector<EpisodeSampler> samplers_;
    Rng master_;
    std::uint64_t counter_ = 0;
};

}  // namespace fewshot
