#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fewshot/encoder.hpp"
#include "fewshot/episode.hpp"
#include "fewshot/metrics.hpp"
#include "fewshot/params.hpp"
#include "fewshot/rng.hpp"
#include "fewshot/tensor.hpp"

namespace fewshot {

/// One utterance prepared for a model: constant per-token input vectors and
/// integer targets resolved against a fixed label inventory.
struct EncodedItem {
    std::vector<Tensor> token_inputs;
    std::size_t intent_id = 0;
    std::vector<std::size_t> slot_ids;
};

/// An episode resolved to integer targets. The slot inventory is the
/// support set's label set with the outside sentinel always at index 0;
/// intent labels keep the episode's class draw order. Remapping has already
/// run, so query labels never fall outside the support inventory.
struct EpisodeView {
    std::vector<std::string> intent_labels;
    std::vector<std::string> slot_labels;
    std::vector<EncodedItem> support;
    std::vector<EncodedItem> query;
};

/// Maps an utterance to its per-token input vectors (embedding rows or
/// precomputed contextual vectors).
using TokenInputFn =
    std::function<std::vector<Tensor>(const UtteranceRecord&)>;

EpisodeView build_episode_view(const Episode& episode,
                               const TokenInputFn& token_inputs);

/// Class means over the support set: one vector per intent (mean of
/// sentence vectors) and per slot label (mean of token states). A slot
/// label with no member tokens — only ever the sentinel — gets a zero
/// vector and a zero count.
struct PrototypeSet {
    std::vector<Tensor> intent_prototypes;  // aligned with intent_labels
    std::vector<Tensor> slot_prototypes;    // aligned with slot_labels
    std::vector<std::size_t> intent_counts;
    std::vector<std::size_t> slot_counts;
};

PrototypeSet compute_prototypes(const EncoderConfig& config,
                                const ParameterSet& encoder_params,
                                const EpisodeView& view);

/// Logits of the nearest-prototype model: one negated squared Euclidean
/// distance per prototype.
Tensor negdist_logits(const Tensor& vector,
                      const std::vector<Tensor>& prototypes);

/// Mean over the query set of the intent and per-token slot cross
/// entropies under softmax(-distance^2) to the support prototypes.
Tensor proto_episode_loss(const EncoderConfig& config,
                          const ParameterSet& encoder_params,
                          const EpisodeView& view);

/// Per-query outputs of any episode-level model: hard predictions plus the
/// log-probabilities they came from.
struct EpisodePrediction {
    std::vector<std::size_t> intents;
    std::vector<std::vector<std::size_t>> slots;
    std::vector<std::vector<double>> intent_log_probs;
    std::vector<std::vector<std::vector<double>>> slot_log_probs;
};

EpisodePrediction proto_predict(const EncoderConfig& config,
                                const ParameterSet& encoder_params,
                                const EpisodeView& view);

/// Mean over items of [intent cross entropy + summed per-token slot cross
/// entropy] under the named fully connected heads. The subset overload
/// restricts to the given item indices (one mini-batch).
Tensor supervised_loss(const EncoderConfig& config,
                       const ParameterSet& params,
                       const std::string& head_prefix,
                       const std::vector<EncodedItem>& items);
Tensor supervised_loss(const EncoderConfig& config,
                       const ParameterSet& params,
                       const std::string& head_prefix,
                       const std::vector<EncodedItem>& items,
                       const std::vector<std::size_t>& subset);

/// Argmax predictions from the named heads, encoding with encoder_params.
EpisodePrediction predict_with_heads(const EncoderConfig& config,
                                     const ParameterSet& encoder_params,
                                     const ParameterSet& head_params,
                                     const std::string& head_prefix,
                                     const std::vector<EncodedItem>& queries);

/// Copies the encoder parameters, attaches zero-initialized episode heads
/// under the prefix "episode", and runs `steps` SGD updates on the support
/// loss. The input parameters are never touched; the returned set holds the
/// adapted encoder plus the episode heads.
ParameterSet fomaml_inner_finetune(const EncoderConfig& config,
                                   const ParameterSet& encoder_params,
                                   const EpisodeView& view,
                                   std::size_t steps, double inner_lr);

/// One meta-update: inner-adapts a copy on the support set, computes the
/// query loss at the adapted parameters, takes its gradient there (the
/// first-order approximation), transfers that gradient onto the original
/// encoder parameters, and applies the outer optimizer to them. The episode
/// heads are discarded. Returns the query loss value.
double fomaml_meta_step(const EncoderConfig& config,
                        const ParameterSet& encoder_params,
                        const EpisodeView& view, std::size_t inner_steps,
                        double inner_lr, Optimizer& outer);

/// One dataset's pretraining pool: items indexed against that dataset's
/// full train-split inventories, trained through the persistent heads named
/// by head_prefix.
struct PretrainDataset {
    std::string head_prefix;
    std::vector<EncodedItem> items;
};

struct PretrainSettings {
    std::size_t epochs = 0;
    std::size_t batch_size = 512;
    double learning_rate = 0.001;
};

struct PretrainStats {
    std::size_t batches = 0;
    std::size_t examples_seen = 0;
    std::vector<double> epoch_losses;  // item-weighted mean loss per epoch
};

/// Standard mini-batch pretraining over full class inventories. Each epoch
/// shuffles every dataset's items, chunks them into batches, and visits
/// the combined batch list in shuffled order; every batch updates the
/// encoder plus its own dataset's heads. Covers every item exactly once
/// per epoch. When given, epoch_callback runs after each epoch with the
/// 0-based epoch index and its mean loss (checkpointing hook).
PretrainStats baseline_pretrain(
    const EncoderConfig& config, const ParameterSet& params,
    const std::vector<PretrainDataset>& datasets,
    const PretrainSettings& settings, Rng& rng,
    const std::function<void(std::size_t, double)>& epoch_callback = {});

/// Freezes the encoder (support and query features are computed once,
/// outside any gradient tape), trains fresh zero-initialized episode heads
/// with `steps` full-support-batch Adam updates, and predicts the query
/// set. encoder_params are bit-untouched.
EpisodePrediction baseline_adapt_evaluate(const EncoderConfig& config,
                                          const ParameterSet& encoder_params,
                                          const EpisodeView& view,
                                          std::size_t steps,
                                          double learning_rate);

enum class EpisodeAlgorithm { proto, fomaml, finetune };

struct EvalSettings {
    std::size_t inner_steps = 8;       // fomaml support adaptation
    double inner_lr = 0.01;
    std::size_t adapt_steps = 10;      // baseline head fine-tuning
    double adapt_lr = 0.001;
};

EpisodePrediction evaluate_episode(EpisodeAlgorithm algorithm,
                                   const EncoderConfig& config,
                                   const ParameterSet& encoder_params,
                                   const EpisodeView& view,
                                   const EvalSettings& settings);

/// Intent accuracy and span F1 for one episode's predictions, with gold
/// labels taken from the view (post-remap, sentinel-exempt by the span
/// extractor).
EpisodeMetrics score_episode(const EpisodeView& view,
                             const EpisodePrediction& prediction);

}  // namespace fewshot
