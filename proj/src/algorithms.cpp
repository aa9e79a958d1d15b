#include "fewshot/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "fewshot/errors.hpp"

namespace fewshot {

namespace {

/// First index attaining the maximum. Ties resolve to the earliest
/// position so predictions are deterministic.
std::size_t argmax(const std::vector<double>& values) {
    if (values.empty()) fail("algorithms", "argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
    std::vector<double> probs = softmax_values(logits);
    for (double& p : probs) p = std::log(p);
    return probs;
}

EncodedItem encode_item(const Episode& episode, const EpisodeItem& item,
                        const TokenInputFn& token_inputs,
                        const std::unordered_map<std::string, std::size_t>&
                            intent_index,
                        const std::unordered_map<std::string, std::size_t>&
                            slot_index) {
    EncodedItem out;
    out.token_inputs = token_inputs(item.record);
    if (out.token_inputs.size() != item.record.tokens.size())
        fail("algorithms",
             "episode " + std::to_string(episode.index) + ": utterance '" +
                 item.record.id + "' got " +
                 std::to_string(out.token_inputs.size()) +
                 " input vectors for " +
                 std::to_string(item.record.tokens.size()) + " tokens");
    auto intent_it = intent_index.find(item.record.intent);
    if (intent_it == intent_index.end())
        fail("algorithms", "episode " + std::to_string(episode.index) +
                               ": intent '" + item.record.intent +
                               "' is not one of the episode's classes");
    out.intent_id = intent_it->second;
    for (const std::string& slot : item.record.slots) {
        auto slot_it = slot_index.find(slot);
        if (slot_it == slot_index.end())
            fail("algorithms", "episode " + std::to_string(episode.index) +
                                   ": slot label '" + slot +
                                   "' missing from the support inventory; "
                                   "was the episode remapped?");
        out.slot_ids.push_back(slot_it->second);
    }
    return out;
}

/// Mean of the member tensors under the active tape.
Tensor mean_of(const std::vector<Tensor>& members) {
    return scale(add_many(members), 1.0 / static_cast<double>(members.size()));
}

/// Shared loss body: intent cross entropy plus summed slot cross entropy
/// for one utterance, given its logits.
Tensor item_loss(const Tensor& intent_logits_v, std::size_t intent_id,
                 const Tensor& slot_logits_m,
                 const std::vector<std::size_t>& slot_ids) {
    return add(softmax_cross_entropy(intent_logits_v, intent_id),
               softmax_cross_entropy(slot_logits_m, slot_ids,
                                     Reduction::sum));
}

ParameterSet subset_by_prefix(const ParameterSet& params,
                              const std::vector<std::string>& prefixes) {
    ParameterSet out;
    for (const auto& [name, tensor] : params.entries())
        for (const std::string& prefix : prefixes)
            if (name.rfind(prefix, 0) == 0) {
                out.add(name, tensor);
                break;
            }
    return out;
}

}  // namespace

EpisodeView build_episode_view(const Episode& episode,
                               const TokenInputFn& token_inputs) {
    if (episode.support.empty() || episode.query.empty())
        fail("algorithms", "episode " + std::to_string(episode.index) +
                               " has an empty support or query set");

    EpisodeView view;
    view.intent_labels = episode.trace.classes;
    std::unordered_map<std::string, std::size_t> intent_index;
    for (std::size_t i = 0; i < view.intent_labels.size(); ++i)
        intent_index[view.intent_labels[i]] = i;

    view.slot_labels.push_back(kOutsideLabel);
    std::unordered_map<std::string, std::size_t> slot_index;
    slot_index[kOutsideLabel] = 0;
    for (const EpisodeItem& item : episode.support)
        for (const std::string& slot : item.record.slots)
            if (!slot_index.count(slot)) {
                slot_index[slot] = view.slot_labels.size();
                view.slot_labels.push_back(slot);
            }

    for (const EpisodeItem& item : episode.support)
        view.support.push_back(encode_item(episode, item, token_inputs,
                                           intent_index, slot_index));
    for (const EpisodeItem& item : episode.query)
        view.query.push_back(encode_item(episode, item, token_inputs,
                                         intent_index, slot_index));
    return view;
}

PrototypeSet compute_prototypes(const EncoderConfig& config,
                                const ParameterSet& encoder_params,
                                const EpisodeView& view) {
    if (view.support.empty())
        fail("algorithms", "compute_prototypes: empty support set");

    std::vector<std::vector<Tensor>> intent_members(view.intent_labels.size());
    std::vector<std::vector<Tensor>> slot_members(view.slot_labels.size());
    for (const EncodedItem& item : view.support) {
        EncodedUtterance enc =
            encode_utterance(config, encoder_params, item.token_inputs);
        intent_members[item.intent_id].push_back(enc.sentence_vector);
        for (std::size_t j = 0; j < item.slot_ids.size(); ++j)
            slot_members[item.slot_ids[j]].push_back(enc.token_states[j]);
    }

    PrototypeSet prototypes;
    for (std::size_t l = 0; l < intent_members.size(); ++l) {
        if (intent_members[l].empty())
            fail("algorithms", "no support examples for intent '" +
                                   view.intent_labels[l] + "'");
        prototypes.intent_prototypes.push_back(mean_of(intent_members[l]));
        prototypes.intent_counts.push_back(intent_members[l].size());
    }
    for (std::size_t a = 0; a < slot_members.size(); ++a) {
        if (slot_members[a].empty()) {
            // Only the sentinel can be memberless: every other label is in
            // the inventory because some support token carries it.
            prototypes.slot_prototypes.push_back(
                Tensor::zeros({config.state_dim()}));
        } else {
            prototypes.slot_prototypes.push_back(mean_of(slot_members[a]));
        }
        prototypes.slot_counts.push_back(slot_members[a].size());
    }
    return prototypes;
}

Tensor negdist_logits(const Tensor& vector,
                      const std::vector<Tensor>& prototypes) {
    if (prototypes.empty())
        fail("algorithms", "negdist_logits: no prototypes");
    std::vector<Tensor> scalars;
    scalars.reserve(prototypes.size());
    for (const Tensor& p : prototypes)
        scalars.push_back(scale(squared_distance(vector, p), -1.0));
    return stack_scalars(scalars);
}

Tensor proto_episode_loss(const EncoderConfig& config,
                          const ParameterSet& encoder_params,
                          const EpisodeView& view) {
    if (view.query.empty())
        fail("algorithms", "proto_episode_loss: empty query set");
    PrototypeSet prototypes =
        compute_prototypes(config, encoder_params, view);

    std::vector<Tensor> terms;
    terms.reserve(view.query.size());
    for (const EncodedItem& item : view.query) {
        EncodedUtterance enc =
            encode_utterance(config, encoder_params, item.token_inputs);
        Tensor intent_l =
            negdist_logits(enc.sentence_vector, prototypes.intent_prototypes);
        std::vector<Tensor> slot_rows;
        slot_rows.reserve(enc.token_states.size());
        for (const Tensor& state : enc.token_states)
            slot_rows.push_back(
                negdist_logits(state, prototypes.slot_prototypes));
        terms.push_back(item_loss(intent_l, item.intent_id,
                                  stack_rows(slot_rows), item.slot_ids));
    }
    return mean_of(terms);
}

EpisodePrediction proto_predict(const EncoderConfig& config,
                                const ParameterSet& encoder_params,
                                const EpisodeView& view) {
    PrototypeSet prototypes =
        compute_prototypes(config, encoder_params, view);

    EpisodePrediction prediction;
    for (const EncodedItem& item : view.query) {
        EncodedUtterance enc =
            encode_utterance(config, encoder_params, item.token_inputs);
        std::vector<double> intent_lp = log_softmax(
            negdist_logits(enc.sentence_vector, prototypes.intent_prototypes)
                .values());
        prediction.intents.push_back(argmax(intent_lp));
        prediction.intent_log_probs.push_back(std::move(intent_lp));

        std::vector<std::size_t> token_preds;
        std::vector<std::vector<double>> token_lps;
        for (const Tensor& state : enc.token_states) {
            std::vector<double> lp = log_softmax(
                negdist_logits(state, prototypes.slot_prototypes).values());
            token_preds.push_back(argmax(lp));
            token_lps.push_back(std::move(lp));
        }
        prediction.slots.push_back(std::move(token_preds));
        prediction.slot_log_probs.push_back(std::move(token_lps));
    }
    return prediction;
}

Tensor supervised_loss(const EncoderConfig& config,
                       const ParameterSet& params,
                       const std::string& head_prefix,
                       const std::vector<EncodedItem>& items) {
    std::vector<std::size_t> all(items.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return supervised_loss(config, params, head_prefix, items, all);
}

Tensor supervised_loss(const EncoderConfig& config,
                       const ParameterSet& params,
                       const std::string& head_prefix,
                       const std::vector<EncodedItem>& items,
                       const std::vector<std::size_t>& subset) {
    if (subset.empty())
        fail("algorithms", "supervised_loss: empty batch");
    std::vector<Tensor> terms;
    terms.reserve(subset.size());
    for (std::size_t index : subset) {
        if (index >= items.size())
            fail("algorithms", "supervised_loss: batch index out of range");
        const EncodedItem& item = items[index];
        EncodedUtterance enc =
            encode_utterance(config, params, item.token_inputs);
        terms.push_back(item_loss(intent_logits(params, head_prefix, enc),
                                  item.intent_id,
                                  slot_logits(params, head_prefix, enc),
                                  item.slot_ids));
    }
    return mean_of(terms);
}

EpisodePrediction predict_with_heads(const EncoderConfig& config,
                                     const ParameterSet& encoder_params,
                                     const ParameterSet& head_params,
                                     const std::string& head_prefix,
                                     const std::vector<EncodedItem>& queries) {
    EpisodePrediction prediction;
    for (const EncodedItem& item : queries) {
        EncodedUtterance enc =
            encode_utterance(config, encoder_params, item.token_inputs);
        std::vector<double> intent_lp =
            log_softmax(intent_logits(head_params, head_prefix, enc).values());
        prediction.intents.push_back(argmax(intent_lp));
        prediction.intent_log_probs.push_back(std::move(intent_lp));

        Tensor slot_m = slot_logits(head_params, head_prefix, enc);
        std::size_t labels = slot_m.dim(1);
        std::vector<std::size_t> token_preds;
        std::vector<std::vector<double>> token_lps;
        for (std::size_t j = 0; j < slot_m.dim(0); ++j) {
            std::vector<double> logits(
                slot_m.values().begin() +
                    static_cast<std::ptrdiff_t>(j * labels),
                slot_m.values().begin() +
                    static_cast<std::ptrdiff_t>((j + 1) * labels));
            std::vector<double> lp = log_softmax(logits);
            token_preds.push_back(argmax(lp));
            token_lps.push_back(std::move(lp));
        }
        prediction.slots.push_back(std::move(token_preds));
        prediction.slot_log_probs.push_back(std::move(token_lps));
    }
    return prediction;
}

ParameterSet fomaml_inner_finetune(const EncoderConfig& config,
                                   const ParameterSet& encoder_params,
                                   const EpisodeView& view,
                                   std::size_t steps, double inner_lr) {
    ParameterSet adapted = encoder_params.deep_copy();
    adapted.add_all(init_head_params("episode", config.state_dim(),
                                     view.intent_labels.size(),
                                     view.slot_labels.size(),
                                     HeadInit::zeros, nullptr));
    Optimizer inner = Optimizer::sgd(inner_lr);
    for (std::size_t step = 0; step < steps; ++step) {
        Tape tape;
        Tensor loss = supervised_loss(config, adapted, "episode",
                                      view.support);
        tape.backward(loss);
        inner.step(adapted);
    }
    return adapted;
}

double fomaml_meta_step(const EncoderConfig& config,
                        const ParameterSet& encoder_params,
                        const EpisodeView& view, std::size_t inner_steps,
                        double inner_lr, Optimizer& outer) {
    ParameterSet adapted = fomaml_inner_finetune(config, encoder_params,
                                                 view, inner_steps, inner_lr);
    double loss_value = 0.0;
    {
        Tape tape;
        Tensor loss = supervised_loss(config, adapted, "episode", view.query);
        loss_value = loss.scalar_value();
        tape.backward(loss);
    }
    // First-order transfer: the query-loss gradient taken at the adapted
    // parameters is applied directly to the originals.
    for (const auto& [name, tensor] : encoder_params.entries()) {
        const Tensor& source = adapted.get(name);
        if (!source.has_grad())
            fail("algorithms", "meta step: parameter '" + name +
                                   "' received no gradient");
        tensor.grad() = source.grad();
    }
    outer.step(encoder_params);
    return loss_value;
}

PretrainStats baseline_pretrain(
    const EncoderConfig& config, const ParameterSet& params,
    const std::vector<PretrainDataset>& datasets,
    const PretrainSettings& settings, Rng& rng,
    const std::function<void(std::size_t, double)>& epoch_callback) {
    if (datasets.empty())
        fail("algorithms", "baseline_pretrain: no datasets");
    if (settings.batch_size == 0)
        fail("algorithms", "baseline_pretrain: batch size must be positive");
    std::size_t total_items = 0;
    std::vector<ParameterSet> participating;
    for (const PretrainDataset& dataset : datasets) {
        if (dataset.items.empty())
            fail("algorithms", "baseline_pretrain: dataset with head "
                               "prefix '" +
                                   dataset.head_prefix + "' has no items");
        total_items += dataset.items.size();
        ParameterSet view = subset_by_prefix(
            params, {"encoder.", dataset.head_prefix + "."});
        if (view.count() != 8)  // 4 encoder tensors + 4 head tensors
            fail("algorithms", "baseline_pretrain: expected encoder plus "
                               "heads under '" +
                                   dataset.head_prefix + "', found " +
                                   std::to_string(view.count()) +
                                   " parameters");
        participating.push_back(std::move(view));
    }

    Optimizer adam = Optimizer::adam(settings.learning_rate);
    PretrainStats stats;
    for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
        // (dataset, batch member indices) pairs covering every item once.
        std::vector<std::pair<std::size_t, std::vector<std::size_t>>> batches;
        for (std::size_t d = 0; d < datasets.size(); ++d) {
            std::vector<std::size_t> order(datasets[d].items.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            rng.shuffle(order);
            for (std::size_t start = 0; start < order.size();
                 start += settings.batch_size) {
                std::size_t stop =
                    std::min(order.size(), start + settings.batch_size);
                batches.emplace_back(
                    d, std::vector<std::size_t>(
                           order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(stop)));
            }
        }
        rng.shuffle(batches);

        double weighted_loss = 0.0;
        for (const auto& [d, members] : batches) {
            double batch_loss = 0.0;
            {
                Tape tape;
                Tensor loss =
                    supervised_loss(config, params, datasets[d].head_prefix,
                                    datasets[d].items, members);
                batch_loss = loss.scalar_value();
                tape.backward(loss);
            }
            adam.step(participating[d]);
            weighted_loss +=
                batch_loss * static_cast<double>(members.size());
            ++stats.batches;
            stats.examples_seen += members.size();
        }
        stats.epoch_losses.push_back(weighted_loss /
                                     static_cast<double>(total_items));
        if (epoch_callback) epoch_callback(epoch, stats.epoch_losses.back());
    }
    return stats;
}

EpisodePrediction baseline_adapt_evaluate(const EncoderConfig& config,
                                          const ParameterSet& encoder_params,
                                          const EpisodeView& view,
                                          std::size_t steps,
                                          double learning_rate) {
    // The encoder contributes features only: every support utterance is
    // encoded once and the results are detached into constants, so the
    // adaptation below cannot reach encoder parameters by construction.
    auto detach = [](const Tensor& t) {
        return Tensor::from_values(t.shape(), t.values(), false);
    };
    std::vector<EncodedUtterance> frozen;
    frozen.reserve(view.support.size());
    for (const EncodedItem& item : view.support) {
        EncodedUtterance enc =
            encode_utterance(config, encoder_params, item.token_inputs);
        EncodedUtterance cut;
        cut.sentence_vector = detach(enc.sentence_vector);
        for (const Tensor& state : enc.token_states)
            cut.token_states.push_back(detach(state));
        frozen.push_back(std::move(cut));
    }

    ParameterSet heads = init_head_params("adapt", config.state_dim(),
                                          view.intent_labels.size(),
                                          view.slot_labels.size(),
                                          HeadInit::zeros, nullptr);
    Optimizer adam = Optimizer::adam(learning_rate);
    for (std::size_t step = 0; step < steps; ++step) {
        Tape tape;
        std::vector<Tensor> terms;
        terms.reserve(frozen.size());
        for (std::size_t i = 0; i < frozen.size(); ++i)
            terms.push_back(
                item_loss(intent_logits(heads, "adapt", frozen[i]),
                          view.support[i].intent_id,
                          slot_logits(heads, "adapt", frozen[i]),
                          view.support[i].slot_ids));
        Tensor loss = mean_of(terms);
        tape.backward(loss);
        adam.step(heads);
    }
    return predict_with_heads(config, encoder_params, heads, "adapt",
                              view.query);
}

EpisodePrediction evaluate_episode(EpisodeAlgorithm algorithm,
                                   const EncoderConfig& config,
                                   const ParameterSet& encoder_params,
                                   const EpisodeView& view,
                                   const EvalSettings& settings) {
    switch (algorithm) {
        case EpisodeAlgorithm::proto:
            return proto_predict(config, encoder_params, view);
        case EpisodeAlgorithm::fomaml: {
            ParameterSet adapted = fomaml_inner_finetune(
                config, encoder_params, view, settings.inner_steps,
                settings.inner_lr);
            return predict_with_heads(config, adapted, adapted, "episode",
                                      view.query);
        }
        case EpisodeAlgorithm::finetune:
            return baseline_adapt_evaluate(config, encoder_params, view,
                                           settings.adapt_steps,
                                           settings.adapt_lr);
    }
    fail("algorithms", "unreachable algorithm value");
}

EpisodeMetrics score_episode(const EpisodeView& view,
                             const EpisodePrediction& prediction) {
    if (prediction.intents.size() != view.query.size() ||
        prediction.slots.size() != view.query.size())
        fail("algorithms", "score_episode: prediction/query size mismatch");

    std::vector<std::size_t> gold_intents;
    std::vector<std::vector<std::string>> predicted_slots, gold_slots;
    for (std::size_t q = 0; q < view.query.size(); ++q) {
        gold_intents.push_back(view.query[q].intent_id);
        std::vector<std::string> predicted, gold;
        if (prediction.slots[q].size() != view.query[q].slot_ids.size())
            fail("algorithms", "score_episode: token count mismatch");
        for (std::size_t id : prediction.slots[q]) {
            if (id >= view.slot_labels.size())
                fail("algorithms", "score_episode: slot id out of range");
            predicted.push_back(view.slot_labels[id]);
        }
        for (std::size_t id : view.query[q].slot_ids)
            gold.push_back(view.slot_labels[id]);
        predicted_slots.push_back(std::move(predicted));
        gold_slots.push_back(std::move(gold));
    }

    EpisodeMetrics metrics = span_f1(predicted_slots, gold_slots);
    metrics.intent_accuracy = ic_accuracy(prediction.intents, gold_intents);
    metrics.query_count = view.query.size();
    return metrics;
}

}  // namespace fewshot
