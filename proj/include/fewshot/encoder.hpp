#pragma once

#include <string>
#include <vector>

#include "fewshot/embedding.hpp"
#include "fewshot/params.hpp"
#include "fewshot/rng.hpp"
#include "fewshot/tensor.hpp"

namespace fewshot {

struct EncoderConfig {
    std::size_t embedding_dim = 0;        // E, per-token input width
    std::size_t hidden_dim = 256;         // H per direction; output is 2H
    bool contextual_vectors = false;      // token vectors come from a sidecar
    bool slot_prefix_encoding = false;    // per-token state = encoding of the
                                          // token's prefix subsequence
    std::size_t state_dim() const { return 2 * hidden_dim; }
};

/// Per-utterance encoder output: one 2H state per token plus a sentence
/// vector made of the two directions' final states.
struct EncodedUtterance {
    std::vector<Tensor> token_states;  // m vectors of size 2H
    Tensor sentence_vector;            // size 2H

    Tensor token_matrix() const { return stack_rows(token_states); }
};

/// Fresh recurrent weights: per direction one packed (E+H) x 4H gate matrix
/// (Xavier) and one 4H bias (zeros). Names: encoder.{fw,bw}.{weights,bias}.
ParameterSet init_encoder_params(const EncoderConfig& config, Rng& rng);

/// Runs the forward and backward recurrences over per-token input vectors.
/// token_states[j] concatenates the forward state after consuming token j
/// with the backward state after consuming tokens m-1..j; the sentence
/// vector concatenates the two final states. With slot_prefix_encoding set,
/// token_states[j] is instead the full encoding of tokens 0..j, which costs
/// O(m^2) recurrence steps.
EncodedUtterance encode_utterance(const EncoderConfig& config,
                                  const ParameterSet& params,
                                  const std::vector<Tensor>& token_inputs);

/// Embedding rows for a token index sequence, ready for encode_utterance.
std::vector<Tensor> embed_tokens(const EmbeddingTable& table,
                                 const std::vector<std::size_t>& token_ids);

/// Per-token tensors from precomputed contextual vectors.
std::vector<Tensor> contextual_token_inputs(
    const std::vector<std::vector<double>>& vectors);

enum class HeadInit { zeros, xavier };

/// Fully connected intent and slot output layers over the 2H encoder state.
/// Names: <prefix>.{intent,slot}.{weights,bias}. Zero initialization is
/// used for per-episode heads; Xavier (with zero biases) for persistent
/// ones. rng may be null for HeadInit::zeros.
ParameterSet init_head_params(const std::string& prefix,
                              std::size_t state_dim, std::size_t intent_count,
                              std::size_t slot_count, HeadInit init,
                              Rng* rng);

/// Per-intent logits from the sentence vector: shape [intent_count].
Tensor intent_logits(const ParameterSet& head_params,
                     const std::string& prefix, const EncodedUtterance& enc);

/// Per-token, per-slot-label logits: shape [m x slot_count].
Tensor slot_logits(const ParameterSet& head_params, const std::string& prefix,
                   const EncodedUtterance& enc);

}  // namespace fewshot
