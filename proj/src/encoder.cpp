#include "fewshot/encoder.hpp"

#include "fewshot/errors.hpp"

namespace fewshot {

namespace {

void check_config(const EncoderConfig& config) {
    if (config.embedding_dim == 0 || config.hidden_dim == 0)
        fail("encoder", "embedding_dim and hidden_dim must be positive");
}

/// Runs one direction over the inputs in the given order and returns the
/// state after each step, indexed like the iteration order.
std::vector<Tensor> run_direction(const std::vector<Tensor>& inputs,
                                  const Tensor& weights, const Tensor& bias,
                                  std::size_t hidden_dim, bool reverse) {
    LstmState state{Tensor::zeros({hidden_dim}), Tensor::zeros({hidden_dim})};
    std::vector<Tensor> states(inputs.size());
    for (std::size_t step = 0; step < inputs.size(); ++step) {
        std::size_t j = reverse ? inputs.size() - 1 - step : step;
        state = lstm_step(inputs[j], state, weights, bias);
        states[j] = state.hidden;
    }
    return states;
}

}  // namespace

ParameterSet init_encoder_params(const EncoderConfig& config, Rng& rng) {
    check_config(config);
    std::size_t packed = config.embedding_dim + config.hidden_dim;
    ParameterSet params;
    params.add("encoder.fw.weights",
               Tensor::xavier(packed, 4 * config.hidden_dim, rng));
    params.add("encoder.fw.bias",
               Tensor::zeros({4 * config.hidden_dim}, true));
    params.add("encoder.bw.weights",
               Tensor::xavier(packed, 4 * config.hidden_dim, rng));
    params.add("encoder.bw.bias",
               Tensor::zeros({4 * config.hidden_dim}, true));
    return params;
}

EncodedUtterance encode_utterance(const EncoderConfig& config,
                                  const ParameterSet& params,
                                  const std::vector<Tensor>& token_inputs) {
    check_config(config);
    if (token_inputs.empty())
        fail("encoder", "encode_utterance: empty utterance");
    for (const Tensor& t : token_inputs)
        if (t.rank() != 1 || t.dim(0) != config.embedding_dim)
            fail("encoder", "encode_utterance: token input of shape " +
                                shape_str(t.shape()) + ", expected [" +
                                std::to_string(config.embedding_dim) + "]");

    const Tensor& fw_w = params.get("encoder.fw.weights");
    const Tensor& fw_b = params.get("encoder.fw.bias");
    const Tensor& bw_w = params.get("encoder.bw.weights");
    const Tensor& bw_b = params.get("encoder.bw.bias");
    std::size_t m = token_inputs.size();
    std::size_t h = config.hidden_dim;

    std::vector<Tensor> fw = run_direction(token_inputs, fw_w, fw_b, h, false);
    std::vector<Tensor> bw = run_direction(token_inputs, bw_w, bw_b, h, true);

    EncodedUtterance out;
    out.token_states.reserve(m);
    if (config.slot_prefix_encoding) {
        // Position j gets the sentence encoding of the prefix 0..j. The
        // forward final state of that prefix is fw[j] from the full pass;
        // the backward direction must rerun per prefix.
        for (std::size_t j = 0; j < m; ++j) {
            std::vector<Tensor> prefix(token_inputs.begin(),
                                       token_inputs.begin() +
                                           static_cast<std::ptrdiff_t>(j + 1));
            std::vector<Tensor> pbw = run_direction(prefix, bw_w, bw_b, h,
                                                    true);
            out.token_states.push_back(concat(fw[j], pbw[0]));
        }
    } else {
        for (std::size_t j = 0; j < m; ++j)
            out.token_states.push_back(concat(fw[j], bw[j]));
    }
    out.sentence_vector = concat(fw[m - 1], bw[0]);
    return out;
}

std::vector<Tensor> embed_tokens(const EmbeddingTable& table,
                                 const std::vector<std::size_t>& token_ids) {
    std::vector<Tensor> out;
    out.reserve(token_ids.size());
    for (std::size_t id : token_ids) out.push_back(table.row_vector(id));
    return out;
}

std::vector<Tensor> contextual_token_inputs(
    const std::vector<std::vector<double>>& vectors) {
    std::vector<Tensor> out;
    out.reserve(vectors.size());
    for (const auto& v : vectors)
        out.push_back(Tensor::from_values({v.size()}, v, false));
    return out;
}

ParameterSet init_head_params(const std::string& prefix,
                              std::size_t state_dim, std::size_t intent_count,
                              std::size_t slot_count, HeadInit init,
                              Rng* rng) {
    if (state_dim == 0 || intent_count == 0 || slot_count == 0)
        fail("encoder", "init_head_params: all dimensions must be positive");
    ParameterSet params;
    auto weight = [&](std::size_t rows, std::size_t cols) {
        if (init == HeadInit::zeros) return Tensor::zeros({rows, cols}, true);
        if (!rng)
            fail("encoder", "init_head_params: xavier init needs an rng");
        return Tensor::xavier(rows, cols, *rng);
    };
    params.add(prefix + ".intent.weights", weight(state_dim, intent_count));
    params.add(prefix + ".intent.bias", Tensor::zeros({intent_count}, true));
    params.add(prefix + ".slot.weights", weight(state_dim, slot_count));
    params.add(prefix + ".slot.bias", Tensor::zeros({slot_count}, true));
    return params;
}

Tensor intent_logits(const ParameterSet& head_params,
                     const std::string& prefix, const EncodedUtterance& enc) {
    const Tensor& w = head_params.get(prefix + ".intent.weights");
    const Tensor& b = head_params.get(prefix + ".intent.bias");
    if (enc.sentence_vector.dim(0) != w.dim(0))
        fail("encoder", "intent_logits: state size " +
                            std::to_string(enc.sentence_vector.dim(0)) +
                            " does not match head input " +
                            std::to_string(w.dim(0)));
    return add(vecmat(enc.sentence_vector, w), b);
}

Tensor slot_logits(const ParameterSet& head_params, const std::string& prefix,
                   const EncodedUtterance& enc) {
    const Tensor& w = head_params.get(prefix + ".slot.weights");
    const Tensor& b = head_params.get(prefix + ".slot.bias");
    Tensor states = enc.token_matrix();
    if (states.dim(1) != w.dim(0))
        fail("encoder", "slot_logits: state size " +
                            std::to_string(states.dim(1)) +
                            " does not match head input " +
                            std::to_string(w.dim(0)));
    return add_bias(matmul(states, w), b);
}

}  // namespace fewshot
