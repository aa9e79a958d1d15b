#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "fewshot/encoder.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/rng.hpp"
#include "fewshot/tensor.hpp"

using namespace fewshot;

namespace {

std::vector<Tensor> random_inputs(std::size_t count, std::size_t dim,
                                  Rng& rng, bool requires_grad = false) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> v(dim);
        for (auto& x : v) x = rng.uniform_in(-1, 1);
        out.push_back(Tensor::from_values({dim}, v, requires_grad));
    }
    return out;
}

bool approx_equal(const std::vector<double>& a, const std::vector<double>& b,
                  double tol = 1e-12) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) > tol) return false;
    return true;
}

}  // namespace

TEST_CASE("single-token utterances have sentence == token state") {
    EncoderConfig config;
    config.embedding_dim = 5;
    config.hidden_dim = 4;
    Rng rng(3);
    ParameterSet params = init_encoder_params(config, rng);
    auto inputs = random_inputs(1, 5, rng);
    EncodedUtterance enc = encode_utterance(config, params, inputs);
    REQUIRE(enc.token_states.size() == 1);
    CHECK(enc.sentence_vector.dim(0) == config.state_dim());
    CHECK(approx_equal(enc.sentence_vector.values(),
                       enc.token_states[0].values()));
}

TEST_CASE("encoding is deterministic for fixed weights and inputs") {
    EncoderConfig config;
    config.embedding_dim = 6;
    config.hidden_dim = 3;
    Rng rng(11);
    ParameterSet params = init_encoder_params(config, rng);
    auto inputs = random_inputs(4, 6, rng);
    EncodedUtterance a = encode_utterance(config, params, inputs);
    EncodedUtterance b = encode_utterance(config, params, inputs);
    CHECK(a.sentence_vector.values() == b.sentence_vector.values());
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(a.token_states[j].values() == b.token_states[j].values());
}

TEST_CASE("forward states depend only on the prefix, backward on the suffix") {
    EncoderConfig config;
    config.embedding_dim = 4;
    config.hidden_dim = 3;
    Rng rng(19);
    ParameterSet params = init_encoder_params(config, rng);
    auto inputs = random_inputs(5, 4, rng);

    // Change only the last token: states at earlier positions keep their
    // forward half (first H entries) but the backward half shifts.
    auto changed = inputs;
    changed[4] = random_inputs(1, 4, rng)[0];
    EncodedUtterance base = encode_utterance(config, params, inputs);
    EncodedUtterance alt = encode_utterance(config, params, changed);

    std::size_t h = config.hidden_dim;
    for (std::size_t j = 0; j + 1 < 5; ++j) {
        auto bvals = base.token_states[j].values();
        auto avals = alt.token_states[j].values();
        bool fw_same = true, bw_same = true;
        for (std::size_t i = 0; i < h; ++i)
            if (std::abs(bvals[i] - avals[i]) > 1e-15) fw_same = false;
        for (std::size_t i = h; i < 2 * h; ++i)
            if (std::abs(bvals[i] - avals[i]) > 1e-15) bw_same = false;
        CHECK(fw_same);
        CHECK_FALSE(bw_same);
    }
    // The sentence vector reacts through its forward-final half.
    CHECK_FALSE(approx_equal(base.sentence_vector.values(),
                             alt.sentence_vector.values()));
}

TEST_CASE("encodings stay finite across many random utterances") {
    EncoderConfig config;
    config.embedding_dim = 8;
    config.hidden_dim = 5;
    Rng rng(101);
    ParameterSet params = init_encoder_params(config, rng);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t m = 1 + rng.index(12);
        auto inputs = random_inputs(m, 8, rng);
        EncodedUtterance enc = encode_utterance(config, params, inputs);
        for (double v : enc.sentence_vector.values()) {
            CHECK(std::isfinite(v));
            CHECK(std::abs(v) <= 1.0);  // tanh(c)*sigmoid bound
        }
    }
}

TEST_CASE("prefix-state mode reproduces whole-prefix sentence encodings") {
    EncoderConfig plain;
    plain.embedding_dim = 4;
    plain.hidden_dim = 3;
    EncoderConfig prefixed = plain;
    prefixed.slot_prefix_encoding = true;

    Rng rng(23);
    ParameterSet params = init_encoder_params(plain, rng);
    auto inputs = random_inputs(5, 4, rng);

    EncodedUtterance enc = encode_utterance(prefixed, params, inputs);
    for (std::size_t j = 0; j < 5; ++j) {
        std::vector<Tensor> prefix(inputs.begin(),
                                   inputs.begin() +
                                       static_cast<std::ptrdiff_t>(j + 1));
        EncodedUtterance whole = encode_utterance(plain, params, prefix);
        CHECK(approx_equal(enc.token_states[j].values(),
                           whole.sentence_vector.values()));
    }
    // The final prefix is the whole utterance, so the last token state and
    // the sentence vector agree.
    CHECK(approx_equal(enc.token_states[4].values(),
                       enc.sentence_vector.values()));
}

TEST_CASE("empty utterances and wrong input widths are rejected") {
    EncoderConfig config;
    config.embedding_dim = 4;
    config.hidden_dim = 3;
    Rng rng(5);
    ParameterSet params = init_encoder_params(config, rng);
    CHECK_THROWS_WITH_AS(encode_utterance(config, params, {}),
                         doctest::Contains("empty"), ValidationError);
    auto wrong = random_inputs(2, 7, rng);
    CHECK_THROWS_WITH_AS(encode_utterance(config, params, wrong),
                         doctest::Contains("[7]"), ValidationError);
}

TEST_CASE("zero-initialized heads give all-zero logits") {
    EncoderConfig config;
    config.embedding_dim = 4;
    config.hidden_dim = 3;
    Rng rng(7);
    ParameterSet enc_params = init_encoder_params(config, rng);
    ParameterSet head = init_head_params("episode", config.state_dim(), 4, 6,
                                         HeadInit::zeros, nullptr);
    auto inputs = random_inputs(3, 4, rng);
    EncodedUtterance enc = encode_utterance(config, enc_params, inputs);

    Tensor iv = intent_logits(head, "episode", enc);
    REQUIRE(iv.shape() == std::vector<std::size_t>{4});
    for (double v : iv.values()) CHECK(v == 0.0);

    Tensor sv = slot_logits(head, "episode", enc);
    REQUIRE(sv.shape() == std::vector<std::size_t>{3, 6});
    for (double v : sv.values()) CHECK(v == 0.0);
}

TEST_CASE("xavier heads need an rng and keep zero biases") {
    Rng rng(9);
    CHECK_THROWS_AS(
        init_head_params("p", 6, 2, 3, HeadInit::xavier, nullptr),
        ValidationError);
    ParameterSet head = init_head_params("p", 6, 2, 3, HeadInit::xavier,
                                         &rng);
    bool any_nonzero = false;
    for (double v : head.get("p.intent.weights").values())
        if (v != 0.0) any_nonzero = true;
    CHECK(any_nonzero);
    for (double v : head.get("p.intent.bias").values()) CHECK(v == 0.0);
    for (double v : head.get("p.slot.bias").values()) CHECK(v == 0.0);
}

TEST_CASE("head logits reject mismatched state sizes") {
    EncoderConfig config;
    config.embedding_dim = 4;
    config.hidden_dim = 3;
    Rng rng(13);
    ParameterSet enc_params = init_encoder_params(config, rng);
    ParameterSet head = init_head_params("p", config.state_dim() + 2, 2, 2,
                                         HeadInit::zeros, nullptr);
    auto inputs = random_inputs(2, 4, rng);
    EncodedUtterance enc = encode_utterance(config, enc_params, inputs);
    CHECK_THROWS_AS(intent_logits(head, "p", enc), ValidationError);
    CHECK_THROWS_AS(slot_logits(head, "p", enc), ValidationError);
}

TEST_CASE("gradients through the encoder match finite differences") {
    EncoderConfig config;
    config.embedding_dim = 3;
    config.hidden_dim = 2;
    Rng rng(41);
    ParameterSet enc_params = init_encoder_params(config, rng);
    ParameterSet head = init_head_params("p", config.state_dim(), 2, 3,
                                         HeadInit::xavier, &rng);
    auto inputs = random_inputs(3, 3, rng);

    auto loss_value = [&]() {
        EncodedUtterance enc = encode_utterance(config, enc_params, inputs);
        Tensor iv = intent_logits(head, "p", enc);
        Tensor sv = slot_logits(head, "p", enc);
        Tensor loss = add(softmax_cross_entropy(iv, std::size_t{1}),
                          softmax_cross_entropy(sv, {0, 2, 1},
                                                Reduction::sum));
        return loss.scalar_value();
    };

    {
        Tape tape;
        EncodedUtterance enc = encode_utterance(config, enc_params, inputs);
        Tensor iv = intent_logits(head, "p", enc);
        Tensor sv = slot_logits(head, "p", enc);
        Tensor loss = add(softmax_cross_entropy(iv, std::size_t{1}),
                          softmax_cross_entropy(sv, {0, 2, 1},
                                                Reduction::sum));
        tape.backward(loss);
    }

    const double h = 1e-5;
    double worst = 0.0;
    for (const std::string name :
         {"encoder.fw.weights", "encoder.bw.weights", "encoder.fw.bias",
          "encoder.bw.bias"}) {
        Tensor p = enc_params.get(name);
        REQUIRE(p.has_grad());
        auto& vals = p.mutable_values();
        Rng pick(97 + vals.size());
        for (int probe = 0; probe < 6; ++probe) {
            std::size_t i = pick.index(vals.size());
            double saved = vals[i];
            vals[i] = saved + h;
            double plus = loss_value();
            vals[i] = saved - h;
            double minus = loss_value();
            vals[i] = saved;
            double numeric = (plus - minus) / (2 * h);
            double analytic = p.grad()[i];
            double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic),
                                   std::abs(numeric)});
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("frozen embedding rows never accumulate gradients") {
    Rng rng(55);
    std::vector<double> vals(4 * 3);
    for (auto& v : vals) v = rng.uniform_in(-1, 1);
    EmbeddingTable table;
    table.matrix = Tensor::from_values({4, 3}, vals, false);
    table.dimension = 3;

    EncoderConfig config;
    config.embedding_dim = 3;
    config.hidden_dim = 2;
    ParameterSet params = init_encoder_params(config, rng);

    auto inputs = embed_tokens(table, {1, 3, 2});
    REQUIRE(inputs.size() == 3);
    for (const Tensor& t : inputs) CHECK_FALSE(t.requires_grad());

    {
        Tape tape;
        EncodedUtterance enc = encode_utterance(config, params, inputs);
        Tensor loss = sum(enc.sentence_vector);
        tape.backward(loss);
    }
    CHECK_FALSE(table.matrix.has_grad());
    CHECK(params.get("encoder.fw.weights").has_grad());
}

TEST_CASE("contextual token inputs carry the given vectors unchanged") {
    std::vector<std::vector<double>> raw = {{1, 2}, {3, 4}, {5, 6}};
    auto inputs = contextual_token_inputs(raw);
    REQUIRE(inputs.size() == 3);
    CHECK(inputs[1].values() == std::vector<double>{3, 4});
    CHECK_FALSE(inputs[0].requires_grad());
}
