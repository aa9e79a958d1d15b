#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "fewshot/gradcheck.hpp"
#include "fewshot/params.hpp"
#include "fewshot/rng.hpp"
#include "fewshot/tensor.hpp"

using namespace fewshot;

TEST_CASE("matmul identity leaves the matrix unchanged") {
    Tensor a = Tensor::from_values({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor eye = Tensor::from_values({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor out = matmul(eye, a);
    REQUIRE(out.shape() == a.shape());
    for (std::size_t i = 0; i < 9; ++i)
        CHECK(out.values()[i] == doctest::Approx(a.values()[i]));
}

TEST_CASE("matmul shape algebra and mismatch error") {
    Rng rng(1);
    Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from_values({3, 4}, std::vector<double>(12, 0.5));
    CHECK(matmul(a, b).shape() == std::vector<std::size_t>{2, 4});

    Tensor bad = Tensor::zeros({2, 4});
    CHECK_THROWS_WITH_AS(matmul(a, bad),
                         doctest::Contains("[2, 3]"), ValidationError);
    CHECK_THROWS_WITH_AS(matmul(a, bad),
                         doctest::Contains("[2, 4]"), ValidationError);
}

TEST_CASE("gradient of sum(matmul) matches finite differences") {
    Rng rng(7);
    std::vector<double> av(6), bv(12);
    for (auto& x : av) x = rng.uniform_in(-1, 1);
    for (auto& x : bv) x = rng.uniform_in(-1, 1);
    Tensor a = Tensor::from_values({2, 3}, av, true);
    Tensor b = Tensor::from_values({3, 4}, bv, false);

    {
        Tape tape;
        Tensor loss = sum(matmul(a, b));
        tape.backward(loss);
    }
    const double h = 1e-5;
    auto& vals = a.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        double saved = vals[i];
        vals[i] = saved + h;
        double plus = sum(matmul(a, b)).scalar_value();
        vals[i] = saved - h;
        double minus = sum(matmul(a, b)).scalar_value();
        vals[i] = saved;
        double numeric = (plus - minus) / (2 * h);
        double analytic = a.grad()[i];
        double rel = std::abs(analytic - numeric) /
                     std::max({1.0, std::abs(analytic), std::abs(numeric)});
        CHECK(rel < 1e-6);
    }
}

TEST_CASE("softmax cross entropy on uniform logits gives ln K") {
    Tensor logits = Tensor::zeros({2, 4});
    Tensor loss =
        softmax_cross_entropy(logits, {0, 3}, Reduction::mean);
    CHECK(loss.scalar_value() == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("softmax cross entropy saturates when target dominates") {
    Tensor logits = Tensor::from_values({4}, {50.0, 0.0, 0.0, 0.0});
    Tensor loss = softmax_cross_entropy(logits, 0);
    CHECK(loss.scalar_value() < 1e-9);
}

TEST_CASE("softmax cross entropy rejects out-of-range targets") {
    Tensor logits = Tensor::zeros({2, 3});
    CHECK_THROWS_WITH_AS(
        softmax_cross_entropy(logits, {0, 3}, Reduction::mean),
        doctest::Contains("out of range"), ValidationError);
}

TEST_CASE("softmax cross entropy sum is n times mean") {
    Rng rng(11);
    std::vector<double> lv(6);
    for (auto& x : lv) x = rng.uniform_in(-2, 2);
    Tensor logits = Tensor::from_values({3, 2}, lv);
    double m = softmax_cross_entropy(logits, {0, 1, 0}, Reduction::mean)
                   .scalar_value();
    double s = softmax_cross_entropy(logits, {0, 1, 0}, Reduction::sum)
                   .scalar_value();
    CHECK(s == doctest::Approx(3.0 * m).epsilon(1e-12));
}

TEST_CASE("backward of x*x at x = 3 gives gradient 6") {
    Tensor x = Tensor::scalar(3.0, true);
    Tape tape;
    Tensor loss = multiply(x, x);
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("gradients accumulate additively across uses") {
    Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
    Tape tape;
    Tensor loss = sum(add(x, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("tensor unreachable from the loss keeps a zero gradient") {
    Tensor x = Tensor::scalar(1.0, true);
    Tensor y = Tensor::scalar(2.0, true);
    Tape tape;
    Tensor keep = multiply(x, x);
    Tensor unused = multiply(y, y);
    tape.backward(keep);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK_FALSE(y.has_grad());
    (void)unused;
}

TEST_CASE("backward rejects non-scalar losses and reuse of the tape") {
    Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
    Tape tape;
    Tensor doubled = add(x, x);
    CHECK_THROWS_AS(tape.backward(doubled), ValidationError);
    Tensor loss = sum(doubled);
    tape.backward(loss);
    CHECK_THROWS_WITH_AS(tape.backward(loss),
                         doctest::Contains("consumed"), ValidationError);
}

TEST_CASE("two-layer composition gradient matches finite differences") {
    Rng rng(23);
    auto rand_tensor = [&](std::vector<std::size_t> shape, bool grad) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform_in(-1, 1);
        return Tensor::from_values(shape, v, grad);
    };
    Tensor x = rand_tensor({4}, false);
    Tensor w1 = rand_tensor({4, 3}, true);
    Tensor w2 = rand_tensor({3, 2}, true);

    auto forward = [&]() {
        return softmax_cross_entropy(sigmoid(vecmat(tanh(vecmat(x, w1)), w2)),
                                     1);
    };
    {
        Tape tape;
        Tensor loss = forward();
        tape.backward(loss);
    }
    const double h = 1e-5;
    for (Tensor* t : {&w1, &w2}) {
        auto& vals = t->mutable_values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            double saved = vals[i];
            vals[i] = saved + h;
            double plus = forward().scalar_value();
            vals[i] = saved - h;
            double minus = forward().scalar_value();
            vals[i] = saved;
            double numeric = (plus - minus) / (2 * h);
            double analytic = t->grad()[i];
            double rel =
                std::abs(analytic - numeric) /
                std::max({1.0, std::abs(analytic), std::abs(numeric)});
            CHECK(rel < 1e-6);
        }
    }
}

TEST_CASE("repeated forward passes are bit-identical") {
    Rng rng(5);
    Tensor w = Tensor::xavier(4, 4, rng);
    Tensor x = Tensor::from_values({4}, {0.1, -0.2, 0.3, -0.4});
    Tensor first = tanh(vecmat(x, w));
    Tensor second = tanh(vecmat(x, w));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(first.values()[i] == second.values()[i]);
}

TEST_CASE("tanh derivative at zero is one") {
    Tensor x = Tensor::scalar(0.0, true);
    Tape tape;
    Tensor loss = sum(tanh(x));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("squared distance gradient is 2(u - v)") {
    Tensor u = Tensor::from_values({3}, {1.0, 2.0, 3.0}, true);
    Tensor v = Tensor::from_values({3}, {0.5, 0.0, 4.0}, true);
    Tape tape;
    Tensor loss = squared_distance(u, v);
    tape.backward(loss);
    for (std::size_t i = 0; i < 3; ++i) {
        double expected = 2.0 * (u.values()[i] - v.values()[i]);
        CHECK(u.grad()[i] == doctest::Approx(expected).epsilon(1e-12));
        CHECK(v.grad()[i] == doctest::Approx(-expected).epsilon(1e-12));
    }
}

TEST_CASE("recurrent cell matches a hand-rolled reference step") {
    Rng rng(13);
    std::size_t e = 3, h = 2;
    auto rand_values = [&](std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform_in(-1, 1);
        return v;
    };
    Tensor input = Tensor::from_values({e}, rand_values(e));
    Tensor h0 = Tensor::from_values({h}, rand_values(h));
    Tensor c0 = Tensor::from_values({h}, rand_values(h));
    Tensor w = Tensor::from_values({e + h, 4 * h}, rand_values((e + h) * 4 * h));
    Tensor b = Tensor::from_values({4 * h}, rand_values(4 * h));

    LstmState next = lstm_step(input, {h0, c0}, w, b);

    auto sigmoid_ref = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    std::vector<double> xh(e + h);
    for (std::size_t i = 0; i < e; ++i) xh[i] = input.values()[i];
    for (std::size_t i = 0; i < h; ++i) xh[e + i] = h0.values()[i];
    for (std::size_t j = 0; j < h; ++j) {
        auto pre = [&](std::size_t gate) {
            double acc = b.values()[gate * h + j];
            for (std::size_t i = 0; i < e + h; ++i)
                acc += xh[i] * w.values()[i * 4 * h + gate * h + j];
            return acc;
        };
        double gi = sigmoid_ref(pre(0));
        double gf = sigmoid_ref(pre(1));
        double gc = std::tanh(pre(2));
        double go = sigmoid_ref(pre(3));
        double cell = gf * c0.values()[j] + gi * gc;
        double hidden = go * std::tanh(cell);
        CHECK(next.cell.values()[j] == doctest::Approx(cell).epsilon(1e-12));
        CHECK(next.hidden.values()[j] ==
              doctest::Approx(hidden).epsilon(1e-12));
    }
}

TEST_CASE("full gradient check catalogue stays under 1e-6") {
    GradCheckReport report = run_gradient_checks(0);
    CHECK(report.entries.size() >= 10);
    for (const auto& entry : report.entries) {
        INFO(entry.op);
        CHECK(entry.max_relative_error < 1e-6);
    }
    CHECK(report.passed(1e-6));
}

TEST_CASE("sgd step applies p minus lr times g") {
    ParameterSet params;
    params.add("p", Tensor::scalar(1.0, true));
    params.get("p").grad()[0] = 2.0;
    Optimizer opt = Optimizer::sgd(0.01);
    opt.step(params);
    CHECK(params.get("p").values()[0] == doctest::Approx(0.98).epsilon(1e-15));
    CHECK(opt.step_count() == 1);
    CHECK_FALSE(params.get("p").has_grad());
}

TEST_CASE("adam first step moves by the learning rate") {
    ParameterSet params;
    params.add("p", Tensor::scalar(5.0, true));
    params.get("p").grad()[0] = 0.3;
    OptimizerConfig config;
    config.learning_rate = 0.001;
    config.adam_epsilon = 1e-16;
    Optimizer opt = Optimizer::adam(config);
    opt.step(params);
    double delta = 5.0 - params.get("p").values()[0];
    CHECK(delta == doctest::Approx(0.001).epsilon(1e-9));
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
    ParameterSet params;
    params.add("p", Tensor::from_values({3}, {1.0, -2.0, 3.0}, true));
    params.get("p").grad();
    Optimizer opt = Optimizer::adam(0.001);
    opt.step(params);
    CHECK(params.get("p").values() == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("optimizer step without gradients names the parameter") {
    ParameterSet params;
    params.add("encoder.w", Tensor::scalar(1.0, true));
    Optimizer opt = Optimizer::sgd(0.1);
    CHECK_THROWS_WITH_AS(opt.step(params), doctest::Contains("encoder.w"),
                         ValidationError);
}

TEST_CASE("xavier initialization stays inside the fan limit") {
    Rng rng(3);
    std::size_t rows = 6, cols = 10;
    Tensor w = Tensor::xavier(rows, cols, rng);
    double limit = std::sqrt(6.0 / (rows + cols));
    for (double v : w.values()) {
        CHECK(v <= limit);
        CHECK(v >= -limit);
    }
    CHECK(w.requires_grad());
}

TEST_CASE("checkpoint round-trips names, shapes and exact values") {
    Rng rng(17);
    ParameterSet params;
    params.add("enc.fw.w", Tensor::xavier(3, 8, rng));
    params.add("enc.fw.b", Tensor::zeros({8}, true));
    params.add("head.intent.w", Tensor::xavier(4, 2, rng));

    auto path = std::filesystem::temp_directory_path() / "fewshot_ckpt_test.bin";
    save_checkpoint(path.string(), params);
    ParameterSet loaded = load_checkpoint(path.string());

    REQUIRE(loaded.count() == params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        const auto& [name, tensor] = params.entries()[i];
        const auto& [lname, ltensor] = loaded.entries()[i];
        CHECK(lname == name);
        CHECK(ltensor.shape() == tensor.shape());
        CHECK(ltensor.values() == tensor.values());
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects foreign and truncated files") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path();

    auto bad = dir / "fewshot_bad_magic.bin";
    {
        std::FILE* f = std::fopen(bad.string().c_str(), "wb");
        std::fputs("NOTMAGIC", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(bad.string()), IoError);
    fs::remove(bad);

    ParameterSet params;
    params.add("p", Tensor::from_values({2}, {1.0, 2.0}, true));
    auto truncated = dir / "fewshot_truncated.bin";
    save_checkpoint(truncated.string(), params);
    fs::resize_file(truncated, fs::file_size(truncated) - 5);
    CHECK_THROWS_AS(load_checkpoint(truncated.string()), IoError);
    fs::remove(truncated);

    CHECK_THROWS_AS(load_checkpoint((dir / "fewshot_missing.bin").string()),
                    IoError);
}

TEST_CASE("deep copy shares nothing with the original") {
    ParameterSet params;
    params.add("w", Tensor::from_values({2}, {1.0, 2.0}, true));
    ParameterSet copy = params.deep_copy();
    copy.get("w").mutable_values()[0] = 99.0;
    CHECK(params.get("w").values()[0] == 1.0);
    CHECK(copy.get("w").id() != params.get("w").id());
    CHECK(copy.get("w").requires_grad());
}
