#include "fewshot/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fewshot/rng.hpp"
#include "fewshot/tensor.hpp"

namespace fewshot {

double GradCheckReport::worst() const {
    double w = 0.0;
    for (const auto& e : entries) w = std::max(w, e.max_relative_error);
    return w;
}

bool GradCheckReport::passed(double threshold) const {
    return std::all_of(entries.begin(), entries.end(), [&](const auto& e) {
        return e.max_relative_error < threshold;
    });
}

namespace {

constexpr double kStep = 1e-5;
constexpr int kTrials = 5;

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                     bool requires_grad = true) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    std::vector<double> values(n);
    for (double& v : values) v = rng.uniform_in(-1.0, 1.0);
    return Tensor::from_values(std::move(shape), std::move(values),
                               requires_grad);
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

/// One trial: runs the op under a tape, projects its output onto a random
/// constant direction, and compares every input element's backward gradient
/// against a central finite difference of the projected value.
double check_once(const std::vector<Tensor>& inputs,
                  const std::function<Tensor(const std::vector<Tensor>&)>& op,
                  Rng& rng) {
    Tensor probe = op(inputs);
    Tensor direction = random_tensor(probe.shape(), rng, false);

    auto projected = [&]() {
        Tensor out = op(inputs);
        const auto& ov = out.values();
        const auto& dv = direction.values();
        double total = 0.0;
        for (std::size_t i = 0; i < ov.size(); ++i) total += ov[i] * dv[i];
        return total;
    };

    for (const Tensor& in : inputs) in.clear_grad();
    {
        Tape tape;
        Tensor out = op(inputs);
        Tensor loss = sum(multiply(out, direction));
        tape.backward(loss);
    }

    double worst = 0.0;
    for (const Tensor& in : inputs) {
        const auto& g = in.grad();
        auto& v = in.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            double saved = v[i];
            v[i] = saved + kStep;
            double plus = projected();
            v[i] = saved - kStep;
            double minus = projected();
            v[i] = saved;
            double numeric = (plus - minus) / (2.0 * kStep);
            worst = std::max(worst, relative_error(g[i], numeric));
        }
    }
    return worst;
}

struct Catalogue {
    GradCheckReport report;
    Rng rng;

    explicit Catalogue(std::uint64_t seed) : rng(seed) {}

    void run(const std::string& name,
             const std::function<std::vector<Tensor>(Rng&)>& make_inputs,
             const std::function<Tensor(const std::vector<Tensor>&)>& op) {
        double worst = 0.0;
        for (int t = 0; t < kTrials; ++t) {
            std::vector<Tensor> inputs = make_inputs(rng);
            worst = std::max(worst, check_once(inputs, op, rng));
        }
        report.entries.push_back({name, worst});
    }

    std::size_t dim() { return rng.index(5) + 1; }
};

}  // namespace

GradCheckReport run_gradient_checks(std::uint64_t seed) {
    Catalogue c(seed);

    c.run(
        "matmul",
        [&](Rng& rng) {
            std::size_t m = c.dim(), k = c.dim(), n = c.dim();
            return std::vector<Tensor>{random_tensor({m, k}, rng),
                                       random_tensor({k, n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); });

    c.run(
        "vecmat",
        [&](Rng& rng) {
            std::size_t k = c.dim(), n = c.dim();
            return std::vector<Tensor>{random_tensor({k}, rng),
                                       random_tensor({k, n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return vecmat(in[0], in[1]); });

    c.run(
        "add",
        [&](Rng& rng) {
            std::size_t m = c.dim(), n = c.dim();
            return std::vector<Tensor>{random_tensor({m, n}, rng),
                                       random_tensor({m, n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return add(in[0], in[1]); });

    c.run(
        "add_bias",
        [&](Rng& rng) {
            std::size_t m = c.dim(), n = c.dim();
            return std::vector<Tensor>{random_tensor({m, n}, rng),
                                       random_tensor({n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return add_bias(in[0], in[1]); });

    c.run(
        "subtract",
        [&](Rng& rng) {
            std::size_t n = c.dim();
            return std::vector<Tensor>{random_tensor({n}, rng),
                                       random_tensor({n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return subtract(in[0], in[1]); });

    c.run(
        "multiply",
        [&](Rng& rng) {
            std::size_t m = c.dim(), n = c.dim();
            return std::vector<Tensor>{random_tensor({m, n}, rng),
                                       random_tensor({m, n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return multiply(in[0], in[1]); });

    c.run(
        "scale",
        [&](Rng& rng) {
            std::size_t n = c.dim();
            return std::vector<Tensor>{random_tensor({n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return scale(in[0], -1.7); });

    c.run(
        "concat",
        [&](Rng& rng) {
            return std::vector<Tensor>{random_tensor({c.dim()}, rng),
                                       random_tensor({c.dim()}, rng)};
        },
        [](const std::vector<Tensor>& in) { return concat(in[0], in[1]); });

    c.run(
        "slice",
        [&](Rng& rng) {
            return std::vector<Tensor>{random_tensor({c.dim() + 2}, rng)};
        },
        [](const std::vector<Tensor>& in) {
            return slice(in[0], 1, in[0].dim(0) - 2);
        });

    c.run(
        "row",
        [&](Rng& rng) {
            std::size_t m = c.dim() + 1, n = c.dim();
            return std::vector<Tensor>{random_tensor({m, n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return row(in[0], 1); });

    c.run(
        "stack_rows",
        [&](Rng& rng) {
            std::size_t n = c.dim();
            return std::vector<Tensor>{random_tensor({n}, rng),
                                       random_tensor({n}, rng),
                                       random_tensor({n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return stack_rows(in); });

    c.run(
        "stack_scalars",
        [&](Rng& rng) {
            return std::vector<Tensor>{random_tensor({}, rng),
                                       random_tensor({}, rng),
                                       random_tensor({}, rng)};
        },
        [](const std::vector<Tensor>& in) { return stack_scalars(in); });

    c.run(
        "add_many",
        [&](Rng& rng) {
            std::size_t n = c.dim();
            return std::vector<Tensor>{random_tensor({n}, rng),
                                       random_tensor({n}, rng),
                                       random_tensor({n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return add_many(in); });

    c.run(
        "tanh",
        [&](Rng& rng) {
            std::size_t m = c.dim(), n = c.dim();
            return std::vector<Tensor>{random_tensor({m, n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return tanh(in[0]); });

    c.run(
        "sigmoid",
        [&](Rng& rng) {
            std::size_t m = c.dim(), n = c.dim();
            return std::vector<Tensor>{random_tensor({m, n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return sigmoid(in[0]); });

    c.run(
        "mean",
        [&](Rng& rng) {
            std::size_t m = c.dim(), n = c.dim();
            return std::vector<Tensor>{random_tensor({m, n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return mean(in[0]); });

    c.run(
        "sum",
        [&](Rng& rng) {
            std::size_t m = c.dim(), n = c.dim();
            return std::vector<Tensor>{random_tensor({m, n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return sum(in[0]); });

    c.run(
        "squared_distance",
        [&](Rng& rng) {
            std::size_t n = c.dim();
            return std::vector<Tensor>{random_tensor({n}, rng),
                                       random_tensor({n}, rng)};
        },
        [](const std::vector<Tensor>& in) {
            return squared_distance(in[0], in[1]);
        });

    for (Reduction reduction : {Reduction::mean, Reduction::sum}) {
        std::string name = reduction == Reduction::mean
                               ? "softmax_cross_entropy_mean"
                               : "softmax_cross_entropy_sum";
        c.run(
            name,
            [&](Rng& rng) {
                std::size_t n = c.dim(), k = c.dim() + 1;
                return std::vector<Tensor>{random_tensor({n, k}, rng)};
            },
            [&c, reduction](const std::vector<Tensor>& in) {
                std::size_t n = in[0].dim(0), k = in[0].dim(1);
                std::vector<std::size_t> targets(n);
                Rng t(c.rng.seed() + n * 31 + k);
                for (auto& x : targets) x = t.index(k);
                return softmax_cross_entropy(in[0], targets, reduction);
            });
    }

    c.run(
        "recurrent_cell",
        [&](Rng& rng) {
            std::size_t e = c.dim(), h = c.dim();
            return std::vector<Tensor>{random_tensor({e}, rng),
                                       random_tensor({h}, rng),
                                       random_tensor({h}, rng),
                                       random_tensor({e + h, 4 * h}, rng),
                                       random_tensor({4 * h}, rng)};
        },
        [](const std::vector<Tensor>& in) {
            LstmState state = lstm_step(in[0], {in[1], in[2]}, in[3], in[4]);
            return concat(state.hidden, state.cell);
        });

    return c.report;
}

}  // namespace fewshot
