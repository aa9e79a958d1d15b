// Forward values are computed eagerly; backward steps are closures recorded
// on the active tape. The closures read current tensor values, which is safe
// under the engine's protocol: within one optimization cycle the order is
// always forward, then backward, then parameter update, so no value a
// closure reads has changed since it was recorded.

#include "fewshot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <sstream>

namespace fewshot {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t element_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

bool any_requires(std::initializer_list<const Tensor*> inputs) {
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

bool recording(std::initializer_list<const Tensor*> inputs) {
    return Tape::active() != nullptr && any_requires(inputs);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        fail("tensor", std::string(op) + ": shape mismatch " +
                           shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::size_t n = element_count(shape);
    return from_values(std::move(shape), std::vector<double>(n, 0.0),
                       requires_grad);
}

Tensor Tensor::from_values(std::vector<std::size_t> shape,
                           std::vector<double> values, bool requires_grad) {
    if (values.size() != element_count(shape))
        fail("tensor", "from_values: " + std::to_string(values.size()) +
                           " values do not fill shape " + shape_str(shape));
    Tensor t;
    t.data_ = std::make_shared<Data>();
    t.data_->shape = std::move(shape);
    t.data_->values = std::move(values);
    t.data_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_values({}, {value}, requires_grad);
}

Tensor Tensor::xavier(std::size_t rows, std::size_t cols, Rng& rng,
                      bool requires_grad) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> values(rows * cols);
    for (double& v : values) v = rng.uniform_in(-limit, limit);
    return from_values({rows, cols}, std::move(values), requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const {
    if (!data_) fail("tensor", "use of undefined tensor");
    return data_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size())
        fail("tensor", "dim: axis " + std::to_string(axis) +
                           " out of range for shape " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::size() const { return element_count(shape()); }

const std::vector<double>& Tensor::values() const {
    if (!data_) fail("tensor", "use of undefined tensor");
    return data_->values;
}

std::vector<double>& Tensor::mutable_values() const {
    if (!data_) fail("tensor", "use of undefined tensor");
    return data_->values;
}

double Tensor::scalar_value() const {
    if (size() != 1)
        fail("tensor", "scalar_value on tensor of shape " + shape_str(shape()));
    return values()[0];
}

bool Tensor::requires_grad() const {
    return data_ != nullptr && data_->requires_grad;
}

std::vector<double>& Tensor::grad() const {
    if (!data_) fail("tensor", "use of undefined tensor");
    if (data_->grad.empty()) data_->grad.assign(data_->values.size(), 0.0);
    return data_->grad;
}

bool Tensor::has_grad() const {
    return data_ != nullptr && !data_->grad.empty();
}

void Tensor::zero_grad() const {
    if (data_ && !data_->grad.empty())
        std::fill(data_->grad.begin(), data_->grad.end(), 0.0);
}

void Tensor::clear_grad() const {
    if (data_) data_->grad.clear();
}

Tensor Tensor::clone(bool requires_grad) const {
    return from_values(shape(), values(), requires_grad);
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> step) {
    steps_.push_back(std::move(step));
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1)
        fail("tensor", "backward: loss has shape " + shape_str(loss.shape()) +
                           ", expected a scalar");
    if (!loss.requires_grad())
        fail("tensor", "backward: loss does not require gradients");
    if (consumed_) fail("tensor", "backward: tape already consumed");
    loss.grad()[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    consumed_ = true;
    steps_.clear();
}

void backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (!tape) fail("tensor", "backward: no active tape");
    tape->backward(loss);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        fail("tensor", "matmul: incompatible shapes " + shape_str(a.shape()) +
                           " and " + shape_str(b.shape()));
    std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            double av_il = av[i * k + l];
            for (std::size_t j = 0; j < n; ++j)
                out[i * n + j] += av_il * bv[l * n + j];
        }
    Tensor result = Tensor::from_values({m, n}, std::move(out),
                                        any_requires({&a, &b}));
    if (recording({&a, &b}))
        Tape::active()->record([a, b, result, m, k, n] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                const auto& bv2 = b.values();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t l = 0; l < k; ++l) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            acc += go[i * n + j] * bv2[l * n + j];
                        ga[i * k + l] += acc;
                    }
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                const auto& av2 = a.values();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t l = 0; l < k; ++l) {
                        double av_il = av2[i * k + l];
                        for (std::size_t j = 0; j < n; ++j)
                            gb[l * n + j] += av_il * go[i * n + j];
                    }
            }
        });
    return result;
}

Tensor vecmat(const Tensor& v, const Tensor& m) {
    if (v.rank() != 1 || m.rank() != 2 || v.dim(0) != m.dim(0))
        fail("tensor", "vecmat: incompatible shapes " + shape_str(v.shape()) +
                           " and " + shape_str(m.shape()));
    std::size_t k = v.dim(0), n = m.dim(1);
    const auto& vv = v.values();
    const auto& mv = m.values();
    std::vector<double> out(n, 0.0);
    for (std::size_t l = 0; l < k; ++l) {
        double vl = vv[l];
        for (std::size_t j = 0; j < n; ++j) out[j] += vl * mv[l * n + j];
    }
    Tensor result =
        Tensor::from_values({n}, std::move(out), any_requires({&v, &m}));
    if (recording({&v, &m}))
        Tape::active()->record([v, m, result, k, n] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            if (v.requires_grad()) {
                auto& gv = v.grad();
                const auto& mv2 = m.values();
                for (std::size_t l = 0; l < k; ++l) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                        acc += go[j] * mv2[l * n + j];
                    gv[l] += acc;
                }
            }
            if (m.requires_grad()) {
                auto& gm = m.grad();
                const auto& vv2 = v.values();
                for (std::size_t l = 0; l < k; ++l) {
                    double vl = vv2[l];
                    for (std::size_t j = 0; j < n; ++j)
                        gm[l * n + j] += vl * go[j];
                }
            }
        });
    return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    Tensor result =
        Tensor::from_values(a.shape(), std::move(out), any_requires({&a, &b}));
    if (recording({&a, &b}))
        Tape::active()->record([a, b, result] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        });
    return result;
}

Tensor add_bias(const Tensor& matrix, const Tensor& bias) {
    if (matrix.rank() != 2 || bias.rank() != 1 || matrix.dim(1) != bias.dim(0))
        fail("tensor", "add_bias: incompatible shapes " +
                           shape_str(matrix.shape()) + " and " +
                           shape_str(bias.shape()));
    std::size_t m = matrix.dim(0), n = matrix.dim(1);
    const auto& mv = matrix.values();
    const auto& bv = bias.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out[i * n + j] = mv[i * n + j] + bv[j];
    Tensor result = Tensor::from_values({m, n}, std::move(out),
                                        any_requires({&matrix, &bias}));
    if (recording({&matrix, &bias}))
        Tape::active()->record([matrix, bias, result, m, n] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            if (matrix.requires_grad()) {
                auto& gm = matrix.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gm[i] += go[i];
            }
            if (bias.requires_grad()) {
                auto& gb = bias.grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        gb[j] += go[i * n + j];
            }
        });
    return result;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "subtract");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    Tensor result =
        Tensor::from_values(a.shape(), std::move(out), any_requires({&a, &b}));
    if (recording({&a, &b}))
        Tape::active()->record([a, b, result] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
            }
        });
    return result;
}

Tensor multiply(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "multiply");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    Tensor result =
        Tensor::from_values(a.shape(), std::move(out), any_requires({&a, &b}));
    if (recording({&a, &b}))
        Tape::active()->record([a, b, result] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                const auto& bv2 = b.values();
                for (std::size_t i = 0; i < go.size(); ++i)
                    ga[i] += go[i] * bv2[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                const auto& av2 = a.values();
                for (std::size_t i = 0; i < go.size(); ++i)
                    gb[i] += go[i] * av2[i];
            }
        });
    return result;
}

Tensor scale(const Tensor& a, double factor) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
    Tensor result =
        Tensor::from_values(a.shape(), std::move(out), a.requires_grad());
    if (recording({&a}))
        Tape::active()->record([a, result, factor] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i)
                ga[i] += go[i] * factor;
        });
    return result;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1)
        fail("tensor", "concat: expected two vectors, got " +
                           shape_str(a.shape()) + " and " +
                           shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out;
    out.reserve(av.size() + bv.size());
    out.insert(out.end(), av.begin(), av.end());
    out.insert(out.end(), bv.begin(), bv.end());
    Tensor result = Tensor::from_values({av.size() + bv.size()},
                                        std::move(out), any_requires({&a, &b}));
    if (recording({&a, &b}))
        Tape::active()->record([a, b, result] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            std::size_t la = a.size();
            if (a.requires_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < la; ++i) ga[i] += go[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < gb.size(); ++i)
                    gb[i] += go[la + i];
            }
        });
    return result;
}

Tensor slice(const Tensor& v, std::size_t offset, std::size_t length) {
    if (v.rank() != 1)
        fail("tensor", "slice: expected a vector, got " +
                           shape_str(v.shape()));
    if (offset + length > v.dim(0))
        fail("tensor", "slice: range [" + std::to_string(offset) + ", " +
                           std::to_string(offset + length) +
                           ") exceeds length " + std::to_string(v.dim(0)));
    const auto& vv = v.values();
    std::vector<double> out(vv.begin() + static_cast<std::ptrdiff_t>(offset),
                            vv.begin() +
                                static_cast<std::ptrdiff_t>(offset + length));
    Tensor result =
        Tensor::from_values({length}, std::move(out), v.requires_grad());
    if (recording({&v}))
        Tape::active()->record([v, result, offset, length] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            auto& gv = v.grad();
            for (std::size_t i = 0; i < length; ++i) gv[offset + i] += go[i];
        });
    return result;
}

Tensor row(const Tensor& matrix, std::size_t index) {
    if (matrix.rank() != 2)
        fail("tensor", "row: expected a matrix, got " +
                           shape_str(matrix.shape()));
    std::size_t m = matrix.dim(0), n = matrix.dim(1);
    if (index >= m)
        fail("tensor", "row: index " + std::to_string(index) +
                           " out of range for " + std::to_string(m) + " rows");
    const auto& mv = matrix.values();
    std::vector<double> out(mv.begin() + static_cast<std::ptrdiff_t>(index * n),
                            mv.begin() +
                                static_cast<std::ptrdiff_t>((index + 1) * n));
    Tensor result =
        Tensor::from_values({n}, std::move(out), matrix.requires_grad());
    if (recording({&matrix}))
        Tape::active()->record([matrix, result, index, n] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            auto& gm = matrix.grad();
            for (std::size_t j = 0; j < n; ++j) gm[index * n + j] += go[j];
        });
    return result;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) fail("tensor", "stack_rows: empty input");
    std::size_t n = rows.front().dim(0);
    bool needs_grad = false;
    for (const Tensor& r : rows) {
        if (r.rank() != 1 || r.dim(0) != n)
            fail("tensor", "stack_rows: row of shape " + shape_str(r.shape()) +
                               " does not match width " + std::to_string(n));
        needs_grad = needs_grad || r.requires_grad();
    }
    std::size_t m = rows.size();
    std::vector<double> out;
    out.reserve(m * n);
    for (const Tensor& r : rows) {
        const auto& rv = r.values();
        out.insert(out.end(), rv.begin(), rv.end());
    }
    Tensor result = Tensor::from_values({m, n}, std::move(out), needs_grad);
    if (Tape::active() && needs_grad)
        Tape::active()->record([rows, result, n] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (!rows[i].requires_grad()) continue;
                auto& gr = rows[i].grad();
                for (std::size_t j = 0; j < n; ++j)
                    gr[j] += go[i * n + j];
            }
        });
    return result;
}

Tensor stack_scalars(const std::vector<Tensor>& scalars) {
    if (scalars.empty()) fail("tensor", "stack_scalars: empty input");
    bool needs_grad = false;
    std::vector<double> out;
    out.reserve(scalars.size());
    for (const Tensor& s : scalars) {
        if (s.size() != 1)
            fail("tensor", "stack_scalars: element of shape " +
                               shape_str(s.shape()) + " is not a scalar");
        out.push_back(s.values()[0]);
        needs_grad = needs_grad || s.requires_grad();
    }
    Tensor result =
        Tensor::from_values({scalars.size()}, std::move(out), needs_grad);
    if (Tape::active() && needs_grad)
        Tape::active()->record([scalars, result] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            for (std::size_t i = 0; i < scalars.size(); ++i)
                if (scalars[i].requires_grad()) scalars[i].grad()[0] += go[i];
        });
    return result;
}

Tensor add_many(const std::vector<Tensor>& terms) {
    if (terms.empty()) fail("tensor", "add_many: empty input");
    const auto& shape = terms.front().shape();
    bool needs_grad = false;
    for (const Tensor& t : terms) {
        if (t.shape() != shape)
            fail("tensor", "add_many: shape mismatch " + shape_str(t.shape()) +
                               " vs " + shape_str(shape));
        needs_grad = needs_grad || t.requires_grad();
    }
    std::vector<double> out(terms.front().size(), 0.0);
    for (const Tensor& t : terms) {
        const auto& tv = t.values();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += tv[i];
    }
    Tensor result = Tensor::from_values(shape, std::move(out), needs_grad);
    if (Tape::active() && needs_grad)
        Tape::active()->record([terms, result] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            for (const Tensor& t : terms) {
                if (!t.requires_grad()) continue;
                auto& gt = t.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gt[i] += go[i];
            }
        });
    return result;
}

Tensor tanh(const Tensor& a) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
    Tensor result =
        Tensor::from_values(a.shape(), std::move(out), a.requires_grad());
    if (recording({&a}))
        Tape::active()->record([a, result] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            const auto& ov = result.values();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i)
                ga[i] += go[i] * (1.0 - ov[i] * ov[i]);
        });
    return result;
}

Tensor sigmoid(const Tensor& a) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = stable_sigmoid(av[i]);
    Tensor result =
        Tensor::from_values(a.shape(), std::move(out), a.requires_grad());
    if (recording({&a}))
        Tape::active()->record([a, result] {
            if (!result.has_grad()) return;
            const auto& go = result.grad();
            const auto& ov = result.values();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i)
                ga[i] += go[i] * ov[i] * (1.0 - ov[i]);
        });
    return result;
}

Tensor mean(const Tensor& a) {
    std::size_t n = a.size();
    if (n == 0) fail("tensor", "mean: empty tensor");
    const auto& av = a.values();
    double total = std::accumulate(av.begin(), av.end(), 0.0);
    Tensor result = Tensor::scalar(total / static_cast<double>(n),
                                   a.requires_grad());
    if (recording({&a}))
        Tape::active()->record([a, result, n] {
            if (!result.has_grad()) return;
            double g = result.grad()[0] / static_cast<double>(n);
            auto& ga = a.grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    return result;
}

Tensor sum(const Tensor& a) {
    const auto& av = a.values();
    double total = std::accumulate(av.begin(), av.end(), 0.0);
    Tensor result = Tensor::scalar(total, a.requires_grad());
    if (recording({&a}))
        Tape::active()->record([a, result] {
            if (!result.has_grad()) return;
            double g = result.grad()[0];
            auto& ga = a.grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    return result;
}

Tensor squared_distance(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.dim(0) != b.dim(0))
        fail("tensor", "squared_distance: incompatible shapes " +
                           shape_str(a.shape()) + " and " +
                           shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    double total = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        double d = av[i] - bv[i];
        total += d * d;
    }
    Tensor result = Tensor::scalar(total, any_requires({&a, &b}));
    if (recording({&a, &b}))
        Tape::active()->record([a, b, result] {
            if (!result.has_grad()) return;
            double g = result.grad()[0];
            const auto& av2 = a.values();
            const auto& bv2 = b.values();
            for (std::size_t i = 0; i < av2.size(); ++i) {
                double d = 2.0 * (av2[i] - bv2[i]) * g;
                if (a.requires_grad()) a.grad()[i] += d;
                if (b.requires_grad()) b.grad()[i] -= d;
            }
        });
    return result;
}

std::vector<double> softmax_values(const std::vector<double>& logits) {
    if (logits.empty()) fail("tensor", "softmax_values: empty input");
    double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<std::size_t>& targets,
                             Reduction reduction) {
    std::size_t n, k;
    if (logits.rank() == 2) {
        n = logits.dim(0);
        k = logits.dim(1);
    } else if (logits.rank() == 1) {
        n = 1;
        k = logits.dim(0);
    } else {
        fail("tensor", "softmax_cross_entropy: logits have shape " +
                           shape_str(logits.shape()) +
                           ", expected a vector or matrix");
    }
    if (targets.size() != n)
        fail("tensor", "softmax_cross_entropy: " +
                           std::to_string(targets.size()) + " targets for " +
                           std::to_string(n) + " rows");
    if (n == 0 || k == 0)
        fail("tensor", "softmax_cross_entropy: empty logits");

    const auto& lv = logits.values();
    std::vector<double> probs(n * k);
    double total_loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t t = targets[i];
        if (t >= k)
            fail("tensor", "softmax_cross_entropy: target " +
                               std::to_string(t) + " out of range for " +
                               std::to_string(k) + " classes");
        const double* rowv = lv.data() + i * k;
        double m = *std::max_element(rowv, rowv + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(rowv[j] - m);
        double lse = m + std::log(z);
        total_loss += lse - rowv[t];
        for (std::size_t j = 0; j < k; ++j)
            probs[i * k + j] = std::exp(rowv[j] - lse);
    }
    double value = reduction == Reduction::mean
                       ? total_loss / static_cast<double>(n)
                       : total_loss;
    Tensor result = Tensor::scalar(value, logits.requires_grad());
    if (recording({&logits}))
        Tape::active()->record(
            [logits, result, probs = std::move(probs), targets, n, k,
             reduction] {
                if (!result.has_grad()) return;
                double w = result.grad()[0];
                if (reduction == Reduction::mean)
                    w /= static_cast<double>(n);
                auto& gl = logits.grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < k; ++j) {
                        double p = probs[i * k + j];
                        double y = j == targets[i] ? 1.0 : 0.0;
                        gl[i * k + j] += (p - y) * w;
                    }
            });
    return result;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target) {
    return softmax_cross_entropy(logits, std::vector<std::size_t>{target},
                                 Reduction::sum);
}

LstmState lstm_step(const Tensor& input, const LstmState& previous,
                    const Tensor& weights, const Tensor& bias) {
    if (input.rank() != 1 || previous.hidden.rank() != 1 ||
        previous.cell.rank() != 1)
        fail("tensor", "lstm_step: input and state must be vectors");
    std::size_t h = previous.hidden.dim(0);
    if (previous.cell.dim(0) != h)
        fail("tensor", "lstm_step: hidden and cell sizes differ");
    std::size_t packed = input.dim(0) + h;
    if (weights.rank() != 2 || weights.dim(0) != packed ||
        weights.dim(1) != 4 * h)
        fail("tensor", "lstm_step: weights have shape " +
                           shape_str(weights.shape()) + ", expected " +
                           shape_str({packed, 4 * h}));
    if (bias.rank() != 1 || bias.dim(0) != 4 * h)
        fail("tensor", "lstm_step: bias has shape " +
                           shape_str(bias.shape()) + ", expected " +
                           shape_str({4 * h}));

    Tensor xh = concat(input, previous.hidden);
    Tensor pre = add(vecmat(xh, weights), bias);
    Tensor gate_in = sigmoid(slice(pre, 0, h));
    Tensor gate_forget = sigmoid(slice(pre, h, h));
    Tensor candidate = tanh(slice(pre, 2 * h, h));
    Tensor gate_out = sigmoid(slice(pre, 3 * h, h));
    Tensor cell = add(multiply(gate_forget, previous.cell),
                      multiply(gate_in, candidate));
    Tensor hidden = multiply(gate_out, tanh(cell));
    return {hidden, cell};
}

}  // namespace fewshot
