#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fewshot/errors.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {

/// Dense 64-bit float tensor with a lazily allocated gradient buffer.
///
/// A Tensor is a cheap value-semantic handle: copies share the same payload,
/// which is what lets backward steps recorded on a tape write gradients that
/// the caller observes through its own handle. Rank 0 denotes a scalar,
/// rank 1 a vector, rank 2 a row-major matrix.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape,
                        bool requires_grad = false);
    static Tensor from_values(std::vector<std::size_t> shape,
                              std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    /// Uniform Xavier initialization for a rows-by-cols weight matrix:
    /// draws from [-limit, limit] with limit = sqrt(6 / (rows + cols)).
    static Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng,
                         bool requires_grad = true);

    bool defined() const { return data_ != nullptr; }

    const std::vector<std::size_t>& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const;

    const std::vector<double>& values() const;
    std::vector<double>& mutable_values() const;
    double scalar_value() const;

    bool requires_grad() const;

    /// Gradient buffer, allocated to zeros on first access. Callers add into
    /// it; nothing here ever overwrites accumulated content except
    /// zero_grad().
    std::vector<double>& grad() const;
    bool has_grad() const;
    void zero_grad() const;

    /// Drops the gradient buffer entirely, so has_grad() turns false until
    /// the next backward pass touches this tensor.
    void clear_grad() const;

    /// Deep copy of the values with no gradient history attached.
    Tensor clone(bool requires_grad = false) const;

    /// Payload identity, for asserting whether two handles share storage.
    const void* id() const { return data_.get(); }

private:
    struct Data {
        std::vector<std::size_t> shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
    };

    std::shared_ptr<Data> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

/// Records the backward steps of every differentiable op executed while it
/// is the active tape. Construction pushes the tape as the thread's active
/// one, destruction restores the previous. A tape replays once: backward()
/// runs the steps in reverse and consumes them.
class Tape {
public:
    Tape();
    ~Tape();

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(std::function<void()> step);
    bool consumed() const { return consumed_; }
    std::size_t step_count() const { return steps_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and runs the recorded steps newest first,
    /// accumulating into the grad buffers of every reachable tensor that
    /// requires gradients. The loss must be a scalar recorded on this tape.
    void backward(const Tensor& loss);

private:
    std::vector<std::function<void()>> steps_;
    bool consumed_ = false;
    Tape* previous_ = nullptr;
};

/// Convenience: backward on the currently active tape.
void backward(const Tensor& loss);

enum class Reduction { mean, sum };

// Elementwise and linear-algebra ops. Each validates shapes, computes the
// forward value, and records its backward step on the active tape when any
// input requires gradients.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor vecmat(const Tensor& v, const Tensor& m);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& matrix, const Tensor& bias);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor concat(const Tensor& a, const Tensor& b);
Tensor slice(const Tensor& v, std::size_t offset, std::size_t length);
Tensor row(const Tensor& matrix, std::size_t index);
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor stack_scalars(const std::vector<Tensor>& scalars);
Tensor add_many(const std::vector<Tensor>& terms);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor squared_distance(const Tensor& a, const Tensor& b);

/// Cross entropy between softmax(logits) and integer targets. Accepts a
/// rank-2 [n x k] logits matrix with n targets, or a rank-1 [k] vector with
/// one target. Log-sum-exp is max-shifted for stability.
Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<std::size_t>& targets,
                             Reduction reduction);
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target);

/// Row-wise softmax probabilities as plain numbers, outside the graph.
std::vector<double> softmax_values(const std::vector<double>& logits);

struct LstmState {
    Tensor hidden;
    Tensor cell;
};

/// One recurrent cell update, composed from the primitive ops above so its
/// backward pass needs no dedicated code. The weight matrix is packed
/// (input_dim + hidden_dim) x (4 * hidden_dim) with gate blocks ordered
/// input, forget, candidate, output; the bias is 4 * hidden_dim.
LstmState lstm_step(const Tensor& input, const LstmState& previous,
                    const Tensor& weights, const Tensor& bias);

}  // namespace fewshot
