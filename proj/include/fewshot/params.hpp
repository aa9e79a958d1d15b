#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fewshot/tensor.hpp"

namespace fewshot {

/// Insertion-ordered collection of named trainable tensors. Order matters:
/// checkpoints serialize entries in it, so reloading reproduces files
/// byte for byte.
class ParameterSet {
public:
    /// Registers a tensor under a unique name.
    void add(const std::string& name, Tensor tensor);

    /// Registers every entry of another set, sharing the underlying tensors.
    void add_all(const ParameterSet& other);

    bool contains(const std::string& name) const;
    const Tensor& get(const std::string& name) const;

    std::size_t count() const { return entries_.size(); }
    const std::vector<std::pair<std::string, Tensor>>& entries() const {
        return entries_;
    }

    /// Independent copy: same names, deep-copied values that require
    /// gradients, no shared storage with this set.
    ParameterSet deep_copy() const;

    /// Copies values (not gradients) from a same-named, same-shaped set.
    void copy_values_from(const ParameterSet& other);

    /// Drops all accumulated gradients.
    void clear_grads() const;

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct OptimizerConfig {
    double learning_rate = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
};

/// SGD or Adam over named parameters. Adam moment buffers are keyed by
/// parameter name, so the same optimizer instance can serve successive
/// calls that pass the same logical parameters.
class Optimizer {
public:
    static Optimizer sgd(double learning_rate);
    static Optimizer adam(double learning_rate);
    static Optimizer adam(const OptimizerConfig& config);

    /// Applies one update from the gradients accumulated on the given
    /// parameters, then drops those gradients. Every parameter must carry a
    /// gradient buffer; a parameter without one means the caller forgot a
    /// backward pass, which is a contract error.
    void step(const ParameterSet& params);

    std::size_t step_count() const { return step_count_; }
    double learning_rate() const { return config_.learning_rate; }

private:
    enum class Kind { sgd, adam };

    Optimizer(Kind kind, OptimizerConfig config)
        : kind_(kind), config_(config) {}

    Kind kind_;
    OptimizerConfig config_;
    std::size_t step_count_ = 0;
    std::unordered_map<std::string, std::vector<double>> first_moment_;
    std::unordered_map<std::string, std::vector<double>> second_moment_;
};

/// Binary parameter snapshot. Layout: the magic string "FSICSF01", then per
/// parameter: u32 name length, the UTF-8 name, u32 rank, u64 per dimension,
/// and the values as little-endian 64-bit floats. Entries follow the set's
/// order and are read back until end of file.
void save_checkpoint(const std::string& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::string& path);

}  // namespace fewshot
