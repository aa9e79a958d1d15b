#include "fewshot/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "fewshot/errors.hpp"

namespace fewshot {

void ParameterSet::add(const std::string& name, Tensor tensor) {
    if (!tensor.defined())
        fail("params", "add: undefined tensor for '" + name + "'");
    if (index_.count(name))
        fail("params", "add: duplicate parameter name '" + name + "'");
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(tensor));
}

void ParameterSet::add_all(const ParameterSet& other) {
    for (const auto& [name, tensor] : other.entries_) add(name, tensor);
}

bool ParameterSet::contains(const std::string& name) const {
    return index_.count(name) != 0;
}

const Tensor& ParameterSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        fail("params", "unknown parameter '" + name + "'");
    return entries_[it->second].second;
}

ParameterSet ParameterSet::deep_copy() const {
    ParameterSet out;
    for (const auto& [name, tensor] : entries_)
        out.add(name, tensor.clone(true));
    return out;
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
    for (const auto& [name, source] : other.entries()) {
        const Tensor& target = get(name);
        if (target.shape() != source.shape())
            fail("params", "copy_values_from: '" + name + "' has shape " +
                               shape_str(target.shape()) + ", source has " +
                               shape_str(source.shape()));
        target.mutable_values() = source.values();
    }
}

void ParameterSet::clear_grads() const {
    for (const auto& [name, tensor] : entries_) tensor.clear_grad();
}

Optimizer Optimizer::sgd(double learning_rate) {
    OptimizerConfig config;
    config.learning_rate = learning_rate;
    return Optimizer(Kind::sgd, config);
}

Optimizer Optimizer::adam(double learning_rate) {
    OptimizerConfig config;
    config.learning_rate = learning_rate;
    return Optimizer(Kind::adam, config);
}

Optimizer Optimizer::adam(const OptimizerConfig& config) {
    return Optimizer(Kind::adam, config);
}

void Optimizer::step(const ParameterSet& params) {
    ++step_count_;
    for (const auto& [name, p] : params.entries()) {
        if (!p.has_grad())
            fail("tensor",
                 "optimizer_step: parameter '" + name + "' has no gradient");
        auto& values = p.mutable_values();
        const auto& g = p.grad();
        if (kind_ == Kind::sgd) {
            for (std::size_t i = 0; i < values.size(); ++i)
                values[i] -= config_.learning_rate * g[i];
        } else {
            auto& m = first_moment_[name];
            auto& v = second_moment_[name];
            if (m.empty()) {
                m.assign(values.size(), 0.0);
                v.assign(values.size(), 0.0);
            } else if (m.size() != values.size()) {
                fail("tensor", "optimizer_step: moment size for '" + name +
                                   "' does not match the parameter");
            }
            double b1 = config_.adam_beta1;
            double b2 = config_.adam_beta2;
            double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
            double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
            for (std::size_t i = 0; i < values.size(); ++i) {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                values[i] -= config_.learning_rate * (m[i] / c1) /
                             (std::sqrt(v[i] / c2) + config_.adam_epsilon);
            }
        }
        p.clear_grad();
    }
}

namespace {

constexpr char kMagic[] = "FSICSF01";
constexpr std::size_t kMagicLen = 8;

void write_u32(std::ostream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i)
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i)
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
}

void write_f64(std::ostream& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

bool read_exact(std::istream& in, char* buffer, std::size_t n) {
    in.read(buffer, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount()) == n;
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    char bytes[4];
    if (!read_exact(in, bytes, 4))
        fail_io("checkpoint", "truncated file: " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i]))
             << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
    char bytes[8];
    if (!read_exact(in, bytes, 8))
        fail_io("checkpoint", "truncated file: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i]))
             << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("checkpoint", "cannot open for writing: " + path);
    out.write(kMagic, kMagicLen);
    for (const auto& [name, tensor] : params.entries()) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const auto& shape = tensor.shape();
        write_u32(out, static_cast<std::uint32_t>(shape.size()));
        for (std::size_t d : shape) write_u64(out, d);
        for (double v : tensor.values()) write_f64(out, v);
    }
    if (!out) fail_io("checkpoint", "write failed: " + path);
}

ParameterSet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("checkpoint", "cannot open: " + path);
    char magic[kMagicLen];
    if (!read_exact(in, magic, kMagicLen) ||
        std::string(magic, kMagicLen) != kMagic)
        fail_io("checkpoint", "bad magic, not a checkpoint file: " + path);

    ParameterSet params;
    while (true) {
        in.peek();
        if (in.eof()) break;
        std::uint32_t name_len = read_u32(in, path);
        std::string name(name_len, '\0');
        if (!read_exact(in, name.data(), name_len))
            fail_io("checkpoint", "truncated file: " + path);
        std::uint32_t rank = read_u32(in, path);
        std::vector<std::size_t> shape(rank);
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<std::size_t>(read_u64(in, path));
            count *= shape[i];
        }
        std::vector<double> values(count);
        for (std::size_t i = 0; i < count; ++i)
            values[i] = std::bit_cast<double>(read_u64(in, path));
        params.add(name, Tensor::from_values(std::move(shape),
                                             std::move(values), true));
    }
    return params;
}

}  // namespace fewshot
