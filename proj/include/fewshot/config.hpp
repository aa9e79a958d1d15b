#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fewshot {

enum class Algorithm { proto, fomaml, finetune };

std::string algorithm_name(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& name);

/// One dataset's files as a run sees them: pre-generated train/test split
/// files, an embedding table, and (optionally) sidecar files of precomputed
/// contextual token vectors for both splits.
struct DatasetSpec {
    std::string name;
    std::string train_path;
    std::string test_path;
    std::string embeddings_path;
    std::string contextual_train_path;  // empty unless contextual vectors
    std::string contextual_test_path;   // are in use (both or neither)

    bool contextual() const { return !contextual_train_path.empty(); }
};

/// A full experiment description, loaded from a JSON file. Every omitted
/// tunable falls back to the default recorded here; the JSON may not
/// contain keys outside this inventory.
struct RunConfig {
    Algorithm algorithm = Algorithm::proto;
    std::size_t k_max = 0;                // required
    std::vector<std::uint64_t> seeds;     // required, non-empty
    std::vector<DatasetSpec> datasets;    // required, non-empty
    std::string output_dir;               // required
    bool joint = false;

    // Encoder shape.
    std::size_t hidden_dim = 256;
    bool slot_prefix_encoding = false;

    // Optimization schedule. outer_lr depends on the algorithm and epochs
    // on whether contextual vectors are in play, so both resolve at load
    // time when omitted.
    double outer_lr = 0.0;
    double inner_lr = 0.01;
    std::size_t inner_steps = 8;
    std::size_t baseline_batch = 512;
    std::size_t baseline_adapt_steps = 10;
    std::size_t epochs = 0;
    std::size_t episodes_per_epoch = 100;
    std::size_t eval_episodes = 100;

    // Episode sampling caps.
    std::size_t query_cap = 10;
    std::size_t per_class_cap = 20;
};

/// Default outer learning rate: 0.0029 for first-order meta-learning,
/// 0.001 otherwise.
double default_outer_lr(Algorithm algorithm);

/// Default epoch count: 30 with contextual vectors, 50 without.
std::size_t default_epochs(bool contextual);

/// Parses and validates a run configuration. Unknown keys anywhere in the
/// file are a validation error listing every offender; missing required
/// keys and malformed values are validation errors; referenced files that
/// do not exist are I/O errors.
RunConfig read_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text, const std::string& source);

}  // namespace fewshot
