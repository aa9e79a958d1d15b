#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fewshot/algorithms.hpp"
#include "fewshot/config.hpp"
#include "fewshot/corpus.hpp"
#include "fewshot/embedding.hpp"
#include "fewshot/results.hpp"

namespace fewshot {

/// One dataset pulled into memory: both split files, the vocabulary over
/// their union, the frozen embedding table, and (when configured) the
/// contextual sidecar vectors keyed by utterance id.
struct LoadedDataset {
    DatasetSpec spec;
    std::vector<UtteranceRecord> train_records;
    std::vector<UtteranceRecord> test_records;
    Vocabulary vocabulary;
    EmbeddingTable embeddings;
    ContextualVectors contextual_train;
    ContextualVectors contextual_test;

    /// Width of the per-token input vectors the encoder will see.
    std::size_t input_dim() const;
};

LoadedDataset load_dataset(const DatasetSpec& spec);

/// Per-token input vectors for one side of a dataset: contextual sidecar
/// rows when the dataset ships them, embedding rows otherwise. The dataset
/// must outlive the returned function.
TokenInputFn token_inputs_for(const LoadedDataset& dataset, bool test_side);

/// One trained model produced by train_run: the per-epoch checkpoints all
/// live under the config's output directory; checkpoint_path names the
/// final one (stable across epoch-count changes).
struct TrainedModel {
    std::string model_name;  // dataset name, or "joint"
    std::string checkpoint_path;
    std::vector<double> epoch_losses;
};

/// Runs the configured algorithm to completion. Episodic algorithms train
/// one model per dataset (or a single model over all datasets in joint
/// mode) with the first configured seed driving initialization and episode
/// sampling; the baseline pretrains the encoder with one persistent head
/// pair per dataset. Writes a checkpoint after every epoch.
std::vector<TrainedModel> train_run(const RunConfig& config);

struct EvalRequest {
    std::string checkpoint_path;
    std::string split_path;            // empty: the dataset's test split
    std::size_t episodes = 0;          // 0: config.eval_episodes
    std::vector<std::uint64_t> seeds;  // empty: config.seeds
};

/// Episodic evaluation of a checkpoint: for each seed, samples the
/// requested number of episodes from the split and scores the configured
/// algorithm's predictions, then aggregates across seeds. Writes the
/// per-run result record and rendered table into the output directory and
/// returns the result.
RunResult eval_run(const RunConfig& config, const EvalRequest& request);

/// Applies slot-label prefixing, partitions the corpus per the split
/// config, writes train/dev/test files plus a statistics table into
/// out_dir, and returns the rendered table.
std::string prepare_splits_run(const std::string& data_path,
                               const std::string& split_config_path,
                               const std::string& out_dir);

/// Samples episodes from a split file and writes the JSONL dump.
void sample_run(const std::string& split_path, std::size_t k_max,
                std::size_t count, std::uint64_t seed,
                const std::string& out_path);

}  // namespace fewshot
