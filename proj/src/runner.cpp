#include "fewshot/runner.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <utility>

#include "fewshot/encoder.hpp"
#include "fewshot/episode.hpp"
#include "fewshot/errors.hpp"
#include "fewshot/metrics.hpp"

namespace fewshot {

namespace {

namespace fs = std::filesystem;

// Child-stream tags for deriving independent random streams from one run
// seed. Large enough that episode counters can never collide with them.
constexpr std::uint64_t kInitStream = 0x1000'0000'0001ULL;
constexpr std::uint64_t kHeadStream = 0x1000'0000'1000ULL;
constexpr std::uint64_t kShuffleStream = 0x1000'0000'2000ULL;

void ensure_directory(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec)
        fail_io("runner",
                "cannot create directory '" + path + "': " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail_io("runner", "cannot open for writing: " + path);
    out << text;
    if (!out.good()) fail_io("runner", "write failed: " + path);
}

EncoderConfig encoder_config_for(const RunConfig& config,
                                 std::size_t input_dim) {
    EncoderConfig enc;
    enc.embedding_dim = input_dim;
    enc.hidden_dim = config.hidden_dim;
    enc.slot_prefix_encoding = config.slot_prefix_encoding;
    return enc;
}

std::string checkpoint_base(const RunConfig& config,
                            const std::string& model_name) {
    return config.output_dir + "/" + algorithm_name(config.algorithm) + "-" +
           model_name + "-k" + std::to_string(config.k_max);
}

/// Sidecar lookup shared by both contextual sides.
std::vector<Tensor> contextual_inputs_for_record(
    const ContextualVectors& vectors, const UtteranceRecord& record,
    const std::string& dataset_name) {
    auto it = vectors.find(record.id);
    if (it == vectors.end())
        fail("runner", "dataset '" + dataset_name +
                           "': no contextual vectors for utterance id '" +
                           record.id + "'");
    if (it->second.size() != record.tokens.size())
        fail("runner",
             "dataset '" + dataset_name + "': utterance id '" + record.id +
                 "' has " + std::to_string(record.tokens.size()) +
                 " tokens but " + std::to_string(it->second.size()) +
                 " contextual vectors");
    return contextual_token_inputs(it->second);
}

EpisodeAlgorithm episode_algorithm(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::proto: return EpisodeAlgorithm::proto;
        case Algorithm::fomaml: return EpisodeAlgorithm::fomaml;
        case Algorithm::finetune: return EpisodeAlgorithm::finetune;
    }
    fail("runner", "unreachable algorithm value");
}

/// First-appearance intent and slot inventories over a record pool; the
/// sentinel always owns slot index 0.
struct LabelInventory {
    std::vector<std::string> intents;
    std::vector<std::string> slots;
    std::unordered_map<std::string, std::size_t> intent_index;
    std::unordered_map<std::string, std::size_t> slot_index;
};

LabelInventory build_inventory(const std::vector<UtteranceRecord>& records) {
    LabelInventory inv;
    inv.slots.push_back(kOutsideLabel);
    inv.slot_index[kOutsideLabel] = 0;
    for (const UtteranceRecord& record : records) {
        if (inv.intent_index.emplace(record.intent, inv.intents.size())
                .second)
            inv.intents.push_back(record.intent);
        for (const std::string& slot : record.slots)
            if (inv.slot_index.emplace(slot, inv.slots.size()).second)
                inv.slots.push_back(slot);
    }
    return inv;
}

std::vector<EncodedItem> encode_pool(const std::vector<UtteranceRecord>& pool,
                                     const LabelInventory& inventory,
                                     const TokenInputFn& inputs) {
    std::vector<EncodedItem> items;
    items.reserve(pool.size());
    for (const UtteranceRecord& record : pool) {
        EncodedItem item;
        item.token_inputs = inputs(record);
        item.intent_id = inventory.intent_index.at(record.intent);
        for (const std::string& slot : record.slots)
            item.slot_ids.push_back(inventory.slot_index.at(slot));
        items.push_back(std::move(item));
    }
    return items;
}

void log_epoch(const std::string& model, std::size_t epoch,
               std::size_t epochs, double loss) {
    std::fprintf(stderr, "runner: [%s] epoch %zu/%zu mean loss %.6f\n",
                 model.c_str(), epoch + 1, epochs, loss);
}

/// Shared episodic training loop: pulls episodes from next_episode, applies
/// one update per episode, and checkpoints after every epoch.
TrainedModel train_episodic(const RunConfig& config,
                            const std::string& model_name,
                            const EncoderConfig& enc,
                            const std::function<Episode()>& next_episode,
                            const std::function<const TokenInputFn&(
                                const std::string&)>& inputs_for) {
    Rng init_rng = Rng(config.seeds.front()).child(kInitStream);
    ParameterSet params = init_encoder_params(enc, init_rng);
    Optimizer outer = Optimizer::adam(config.outer_lr);

    TrainedModel model;
    model.model_name = model_name;
    const std::string base = checkpoint_base(config, model_name);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double total = 0.0;
        for (std::size_t e = 0; e < config.episodes_per_epoch; ++e) {
            Episode episode = next_episode();
            EpisodeView view = build_episode_view(
                episode, inputs_for(episode.source_dataset));
            if (config.algorithm == Algorithm::proto) {
                double value = 0.0;
                {
                    Tape tape;
                    Tensor loss = proto_episode_loss(enc, params, view);
                    value = loss.scalar_value();
                    tape.backward(loss);
                }
                outer.step(params);
                total += value;
            } else {
                total += fomaml_meta_step(enc, params, view,
                                          config.inner_steps,
                                          config.inner_lr, outer);
            }
        }
        double mean = total / static_cast<double>(config.episodes_per_epoch);
        model.epoch_losses.push_back(mean);
        log_epoch(model_name, epoch, config.epochs, mean);
        save_checkpoint(base + "-epoch" + std::to_string(epoch + 1) +
                            ".ckpt",
                        params);
    }
    model.checkpoint_path = base + ".ckpt";
    save_checkpoint(model.checkpoint_path, params);
    return model;
}

TrainedModel train_baseline(const RunConfig& config,
                            const std::string& model_name,
                            const EncoderConfig& enc,
                            const std::vector<const LoadedDataset*>& datasets,
                            const std::vector<TokenInputFn>& input_fns) {
    const std::uint64_t seed = config.seeds.front();
    Rng init_rng = Rng(seed).child(kInitStream);
    ParameterSet params = init_encoder_params(enc, init_rng);

    std::vector<PretrainDataset> pools;
    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const LoadedDataset& dataset = *datasets[d];
        LabelInventory inventory = build_inventory(dataset.train_records);
        const std::string prefix = "baseline." + dataset.spec.name;
        Rng head_rng = Rng(seed).child(kHeadStream + d);
        params.add_all(init_head_params(prefix, enc.state_dim(),
                                        inventory.intents.size(),
                                        inventory.slots.size(),
                                        HeadInit::xavier, &head_rng));
        pools.push_back({prefix, encode_pool(dataset.train_records,
                                             inventory, input_fns[d])});
    }

    PretrainSettings settings;
    settings.epochs = config.epochs;
    settings.batch_size = config.baseline_batch;
    settings.learning_rate = config.outer_lr;
    Rng shuffle_rng = Rng(seed).child(kShuffleStream);

    TrainedModel model;
    model.model_name = model_name;
    const std::string base = checkpoint_base(config, model_name);
    PretrainStats stats = baseline_pretrain(
        enc, params, pools, settings, shuffle_rng,
        [&](std::size_t epoch, double loss) {
            log_epoch(model_name, epoch, config.epochs, loss);
            save_checkpoint(base + "-epoch" + std::to_string(epoch + 1) +
                                ".ckpt",
                            params);
        });
    model.epoch_losses = stats.epoch_losses;
    model.checkpoint_path = base + ".ckpt";
    save_checkpoint(model.checkpoint_path, params);
    return model;
}

SamplerConfig sampler_config_for(const RunConfig& config,
                                 std::uint64_t seed) {
    SamplerConfig sc;
    sc.k_max = config.k_max;
    sc.seed = seed;
    sc.query_cap = config.query_cap;
    sc.per_class_cap = config.per_class_cap;
    return sc;
}

std::size_t joint_input_dim(const std::vector<LoadedDataset>& datasets) {
    std::size_t dim = datasets.front().input_dim();
    for (const LoadedDataset& dataset : datasets)
        if (dataset.input_dim() != dim)
            fail("runner",
                 "joint training needs one shared input width, but "
                 "dataset '" +
                     datasets.front().spec.name + "' has " +
                     std::to_string(dim) + " and dataset '" +
                     dataset.spec.name + "' has " +
                     std::to_string(dataset.input_dim()));
    return dim;
}

}  // namespace

std::size_t LoadedDataset::input_dim() const { return embeddings.dimension; }

LoadedDataset load_dataset(const DatasetSpec& spec) {
    LoadedDataset dataset;
    dataset.spec = spec;
    dataset.train_records = parse_dataset_file(spec.train_path);
    dataset.test_records = parse_dataset_file(spec.test_path);
    if (dataset.train_records.empty())
        fail("runner",
             "dataset '" + spec.name + "': empty train split " +
                 spec.train_path);

    std::vector<UtteranceRecord> all = dataset.train_records;
    all.insert(all.end(), dataset.test_records.begin(),
               dataset.test_records.end());
    dataset.vocabulary = Vocabulary::from_records(all);
    LoadedEmbeddings loaded =
        load_embeddings(spec.embeddings_path, dataset.vocabulary);
    dataset.embeddings = std::move(loaded.table);
    std::fprintf(stderr,
                 "runner: dataset '%s': vocabulary %zu, embeddings cover "
                 "%zu (%zu zero-filled)\n",
                 spec.name.c_str(), dataset.vocabulary.size(),
                 loaded.coverage.covered, loaded.coverage.zero_filled);

    if (spec.contextual()) {
        dataset.contextual_train = load_contextual_vectors(
            spec.contextual_train_path, dataset.embeddings.dimension);
        dataset.contextual_test = load_contextual_vectors(
            spec.contextual_test_path, dataset.embeddings.dimension);
    }
    return dataset;
}

TokenInputFn token_inputs_for(const LoadedDataset& dataset, bool test_side) {
    if (dataset.spec.contextual()) {
        const ContextualVectors& vectors =
            test_side ? dataset.contextual_test : dataset.contextual_train;
        const std::string name = dataset.spec.name;
        return [&vectors, name](const UtteranceRecord& record) {
            return contextual_inputs_for_record(vectors, record, name);
        };
    }
    const Vocabulary& vocabulary = dataset.vocabulary;
    const EmbeddingTable& table = dataset.embeddings;
    return [&vocabulary, &table](const UtteranceRecord& record) {
        std::vector<std::size_t> ids;
        ids.reserve(record.tokens.size());
        for (const std::string& token : record.tokens)
            ids.push_back(vocabulary.lookup(token));
        return embed_tokens(table, ids);
    };
}

std::vector<TrainedModel> train_run(const RunConfig& config) {
    ensure_directory(config.output_dir);
    std::vector<LoadedDataset> datasets;
    datasets.reserve(config.datasets.size());
    for (const DatasetSpec& spec : config.datasets)
        datasets.push_back(load_dataset(spec));

    std::vector<TokenInputFn> train_inputs;
    for (const LoadedDataset& dataset : datasets)
        train_inputs.push_back(token_inputs_for(dataset, false));

    std::vector<TrainedModel> models;
    if (config.joint) {
        EncoderConfig enc =
            encoder_config_for(config, joint_input_dim(datasets));
        if (config.algorithm == Algorithm::finetune) {
            std::vector<const LoadedDataset*> refs;
            for (const LoadedDataset& dataset : datasets)
                refs.push_back(&dataset);
            models.push_back(
                train_baseline(config, "joint", enc, refs, train_inputs));
        } else {
            std::vector<std::pair<std::string, FewShotSplit>> splits;
            std::unordered_map<std::string, std::size_t> by_name;
            for (std::size_t d = 0; d < datasets.size(); ++d) {
                splits.emplace_back(
                    datasets[d].spec.name,
                    FewShotSplit::from_records(datasets[d].spec.name,
                                               datasets[d].train_records));
                by_name[datasets[d].spec.name] = d;
            }
            JointEpisodeSampler sampler(
                std::move(splits),
                sampler_config_for(config, config.seeds.front()));
            models.push_back(train_episodic(
                config, "joint", enc, [&]() { return sampler.next(); },
                [&](const std::string& source) -> const TokenInputFn& {
                    return train_inputs[by_name.at(source)];
                }));
        }
        return models;
    }

    for (std::size_t d = 0; d < datasets.size(); ++d) {
        const LoadedDataset& dataset = datasets[d];
        EncoderConfig enc = encoder_config_for(config, dataset.input_dim());
        if (config.algorithm == Algorithm::finetune) {
            models.push_back(train_baseline(config, dataset.spec.name, enc,
                                            {&dataset}, {train_inputs[d]}));
            continue;
        }
        EpisodeSampler sampler(
            FewShotSplit::from_records(dataset.spec.name,
                                       dataset.train_records),
            sampler_config_for(config, config.seeds.front()));
        models.push_back(train_episodic(
            config, dataset.spec.name, enc,
            [&]() { return sampler.next(); },
            [&](const std::string&) -> const TokenInputFn& {
                return train_inputs[d];
            }));
    }
    return models;
}

RunResult eval_run(const RunConfig& config, const EvalRequest& request) {
    ParameterSet checkpoint = load_checkpoint(request.checkpoint_path);
    ParameterSet encoder_params;
    for (const auto& [name, tensor] : checkpoint.entries())
        if (name.rfind("encoder.", 0) == 0) encoder_params.add(name, tensor);
    if (encoder_params.count() != 4)
        fail("runner", "checkpoint '" + request.checkpoint_path +
                           "' holds " +
                           std::to_string(encoder_params.count()) +
                           " encoder parameters, expected 4");

    // Resolve which dataset the split belongs to.
    const DatasetSpec* spec = nullptr;
    bool test_side = true;
    bool external_split = false;
    if (request.split_path.empty()) {
        if (config.datasets.size() != 1)
            fail("runner",
                 "--split is required when the config lists "
                 "multiple datasets");
        spec = &config.datasets.front();
    } else {
        for (const DatasetSpec& candidate : config.datasets) {
            if (candidate.test_path == request.split_path) {
                spec = &candidate;
                test_side = true;
                break;
            }
            if (candidate.train_path == request.split_path) {
                spec = &candidate;
                test_side = false;
                break;
            }
        }
        if (spec == nullptr) {
            if (config.datasets.size() == 1 &&
                !config.datasets.front().contextual()) {
                spec = &config.datasets.front();
                external_split = true;
            } else {
                fail("runner",
                     "--split '" + request.split_path +
                         "' matches no configured dataset split; "
                         "contextual datasets accept only their own "
                         "split files");
            }
        }
    }

    LoadedDataset dataset = load_dataset(*spec);
    std::vector<UtteranceRecord> records;
    TokenInputFn inputs;
    if (external_split) {
        records = parse_dataset_file(request.split_path);
        inputs = token_inputs_for(dataset, true);
    } else {
        records =
            test_side ? dataset.test_records : dataset.train_records;
        inputs = token_inputs_for(dataset, test_side);
    }
    if (records.empty())
        fail("runner", "evaluation split is empty: " +
                           (request.split_path.empty()
                                ? spec->test_path
                                : request.split_path));

    EncoderConfig enc = encoder_config_for(config, dataset.input_dim());
    {
        // Catch config/checkpoint shape drift before the first episode.
        const Tensor& fw = encoder_params.get("encoder.fw.weights");
        std::vector<std::size_t> expected = {
            enc.embedding_dim + enc.hidden_dim, 4 * enc.hidden_dim};
        if (fw.shape() != expected)
            fail("runner",
                 "checkpoint encoder shape does not match the config's "
                 "input width " +
                     std::to_string(enc.embedding_dim) +
                     " and hidden width " + std::to_string(enc.hidden_dim));
    }

    EvalSettings settings;
    settings.inner_steps = config.inner_steps;
    settings.inner_lr = config.inner_lr;
    settings.adapt_steps = config.baseline_adapt_steps;
    settings.adapt_lr = config.outer_lr;

    const std::size_t episodes =
        request.episodes ? request.episodes : config.eval_episodes;
    const std::vector<std::uint64_t>& seeds =
        request.seeds.empty() ? config.seeds : request.seeds;
    EpisodeAlgorithm algorithm = episode_algorithm(config.algorithm);

    std::vector<std::vector<EpisodeMetrics>> per_seed;
    for (std::uint64_t seed : seeds) {
        EpisodeSampler sampler(
            FewShotSplit::from_records(dataset.spec.name, records),
            sampler_config_for(config, seed));
        std::vector<EpisodeMetrics> metrics;
        metrics.reserve(episodes);
        for (std::size_t e = 0; e < episodes; ++e) {
            EpisodeView view =
                build_episode_view(sampler.next(), inputs);
            EpisodePrediction prediction = evaluate_episode(
                algorithm, enc, encoder_params, view, settings);
            metrics.push_back(score_episode(view, prediction));
        }
        std::fprintf(stderr,
                     "runner: evaluated %zu episodes on '%s' with seed "
                     "%" PRIu64 "\n",
                     episodes, dataset.spec.name.c_str(), seed);
        per_seed.push_back(std::move(metrics));
    }

    RunResult result;
    result.algorithm = algorithm_name(config.algorithm);
    result.dataset = dataset.spec.name;
    result.k_max = config.k_max;
    result.report = aggregate(per_seed, seeds);

    ensure_directory(config.output_dir);
    const std::string base = checkpoint_base(config, dataset.spec.name);
    write_run_result(base + "-eval.json", result);
    write_text_file(base + "-eval-table.txt",
                    render_results_table({result}));
    return result;
}

std::string prepare_splits_run(const std::string& data_path,
                               const std::string& split_config_path,
                               const std::string& out_dir) {
    std::vector<UtteranceRecord> records =
        apply_slot_prefixing(parse_dataset_file(data_path));
    SplitConfig split_config = read_split_config(split_config_path);
    GeneratedSplits generated = generate_splits(records, split_config);

    ensure_directory(out_dir);
    write_dataset_file(out_dir + "/train.txt", generated.train);
    if (generated.has_dev)
        write_dataset_file(out_dir + "/dev.txt", generated.dev);
    write_dataset_file(out_dir + "/test.txt", generated.test);
    std::string table = render_stats_table(generated.stats);
    write_text_file(out_dir + "/stats.txt", table);
    return table;
}

void sample_run(const std::string& split_path, std::size_t k_max,
                std::size_t count, std::uint64_t seed,
                const std::string& out_path) {
    std::vector<UtteranceRecord> records = parse_dataset_file(split_path);
    SamplerConfig sc;
    sc.k_max = k_max;
    sc.seed = seed;
    EpisodeSampler sampler(
        FewShotSplit::from_records(
            std::filesystem::path(split_path).stem().string(), records),
        sc);
    std::vector<Episode> episodes;
    episodes.reserve(count);
    for (std::size_t e = 0; e < count; ++e)
        episodes.push_back(sampler.next());
    write_episode_dump(out_path, episodes);
}

}  // namespace fewshot
