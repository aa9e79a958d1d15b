#include "fewshot/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fewshot/errors.hpp"
#include "json.hpp"

namespace fewshot {

namespace {

using nlohmann::json;

[[noreturn]] void config_fail(const std::string& source,
                              const std::string& what) {
    fail("config", source + ": " + what);
}

/// Collects every key of the object that is not in the allowed set.
std::vector<std::string> unknown_keys(const json& object,
                                      const std::set<std::string>& allowed) {
    std::vector<std::string> out;
    for (const auto& [key, value] : object.items())
        if (!allowed.count(key)) out.push_back(key);
    return out;
}

void reject_unknown(const json& object, const std::set<std::string>& allowed,
                    const std::string& source, const std::string& where) {
    auto offenders = unknown_keys(object, allowed);
    if (offenders.empty()) return;
    std::ostringstream msg;
    msg << "unknown " << where << " key";
    if (offenders.size() > 1) msg << 's';
    msg << ' ';
    for (std::size_t i = 0; i < offenders.size(); ++i) {
        if (i) msg << ", ";
        msg << '\'' << offenders[i] << '\'';
    }
    config_fail(source, msg.str());
}

double positive_number(const json& value, const std::string& source,
                       const std::string& key) {
    if (!value.is_number())
        config_fail(source, "'" + key + "' must be a number");
    double v = value.get<double>();
    if (!(v > 0.0)) config_fail(source, "'" + key + "' must be positive");
    return v;
}

std::size_t positive_integer(const json& value, const std::string& source,
                             const std::string& key) {
    if (!value.is_number_unsigned() || value.get<std::uint64_t>() == 0)
        config_fail(source, "'" + key + "' must be a positive integer");
    return value.get<std::size_t>();
}

std::string required_string(const json& object, const std::string& source,
                            const std::string& key) {
    if (!object.contains(key))
        config_fail(source, "missing required key '" + key + "'");
    const json& value = object.at(key);
    if (!value.is_string() || value.get<std::string>().empty())
        config_fail(source, "'" + key + "' must be a non-empty string");
    return value.get<std::string>();
}

DatasetSpec parse_dataset(const json& object, const std::string& source,
                          std::size_t position) {
    std::string where = "datasets[" + std::to_string(position) + "]";
    if (!object.is_object()) config_fail(source, where + " must be an object");
    reject_unknown(object,
                   {"name", "train", "test", "embeddings",
                    "contextual_train", "contextual_test"},
                   source, where);
    DatasetSpec spec;
    spec.name = required_string(object, source, "name");
    spec.train_path = required_string(object, source, "train");
    spec.test_path = required_string(object, source, "test");
    spec.embeddings_path = required_string(object, source, "embeddings");
    bool has_train = object.contains("contextual_train");
    bool has_test = object.contains("contextual_test");
    if (has_train != has_test)
        config_fail(source, where +
                                ": contextual_train and contextual_test "
                                "must be given together");
    if (has_train) {
        spec.contextual_train_path =
            required_string(object, source, "contextual_train");
        spec.contextual_test_path =
            required_string(object, source, "contextual_test");
    }
    return spec;
}

}  // namespace

std::string algorithm_name(Algorithm algorithm) {
    switch (algorithm) {
        case Algorithm::proto: return "proto";
        case Algorithm::fomaml: return "fomaml";
        case Algorithm::finetune: return "finetune";
    }
    fail("config", "unreachable algorithm value");
}

Algorithm parse_algorithm(const std::string& name) {
    if (name == "proto") return Algorithm::proto;
    if (name == "fomaml") return Algorithm::fomaml;
    if (name == "finetune") return Algorithm::finetune;
    fail("config", "unknown algorithm '" + name +
                       "' (expected proto, fomaml, or finetune)");
}

double default_outer_lr(Algorithm algorithm) {
    return algorithm == Algorithm::fomaml ? 0.0029 : 0.001;
}

std::size_t default_epochs(bool contextual) { return contextual ? 30 : 50; }

RunConfig parse_run_config(const std::string& text,
                           const std::string& source) {
    json root = json::parse(text, nullptr, false);
    if (root.is_discarded())
        config_fail(source, "not valid JSON");
    if (!root.is_object())
        config_fail(source, "top level must be an object");
    reject_unknown(root,
                   {"algorithm", "k_max", "seeds", "datasets", "output_dir",
                    "joint", "hidden_dim", "slot_prefix_encoding", "outer_lr",
                    "inner_lr", "inner_steps", "baseline_batch",
                    "baseline_adapt_steps", "epochs", "episodes_per_epoch",
                    "eval_episodes", "query_cap", "per_class_cap"},
                   source, "config");

    RunConfig config;
    config.algorithm =
        parse_algorithm(required_string(root, source, "algorithm"));

    if (!root.contains("k_max"))
        config_fail(source, "missing required key 'k_max'");
    config.k_max = positive_integer(root.at("k_max"), source, "k_max");

    if (!root.contains("seeds") || !root.at("seeds").is_array() ||
        root.at("seeds").empty())
        config_fail(source, "'seeds' must be a non-empty array");
    for (const json& seed : root.at("seeds")) {
        if (!seed.is_number_unsigned())
            config_fail(source, "'seeds' entries must be non-negative "
                                "integers");
        config.seeds.push_back(seed.get<std::uint64_t>());
    }

    if (!root.contains("datasets") || !root.at("datasets").is_array() ||
        root.at("datasets").empty())
        config_fail(source, "'datasets' must be a non-empty array");
    for (std::size_t i = 0; i < root.at("datasets").size(); ++i)
        config.datasets.push_back(
            parse_dataset(root.at("datasets")[i], source, i));
    {
        std::set<std::string> names;
        for (const DatasetSpec& d : config.datasets)
            if (!names.insert(d.name).second)
                config_fail(source, "duplicate dataset name '" + d.name + "'");
    }

    config.output_dir = required_string(root, source, "output_dir");

    if (root.contains("joint")) {
        if (!root.at("joint").is_boolean())
            config_fail(source, "'joint' must be a boolean");
        config.joint = root.at("joint").get<bool>();
    }
    if (root.contains("slot_prefix_encoding")) {
        if (!root.at("slot_prefix_encoding").is_boolean())
            config_fail(source, "'slot_prefix_encoding' must be a boolean");
        config.slot_prefix_encoding =
            root.at("slot_prefix_encoding").get<bool>();
    }

    auto integer_or = [&](const char* key, std::size_t fallback) {
        if (!root.contains(key)) return fallback;
        return positive_integer(root.at(key), source, key);
    };
    config.hidden_dim = integer_or("hidden_dim", config.hidden_dim);
    if (root.contains("inner_steps")) {
        const json& v = root.at("inner_steps");
        if (!v.is_number_unsigned())
            config_fail(source, "'inner_steps' must be a non-negative "
                                "integer");
        config.inner_steps = v.get<std::size_t>();
    }
    config.baseline_batch = integer_or("baseline_batch", config.baseline_batch);
    config.baseline_adapt_steps =
        integer_or("baseline_adapt_steps", config.baseline_adapt_steps);
    config.episodes_per_epoch =
        integer_or("episodes_per_epoch", config.episodes_per_epoch);
    config.eval_episodes = integer_or("eval_episodes", config.eval_episodes);
    config.query_cap = integer_or("query_cap", config.query_cap);
    config.per_class_cap = integer_or("per_class_cap", config.per_class_cap);

    config.outer_lr = root.contains("outer_lr")
                          ? positive_number(root.at("outer_lr"), source,
                                            "outer_lr")
                          : default_outer_lr(config.algorithm);
    config.inner_lr = root.contains("inner_lr")
                          ? positive_number(root.at("inner_lr"), source,
                                            "inner_lr")
                          : config.inner_lr;

    bool contextual = false;
    for (const DatasetSpec& d : config.datasets)
        if (d.contextual()) contextual = true;
    config.epochs = root.contains("epochs")
                        ? positive_integer(root.at("epochs"), source, "epochs")
                        : default_epochs(contextual);

    return config;
}

RunConfig read_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("config", "cannot open '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    RunConfig config = parse_run_config(text.str(), path);
    for (const DatasetSpec& d : config.datasets) {
        for (const std::string& p :
             {d.train_path, d.test_path, d.embeddings_path,
              d.contextual_train_path, d.contextual_test_path}) {
            if (p.empty()) continue;
            if (!std::filesystem::exists(p))
                fail_io("config", "dataset '" + d.name +
                                      "' references missing file '" + p + "'");
        }
    }
    return config;
}

}  // namespace fewshot
