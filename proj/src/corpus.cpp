#include "fewshot/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fewshot/errors.hpp"
#include "fewshot/metrics.hpp"

#include "json.hpp"

namespace fewshot {

namespace {

const std::string kIntentPrefix = "# intent:";

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

bool is_blank(const std::string& line) {
    return line.find_first_not_of(" \t") == std::string::npos;
}

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void format_error(const std::string& source, std::size_t line,
                               const std::string& what) {
    fail_io("corpus", source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::vector<UtteranceRecord> parse_dataset_text(const std::string& text,
                                                const std::string& source) {
    std::vector<UtteranceRecord> records;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    bool in_block = false;
    UtteranceRecord current;
    std::size_t block_start = 0;

    auto finish_block = [&]() {
        if (!in_block) return;
        if (current.tokens.empty())
            format_error(source, block_start, "record has no token lines");
        current.id = std::to_string(records.size());
        records.push_back(std::move(current));
        current = UtteranceRecord{};
        in_block = false;
    };

    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (is_blank(line)) {
            finish_block();
            continue;
        }
        if (line.rfind(kIntentPrefix, 0) == 0) {
            if (in_block)
                format_error(source, line_no,
                             "intent line inside a record; records are "
                             "separated by blank lines");
            std::string name = trim(line.substr(kIntentPrefix.size()));
            if (name.empty())
                format_error(source, line_no, "empty intent name");
            in_block = true;
            block_start = line_no;
            current.intent = name;
            continue;
        }
        if (!in_block)
            format_error(source, line_no,
                         "expected '# intent: <name>' to start a record");
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            format_error(source, line_no,
                         "expected 'token<TAB>slot', found no tab");
        std::string token = line.substr(0, tab);
        std::string slot = trim(line.substr(tab + 1));
        if (token.empty())
            format_error(source, line_no, "empty token before the tab");
        if (slot.empty())
            format_error(source, line_no, "empty slot label after the tab");
        current.tokens.push_back(token);
        current.slots.push_back(slot);
    }
    finish_block();
    return records;
}

std::vector<UtteranceRecord> parse_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("corpus", "cannot open: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_dataset_text(buffer.str(), path);
}

std::string serialize_dataset(const std::vector<UtteranceRecord>& records) {
    std::ostringstream out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (i) out << "\n";
        const auto& r = records[i];
        out << kIntentPrefix << " " << r.intent << "\n";
        for (std::size_t j = 0; j < r.tokens.size(); ++j)
            out << r.tokens[j] << "\t" << r.slots[j] << "\n";
    }
    return out.str();
}

void write_dataset_file(const std::string& path,
                        const std::vector<UtteranceRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("corpus", "cannot open for writing: " + path);
    out << serialize_dataset(records);
    if (!out) fail_io("corpus", "write failed: " + path);
}

std::vector<UtteranceRecord> apply_slot_prefixing(
    std::vector<UtteranceRecord> records) {
    for (auto& r : records) {
        const std::string prefix = r.intent + ":";
        for (auto& slot : r.slots) {
            if (slot == kOutsideLabel) continue;
            if (slot.rfind(prefix, 0) == 0) continue;
            slot = prefix + slot;
        }
    }
    return records;
}

SplitConfig read_split_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_io("corpus", "cannot open split config: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        fail_io("corpus", "split config " + path + ": " + e.what());
    }
    if (!doc.is_object())
        fail("corpus", "split config " + path + ": expected an object");

    SplitConfig config;
    for (const auto& [key, value] : doc.items()) {
        std::vector<std::string>* target = nullptr;
        if (key == "train") target = &config.train;
        else if (key == "dev") target = &config.dev;
        else if (key == "test") target = &config.test;
        else
            fail("corpus", "split config " + path + ": unknown key '" + key +
                               "' (expected train/dev/test)");
        if (!value.is_array())
            fail("corpus", "split config " + path + ": '" + key +
                               "' must be an array of intent names");
        for (const auto& item : value) {
            if (!item.is_string())
                fail("corpus", "split config " + path + ": '" + key +
                                   "' entries must be strings");
            target->push_back(item.get<std::string>());
        }
    }
    if (config.train.empty() || config.test.empty())
        fail("corpus",
             "split config " + path + ": train and test must be non-empty");
    return config;
}

SplitStats compute_split_stats(const std::string& split_name,
                               const std::vector<UtteranceRecord>& records) {
    SplitStats stats;
    stats.split_name = split_name;
    stats.utterances = records.size();
    std::unordered_set<std::string> intents;
    std::unordered_set<std::string> labels;
    std::set<std::pair<std::string, std::string>> values;
    for (const auto& r : records) {
        intents.insert(r.intent);
        for (const auto& slot : r.slots)
            if (slot != kOutsideLabel) labels.insert(slot);
        for (const Span& span : extract_spans(r.slots)) {
            std::string surface;
            for (std::size_t j = span.start; j < span.end; ++j) {
                if (j > span.start) surface += " ";
                surface += r.tokens[j];
            }
            values.emplace(span.label, surface);
        }
    }
    stats.intents = intents.size();
    stats.slot_labels = labels.size();
    stats.slot_values = values.size();
    return stats;
}

GeneratedSplits generate_splits(const std::vector<UtteranceRecord>& records,
                                const SplitConfig& config) {
    struct Membership {
        const std::vector<std::string>* list;
        const char* name;
    };
    const Membership lists[] = {{&config.train, "train"},
                                {&config.dev, "dev"},
                                {&config.test, "test"}};

    std::unordered_map<std::string, std::string> assignment;
    for (const auto& [list, name] : lists) {
        for (const auto& intent : *list) {
            auto [it, inserted] = assignment.emplace(intent, name);
            if (!inserted)
                fail("corpus", "split config: intent '" + intent +
                                   "' appears in both " + it->second +
                                   " and " + name);
        }
    }

    std::unordered_set<std::string> present;
    for (const auto& r : records) present.insert(r.intent);
    for (const auto& [intent, split] : assignment)
        if (!present.count(intent))
            fail("corpus", "split config: intent '" + intent + "' (" + split +
                               ") is absent from the data");

    GeneratedSplits out;
    out.has_dev = !config.dev.empty();
    for (const auto& r : records) {
        auto it = assignment.find(r.intent);
        if (it == assignment.end()) continue;
        if (it->second == std::string("train")) out.train.push_back(r);
        else if (it->second == std::string("dev")) out.dev.push_back(r);
        else out.test.push_back(r);
    }

    out.stats.push_back(compute_split_stats("train", out.train));
    if (out.has_dev) out.stats.push_back(compute_split_stats("dev", out.dev));
    out.stats.push_back(compute_split_stats("test", out.test));
    return out;
}

std::string render_stats_table(const std::vector<SplitStats>& stats) {
    std::ostringstream out;
    out << "split      utterances  intents  slot_labels  slot_values\n";
    for (const auto& s : stats) {
        out << s.split_name;
        for (std::size_t i = s.split_name.size(); i < 11; ++i) out << ' ';
        std::string fields[] = {std::to_string(s.utterances),
                                std::to_string(s.intents),
                                std::to_string(s.slot_labels),
                                std::to_string(s.slot_values)};
        std::size_t widths[] = {10, 7, 11, 11};
        for (int i = 0; i < 4; ++i) {
            for (std::size_t p = fields[i].size(); p < widths[i]; ++p)
                out << ' ';
            out << fields[i];
            if (i < 3) out << "  ";
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace fewshot
