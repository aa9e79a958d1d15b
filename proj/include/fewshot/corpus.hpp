#pragma once

#include <string>
#include <vector>

namespace fewshot {

/// The slot label for tokens outside any slot span. Also the sentinel that
/// episode remapping assigns to tokens whose label exists on only one side
/// of the support/query divide. Span extraction never emits it.
inline const std::string kOutsideLabel = "O";

/// One annotated utterance: pre-tokenized text, one slot label per token,
/// and the utterance-level intent. Ids are the record's 0-based position in
/// its source file, rendered as a decimal string, which keys sidecar files.
struct UtteranceRecord {
    std::string id;
    std::vector<std::string> tokens;
    std::vector<std::string> slots;
    std::string intent;

    bool operator==(const UtteranceRecord&) const = default;
};

/// Corpus text format: records separated by blank lines. Each record starts
/// with `# intent: <name>` followed by one `token<TAB>slot` line per token.
std::vector<UtteranceRecord> parse_dataset_text(const std::string& text,
                                                const std::string& source);
std::vector<UtteranceRecord> parse_dataset_file(const std::string& path);

std::string serialize_dataset(const std::vector<UtteranceRecord>& records);
void write_dataset_file(const std::string& path,
                        const std::vector<UtteranceRecord>& records);

/// Rewrites every non-outside slot label a to "<intent>:a". Labels already
/// carrying their intent's prefix are left alone, so the operation is
/// idempotent. The outside label is never prefixed.
std::vector<UtteranceRecord> apply_slot_prefixing(
    std::vector<UtteranceRecord> records);

/// Which intent classes belong to each split. Dev may be empty, in which
/// case no dev split is produced.
struct SplitConfig {
    std::vector<std::string> train;
    std::vector<std::string> dev;
    std::vector<std::string> test;
};

SplitConfig read_split_config(const std::string& path);

struct SplitStats {
    std::string split_name;
    std::size_t utterances = 0;
    std::size_t intents = 0;
    std::size_t slot_labels = 0;  // distinct non-outside labels
    std::size_t slot_values = 0;  // distinct (label, surface text) pairs
};

struct GeneratedSplits {
    std::vector<UtteranceRecord> train;
    std::vector<UtteranceRecord> dev;
    std::vector<UtteranceRecord> test;
    bool has_dev = false;
    std::vector<SplitStats> stats;
};

/// Partitions records by intent according to the config. Intents listed in
/// no split are dropped; an intent listed but absent from the data is a
/// config error, as is any overlap between the three lists.
GeneratedSplits generate_splits(const std::vector<UtteranceRecord>& records,
                                const SplitConfig& config);

SplitStats compute_split_stats(const std::string& split_name,
                               const std::vector<UtteranceRecord>& records);

/// Renders the per-split statistics as an aligned text table.
std::string render_stats_table(const std::vector<SplitStats>& stats);

}  // namespace fewshot
