#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "fewshot/corpus.hpp"
#include "fewshot/tensor.hpp"

namespace fewshot {

/// Token-to-index map. Index 0 is reserved for the unknown token; every
/// out-of-vocabulary lookup resolves to it.
class Vocabulary {
public:
    static constexpr std::size_t kUnknownIndex = 0;

    Vocabulary();

    /// Returns the token's index, registering it first if new.
    std::size_t add(const std::string& token);

    /// Index of the token, or the unknown index when absent.
    std::size_t lookup(const std::string& token) const;

    bool contains(const std::string& token) const;
    std::size_t size() const { return tokens_.size(); }
    const std::string& token_at(std::size_t index) const;

    static Vocabulary from_records(
        const std::vector<UtteranceRecord>& records);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Frozen lookup table of per-token vectors. The matrix never requires
/// gradients, so no optimizer can touch it.
struct EmbeddingTable {
    Tensor matrix;  // [V x E]
    std::size_t dimension = 0;

    Tensor row_vector(std::size_t token_index) const;
};

struct EmbeddingCoverage {
    std::size_t vocabulary_size = 0;
    std::size_t covered = 0;      // vocabulary rows found in the file
    std::size_t zero_filled = 0;  // vocabulary rows absent, left at zero
    std::vector<std::string> duplicate_tokens;  // later occurrence won
};

struct LoadedEmbeddings {
    EmbeddingTable table;
    EmbeddingCoverage coverage;
};

/// Reads a whitespace-separated text file of `token v1 .. vE` lines. Rows
/// for in-vocabulary tokens are copied; the unknown token and any token
/// missing from the file keep a zero vector. A token listed twice keeps its
/// last vector and is reported in the coverage's duplicate list (and warned
/// to stderr).
LoadedEmbeddings load_embeddings(const std::string& path,
                                 const Vocabulary& vocabulary);

/// Per-utterance token vectors standing in for a contextual encoder's
/// output, keyed by utterance id. File format: blocks separated by blank
/// lines, each starting `# utterance: <id>` followed by one line of E
/// floats per token.
using ContextualVectors =
    std::unordered_map<std::string, std::vector<std::vector<double>>>;

ContextualVectors load_contextual_vectors(const std::string& path,
                                          std::size_t expected_dim);

}  // namespace fewshot
