#include "fewshot/embedding.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fewshot/errors.hpp"

namespace fewshot {

Vocabulary::Vocabulary() {
    tokens_.push_back("<unk>");
    index_["<unk>"] = kUnknownIndex;
}

std::size_t Vocabulary::add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    std::size_t idx = tokens_.size();
    tokens_.push_back(token);
    index_[token] = idx;
    return idx;
}

std::size_t Vocabulary::lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnknownIndex : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return index_.count(token) != 0;
}

const std::string& Vocabulary::token_at(std::size_t index) const {
    if (index >= tokens_.size())
        fail("encoder", "vocabulary index " + std::to_string(index) +
                            " out of range");
    return tokens_[index];
}

Vocabulary Vocabulary::from_records(
    const std::vector<UtteranceRecord>& records) {
    Vocabulary vocab;
    for (const auto& r : records)
        for (const auto& token : r.tokens) vocab.add(token);
    return vocab;
}

Tensor EmbeddingTable::row_vector(std::size_t token_index) const {
    return row(matrix, token_index);
}

LoadedEmbeddings load_embeddings(const std::string& path,
                                 const Vocabulary& vocabulary) {
    std::ifstream in(path);
    if (!in) fail_io("encoder", "cannot open embeddings: " + path);

    std::size_t dim = 0;
    std::vector<double> values;  // filled once dim is known
    std::vector<bool> seen(vocabulary.size(), false);
    EmbeddingCoverage coverage;
    coverage.vocabulary_size = vocabulary.size();

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::istringstream fields(line);
        std::string token;
        fields >> token;
        std::vector<double> vec;
        double x;
        while (fields >> x) vec.push_back(x);
        if (!fields.eof())
            fail_io("encoder", path + ":" + std::to_string(line_no) +
                                   ": non-numeric embedding value");
        if (vec.empty())
            fail_io("encoder", path + ":" + std::to_string(line_no) +
                                   ": no values after token");
        if (dim == 0) {
            dim = vec.size();
            values.assign(vocabulary.size() * dim, 0.0);
        } else if (vec.size() != dim) {
            fail_io("encoder",
                    path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, found " +
                        std::to_string(vec.size()));
        }
        if (!vocabulary.contains(token)) continue;
        std::size_t idx = vocabulary.lookup(token);
        if (idx == Vocabulary::kUnknownIndex) continue;
        if (seen[idx]) {
            coverage.duplicate_tokens.push_back(token);
            std::fprintf(stderr,
                         "encoder: warning: duplicate embedding for '%s' "
                         "(%s:%zu), keeping the later one\n",
                         token.c_str(), path.c_str(), line_no);
        }
        seen[idx] = true;
        std::copy(vec.begin(), vec.end(),
                  values.begin() + static_cast<std::ptrdiff_t>(idx * dim));
    }
    if (dim == 0) fail_io("encoder", "embeddings file is empty: " + path);

    for (std::size_t i = 1; i < vocabulary.size(); ++i)
        if (seen[i]) ++coverage.covered;
    coverage.zero_filled =
        vocabulary.size() - 1 - coverage.covered;  // unknown row excluded

    LoadedEmbeddings out;
    out.table.dimension = dim;
    out.table.matrix = Tensor::from_values({vocabulary.size(), dim},
                                           std::move(values), false);
    out.coverage = coverage;
    return out;
}

ContextualVectors load_contextual_vectors(const std::string& path,
                                          std::size_t expected_dim) {
    std::ifstream in(path);
    if (!in) fail_io("encoder", "cannot open contextual vectors: " + path);

    const std::string header = "# utterance:";
    ContextualVectors out;
    std::string current_id;
    std::vector<std::vector<double>> current;
    std::string line;
    std::size_t line_no = 0;

    auto flush = [&]() {
        if (current_id.empty()) return;
        if (current.empty())
            fail_io("encoder", path + ": utterance '" + current_id +
                                   "' has no vectors");
        out[current_id] = std::move(current);
        current.clear();
        current_id.clear();
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) {
            flush();
            continue;
        }
        if (line.rfind(header, 0) == 0) {
            flush();
            auto id_start = line.find_first_not_of(" \t", header.size());
            if (id_start == std::string::npos)
                fail_io("encoder", path + ":" + std::to_string(line_no) +
                                       ": empty utterance id");
            current_id = line.substr(id_start);
            continue;
        }
        if (current_id.empty())
            fail_io("encoder", path + ":" + std::to_string(line_no) +
                                   ": expected '# utterance: <id>' header");
        std::istringstream fields(line);
        std::vector<double> vec;
        double x;
        while (fields >> x) vec.push_back(x);
        if (!fields.eof())
            fail_io("encoder", path + ":" + std::to_string(line_no) +
                                   ": non-numeric vector value");
        if (vec.size() != expected_dim)
            fail_io("encoder", path + ":" + std::to_string(line_no) +
                                   ": expected " +
                                   std::to_string(expected_dim) +
                                   " values, found " +
                                   std::to_string(vec.size()));
        current.push_back(std::move(vec));
    }
    flush();
    return out;
}

}  // namespace fewshot
