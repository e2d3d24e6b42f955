#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "llmcodec/signal.hpp"

namespace llmcodec {

/// Vocabulary embeddings of a language model: V labels, V x D vectors.
struct EmbeddingTable {
    std::vector<std::string> tokens;
    FeatureGrid vectors;
    /// Present only in files written by the codebook builder.
    std::optional<std::uint32_t> projected_dim;

    std::size_t size() const { return tokens.size(); }
    std::size_t dim() const { return vectors.dim(); }
};

/// word -> sub-word ids into an EmbeddingTable.
using TokenizerMap = std::map<std::string, std::vector<std::int64_t>>;

/// Replaces every whitespace character with '_'.
std::string sanitize_label(std::string_view label);

// LCEB1 binary format.
EmbeddingTable load_embedding_table(const std::filesystem::path& path);
void save_embedding_table(const EmbeddingTable& table, const std::filesystem::path& path);
std::vector<std::string> load_word_list(const std::filesystem::path& path);
TokenizerMap load_tokenizer_map(const std::filesystem::path& path);

/// Learnable linear map D -> d applied to every codebook entry.
struct Projection {
    FeatureGrid weight;  // d x D
    std::vector<double> bias;  // d

    std::size_t out_dim() const { return weight.frames(); }
    std::size_t in_dim() const { return weight.dim(); }
};

struct NearestResult {
    std::size_t index = 0;
    double distance = 0.0;  // squared Euclidean

    bool operator==(const NearestResult&) const = default;
};

enum class SearchMode { Exhaustive, Accelerated };

class Codebook {
public:
    Codebook() = default;
    /// Projection weight ~ U(-1/sqrt(D), 1/sqrt(D)) from `seed`, bias zero.
    Codebook(std::vector<std::string> labels, FeatureGrid entries, std::size_t projected_dim,
             std::uint64_t seed);

    std::size_t size() const { return labels_.size(); }
    std::size_t entry_dim() const { return entries_.dim(); }
    std::size_t projected_dim() const { return projection_.out_dim(); }

    const std::vector<std::string>& labels() const { return labels_; }
    const FeatureGrid& entries() const { return entries_; }
    const Projection& projection() const { return projection_; }
    const FeatureGrid& projected() const { return projected_; }

    bool frozen() const { return frozen_; }
    void set_frozen(bool frozen) { frozen_ = frozen; }

    /// Replaces the projection and refreshes the projected entries.
    void set_projection(Projection projection);
    /// Mutable access for optimizers; call refresh() after writing.
    Projection& mutable_projection() { return projection_; }
    /// Throws InvalidArgument while frozen.
    FeatureGrid& mutable_entries();
    void refresh();

    /// Lowest index carrying `label`.
    std::optional<std::size_t> index_of(std::string_view label) const;

    /// Hash of the raw entry bytes only (frozen-state witness).
    std::uint64_t entry_hash() const;
    /// Hash of labels, entries and projection.
    std::uint64_t digest() const;

    NearestResult nearest(std::span<const double> query, SearchMode mode = SearchMode::Exhaustive) const;
    std::vector<NearestResult> nearest_rows(const FeatureGrid& queries,
                                            SearchMode mode = SearchMode::Accelerated) const;

private:
    std::vector<std::string> labels_;
    FeatureGrid entries_;
    Projection projection_;
    FeatureGrid projected_;
    std::unordered_map<std::string, std::size_t> reverse_;
    bool frozen_ = true;
};

struct WordCodebookStats {
    std::size_t kept = 0;
    std::size_t excluded = 0;    // three or more sub-words
    std::size_t duplicates = 0;  // label already present
};

/// One- and two-sub-word words become entries (two: element-wise mean).
Codebook build_word_codebook(const std::vector<std::string>& words, const TokenizerMap& tok,
                             const EmbeddingTable& table, std::size_t projected_dim,
                             std::uint64_t seed, WordCodebookStats* stats = nullptr);

/// Every vocabulary entry verbatim.
Codebook build_subword_codebook(const EmbeddingTable& table, std::size_t projected_dim,
                                std::uint64_t seed);

struct UsageStats {
    std::vector<std::size_t> counts;
    std::size_t distinct_used = 0;
};

UsageStats usage_stats(const std::vector<std::vector<std::int64_t>>& indices, std::size_t codebook_size);

/// Seeded stand-in for real LLM assets: a V x D Gaussian vocabulary plus a
/// word list whose tokenizations have one, two or three sub-words.
struct SyntheticAssets {
    EmbeddingTable table;
    std::vector<std::string> words;
    TokenizerMap tokenizer;
};

SyntheticAssets make_synthetic_assets(std::size_t vocab = 256, std::size_t dim = 64,
                                      std::size_t words = 96, std::uint64_t seed = 7);

}  // namespace llmcodec
