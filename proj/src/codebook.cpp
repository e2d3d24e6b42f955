#include "llmcodec/codebook.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "llmcodec/binary_io.hpp"
#include "llmcodec/error.hpp"
#include "llmcodec/hash.hpp"

namespace llmcodec {

namespace {

constexpr std::string_view kTableMagic = "LCEB1";
constexpr std::string_view kProjectedDimTag = "LCPD";

}  // namespace

std::string sanitize_label(std::string_view label) {
    std::string out(label);
    for (char& c : out)
        if (std::isspace(static_cast<unsigned char>(c))) c = '_';
    return out;
}

EmbeddingTable load_embedding_table(const std::filesystem::path& path) {
    bin::Reader r(bin::read_file(path.string()));
    if (r.remaining() < kTableMagic.size() || r.str(kTableMagic.size()) != kTableMagic)
        throw Error(ErrorCode::BadMagic, "not an LCEB1 file: " + path.string());
    const auto vocab = r.get<std::uint32_t>();
    const auto dim = r.get<std::uint32_t>();
    if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "embedding dimension is zero");

    EmbeddingTable table;
    table.tokens.reserve(vocab);
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(vocab) * dim);
    for (std::uint32_t i = 0; i < vocab; ++i) {
        const auto len = r.get<std::uint16_t>();
        auto label = sanitize_label(r.str(len));
        if (label.empty()) throw Error(ErrorCode::CorruptHeader, "empty token label at " + std::to_string(i));
        table.tokens.push_back(std::move(label));
        r.need(static_cast<std::size_t>(dim) * sizeof(float));
        for (std::uint32_t j = 0; j < dim; ++j) {
            const auto v = static_cast<double>(r.get<float>());
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "non-finite embedding value");
            data.push_back(v);
        }
    }
    table.vectors = FeatureGrid(vocab, dim, std::move(data));
    if (!r.at_end()) {
        if (r.remaining() != kProjectedDimTag.size() + 4 || r.str(kProjectedDimTag.size()) != kProjectedDimTag)
            throw Error(ErrorCode::DimensionMismatch, "trailing bytes after " + std::to_string(vocab) +
                                                          " records of dim " + std::to_string(dim));
        table.projected_dim = r.get<std::uint32_t>();
    }
    return table;
}

void save_embedding_table(const EmbeddingTable& table, const std::filesystem::path& path) {
    bin::Writer w;
    w.str(kTableMagic);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(table.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(table.dim()));
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& label = table.tokens[i];
        if (label.size() > std::numeric_limits<std::uint16_t>::max())
            throw Error(ErrorCode::InvalidArgument, "label too long");
        w.put<std::uint16_t>(static_cast<std::uint16_t>(label.size()));
        w.str(label);
        for (double v : table.vectors.row(i)) w.put(static_cast<float>(v));
    }
    if (table.projected_dim) {
        w.str(kProjectedDimTag);
        w.put<std::uint32_t>(*table.projected_dim);
    }
    bin::write_file(path.string(), w.buffer());
}

std::vector<std::string> load_word_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open word list " + path.string(), path.string());
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) words.push_back(line);
    }
    return words;
}

TokenizerMap load_tokenizer_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open tokenizer map " + path.string(), path.string());
    nlohmann::json j;
    try {
        in >> j;
        return j.get<TokenizerMap>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("tokenizer map: ") + e.what());
    }
}

// ---------------------------------------------------------------------------

Codebook::Codebook(std::vector<std::string> labels, FeatureGrid entries, std::size_t projected_dim,
                   std::uint64_t seed)
    : labels_(std::move(labels)), entries_(std::move(entries)) {
    if (labels_.empty()) throw Error(ErrorCode::EmptyResult, "codebook must have at least one entry");
    if (labels_.size() != entries_.frames())
        throw Error(ErrorCode::DimensionMismatch, "label count does not match entry count");
    if (projected_dim == 0) throw Error(ErrorCode::DimensionMismatch, "projected dimension is zero");
    const std::size_t in = entries_.dim();
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    Projection p{FeatureGrid(projected_dim, in), std::vector<double>(projected_dim, 0.0)};
    for (double& w : p.weight.data()) w = uni(rng);
    for (std::size_t i = 0; i < labels_.size(); ++i) reverse_.try_emplace(labels_[i], i);
    set_projection(std::move(p));
}

void Codebook::set_projection(Projection projection) {
    if (projection.in_dim() != entries_.dim() || projection.bias.size() != projection.out_dim())
        throw Error(ErrorCode::DimensionMismatch, "projection shape does not match codebook");
    projection_ = std::move(projection);
    refresh();
}

FeatureGrid& Codebook::mutable_entries() {
    if (frozen_) throw Error(ErrorCode::InvalidArgument, "codebook entries are frozen");
    return entries_;
}

void Codebook::refresh() {
    const std::size_t d = projection_.out_dim();
    const std::size_t in = projection_.in_dim();
    projected_ = FeatureGrid(entries_.frames(), d);
    for (std::size_t n = 0; n < entries_.frames(); ++n) {
        const auto e = entries_.row(n);
        for (std::size_t i = 0; i < d; ++i) {
            const auto w = projection_.weight.row(i);
            double acc = projection_.bias[i];
            for (std::size_t j = 0; j < in; ++j) acc += w[j] * e[j];
            projected_.at(n, i) = acc;
        }
    }
}

std::optional<std::size_t> Codebook::index_of(std::string_view label) const {
    auto it = reverse_.find(std::string(label));
    if (it == reverse_.end()) return std::nullopt;
    return it->second;
}

std::uint64_t Codebook::entry_hash() const {
    Fnv1a64 h;
    h.update_array(std::span<const double>(entries_.data()));
    return h.digest();
}

std::uint64_t Codebook::digest() const {
    Fnv1a64 h;
    h.update_pod(static_cast<std::uint64_t>(size()));
    for (const auto& l : labels_) {
        h.update(l);
        h.update_pod('\0');
    }
    h.update_pod(entry_hash());
    h.update_array(std::span<const double>(projection_.weight.data()));
    h.update_array(std::span<const double>(projection_.bias));
    return h.digest();
}

NearestResult Codebook::nearest(std::span<const double> query, SearchMode mode) const {
    const std::size_t d = projected_dim();
    if (query.size() != d)
        throw Error(ErrorCode::DimensionMismatch,
                    "query dim " + std::to_string(query.size()) + " != codebook dim " + std::to_string(d));
    NearestResult best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t n = 0; n < size(); ++n) {
        const auto e = projected_.row(n);
        double acc = 0.0;
        bool abandoned = false;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = query[j] - e[j];
            acc += diff * diff;
            // Partial sums only grow, so once one reaches the best distance
            // this entry can no longer win the strict comparison below.
            if (mode == SearchMode::Accelerated && acc >= best.distance) {
                abandoned = true;
                break;
            }
        }
        if (!abandoned && acc < best.distance) best = {n, acc};
    }
    return best;
}

std::vector<NearestResult> Codebook::nearest_rows(const FeatureGrid& queries, SearchMode mode) const {
    std::vector<NearestResult> out(queries.frames());
    for (std::size_t t = 0; t < queries.frames(); ++t) out[t] = nearest(queries.row(t), mode);
    return out;
}

// ---------------------------------------------------------------------------

Codebook build_word_codebook(const std::vector<std::string>& words, const TokenizerMap& tok,
                             const EmbeddingTable& table, std::size_t projected_dim,
                             std::uint64_t seed, WordCodebookStats* stats) {
    WordCodebookStats local;
    std::vector<std::string> labels;
    std::vector<double> data;
    std::unordered_map<std::string, std::size_t> seen;
    const std::size_t dim = table.dim();
    for (const auto& word : words) {
        auto it = tok.find(word);
        if (it == tok.end()) throw Error(ErrorCode::UnknownWord, "word not in tokenizer map: " + word, word);
        const auto& ids = it->second;
        for (auto id : ids)
            if (id < 0 || static_cast<std::size_t>(id) >= table.size())
                throw Error(ErrorCode::IndexOutOfRange, "sub-word id " + std::to_string(id) + " out of range");
        if (ids.empty() || ids.size() > 2) {
            ++local.excluded;
            continue;
        }
        auto label = sanitize_label(word);
        if (!seen.try_emplace(label, labels.size()).second) {
            ++local.duplicates;
            continue;
        }
        const auto a = table.vectors.row(static_cast<std::size_t>(ids[0]));
        if (ids.size() == 1) {
            data.insert(data.end(), a.begin(), a.end());
        } else {
            const auto b = table.vectors.row(static_cast<std::size_t>(ids[1]));
            for (std::size_t j = 0; j < dim; ++j) data.push_back((a[j] + b[j]) / 2.0);
        }
        labels.push_back(std::move(label));
    }
    local.kept = labels.size();
    if (stats) *stats = local;
    if (labels.empty()) throw Error(ErrorCode::EmptyResult, "every word was excluded from the codebook");
    const std::size_t n = labels.size();
    return Codebook(std::move(labels), FeatureGrid(n, dim, std::move(data)), projected_dim, seed);
}

Codebook build_subword_codebook(const EmbeddingTable& table, std::size_t projected_dim, std::uint64_t seed) {
    if (table.size() == 0) throw Error(ErrorCode::EmptyResult, "embedding table is empty");
    return Codebook(table.tokens, table.vectors, projected_dim, seed);
}

UsageStats usage_stats(const std::vector<std::vector<std::int64_t>>& indices, std::size_t codebook_size) {
    UsageStats s;
    s.counts.assign(codebook_size, 0);
    for (const auto& seq : indices) {
        for (auto idx : seq) {
            if (idx < 0 || static_cast<std::size_t>(idx) >= codebook_size)
                throw Error(ErrorCode::IndexOutOfRange, "token index " + std::to_string(idx) + " out of range");
            if (s.counts[static_cast<std::size_t>(idx)]++ == 0) ++s.distinct_used;
        }
    }
    return s;
}

SyntheticAssets make_synthetic_assets(std::size_t vocab, std::size_t dim, std::size_t words, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    SyntheticAssets a;
    a.table.vectors = FeatureGrid(vocab, dim);
    for (double& v : a.table.vectors.data()) v = static_cast<double>(static_cast<float>(normal(rng)));
    static constexpr const char* kSyllables[] = {"ka", "lo", "mi", "ren", "su", "ta", "vo", "zel"};
    for (std::size_t i = 0; i < vocab; ++i)
        a.table.tokens.push_back(std::string(kSyllables[i % 8]) + kSyllables[(i / 8) % 8] + std::to_string(i / 64));
    std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
    for (std::size_t w = 0; w < words; ++w) {
        // Sub-word count cycles 1, 2, 1, 2, 3 so a fifth of the list is excluded.
        static constexpr std::size_t kPieces[] = {1, 2, 1, 2, 3};
        std::vector<std::int64_t> ids;
        std::string word;
        for (std::size_t p = 0; p < kPieces[w % 5]; ++p) {
            const auto id = pick(rng);
            ids.push_back(static_cast<std::int64_t>(id));
            word += a.table.tokens[id];
        }
        word += "_" + std::to_string(w);
        a.words.push_back(word);
        a.tokenizer[word] = std::move(ids);
    }
    return a;
}

}  // namespace llmcodec
