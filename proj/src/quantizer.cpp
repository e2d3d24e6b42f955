#include "llmcodec/quantizer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "llmcodec/error.hpp"
#include "llmcodec/hash.hpp"

namespace llmcodec {

std::size_t CodecConfig::total_downsample() const {
    return std::accumulate(encoder_strides.begin(), encoder_strides.end(), std::size_t{1},
                           std::multiplies<>());
}

void CodecConfig::validate() const {
    if (sample_rate <= 0) throw Error(ErrorCode::ConfigMismatch, "sample_rate must be positive");
    if (encoder_strides.empty()) throw Error(ErrorCode::ConfigMismatch, "encoder_strides is empty");
    if (vq_strides.empty()) throw Error(ErrorCode::ConfigMismatch, "vq_strides is empty");
    for (auto s : encoder_strides)
        if (s == 0) throw Error(ErrorCode::ConfigMismatch, "encoder strides must be >= 1");
    for (auto s : vq_strides)
        if (s == 0) throw Error(ErrorCode::ConfigMismatch, "vq strides must be >= 1");
    if (vq_strides.back() != 1) throw Error(ErrorCode::ConfigMismatch, "last vq stride must be 1");
    if (latent_dim == 0) throw Error(ErrorCode::ConfigMismatch, "latent_dim must be positive");
    if (codebook_ids.size() != vq_strides.size())
        throw Error(ErrorCode::ConfigMismatch, "need one codebook id per vq layer");
}

std::string CodecConfig::canonical() const {
    std::ostringstream ss;
    auto list = [&ss](const auto& v) {
        for (std::size_t i = 0; i < v.size(); ++i) ss << (i ? "," : "") << v[i];
    };
    ss << "sample_rate=" << sample_rate << ";encoder_strides=";
    list(encoder_strides);
    ss << ";latent_dim=" << latent_dim << ";vq_strides=";
    list(vq_strides);
    ss << ";codebooks=";
    list(codebook_ids);
    return ss.str();
}

std::size_t QuantizedAudio::token_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
}

LayerQuantization quantize_layer(const FeatureGrid& grid, const Codebook& book, SearchMode mode) {
    if (grid.dim() != book.projected_dim())
        throw Error(ErrorCode::DimensionMismatch, "grid dim " + std::to_string(grid.dim()) +
                                                      " != codebook dim " + std::to_string(book.projected_dim()));
    LayerQuantization out{{}, FeatureGrid(grid.frames(), grid.dim())};
    out.indices.reserve(grid.frames());
    const auto hits = book.nearest_rows(grid, mode);
    for (std::size_t t = 0; t < grid.frames(); ++t) {
        out.indices.push_back(static_cast<std::int64_t>(hits[t].index));
        const auto e = book.projected().row(hits[t].index);
        std::copy(e.begin(), e.end(), out.quantized.row(t).begin());
    }
    return out;
}

FeatureGrid EncodeResult::reconstruction() const {
    if (contributions.empty()) return {};
    FeatureGrid sum = contributions.front();
    for (std::size_t i = 1; i < contributions.size(); ++i)
        for (std::size_t k = 0; k < sum.data().size(); ++k) sum.data()[k] += contributions[i].data()[k];
    return sum;
}

std::uint64_t config_digest(const CodecConfig& cfg, std::span<const Codebook> books) {
    Fnv1a64 h;
    h.update(cfg.canonical());
    for (const auto& b : books) h.update_pod(b.digest());
    return h.digest();
}

namespace {

void check_books(const CodecConfig& cfg, std::span<const Codebook> books) {
    cfg.validate();
    if (books.size() != cfg.layer_count())
        throw Error(ErrorCode::ConfigMismatch, "expected " + std::to_string(cfg.layer_count()) +
                                                   " codebooks, got " + std::to_string(books.size()));
    for (const auto& b : books)
        if (b.projected_dim() != cfg.latent_dim)
            throw Error(ErrorCode::ConfigMismatch, "codebook projected dim differs from latent_dim");
}

}  // namespace

EncodeResult encode(const FeatureGrid& features, const CodecConfig& cfg, std::span<const Codebook> books) {
    check_books(cfg, books);
    if (features.dim() != cfg.latent_dim)
        throw Error(ErrorCode::ConfigMismatch, "feature dim differs from latent_dim");
    if (features.frames() == 0) throw Error(ErrorCode::ConfigMismatch, "no frames to encode");
    const std::size_t frames = features.frames();

    EncodeResult r;
    r.tokens.frame_count = frames;
    r.tokens.strides = cfg.vq_strides;
    r.tokens.config_digest = config_digest(cfg, books);
    FeatureGrid residual = features;
    for (std::size_t i = 0; i < cfg.layer_count(); ++i) {
        auto down = downsample_frames(residual, cfg.vq_strides[i]);
        auto lq = quantize_layer(down, books[i]);
        auto up = upsample_frames(lq.quantized, frames);
        for (std::size_t k = 0; k < residual.data().size(); ++k) residual.data()[k] -= up.data()[k];
        r.tokens.layers.push_back(std::move(lq.indices));
        r.layer_inputs.push_back(std::move(down));
        r.quantized.push_back(std::move(lq.quantized));
        r.contributions.push_back(std::move(up));
    }
    r.residual = std::move(residual);
    return r;
}

FeatureGrid decode(const QuantizedAudio& q, const CodecConfig& cfg, std::span<const Codebook> books) {
    check_books(cfg, books);
    if (q.config_digest != config_digest(cfg, books))
        throw Error(ErrorCode::DigestMismatch, "token stream was produced with a different config or codebooks");
    if (q.layers.size() != cfg.layer_count())
        throw Error(ErrorCode::LayerCountMismatch, "stream has " + std::to_string(q.layers.size()) + " layers");
    if (q.frame_count == 0) throw Error(ErrorCode::InvalidLength, "stream has zero frames");
    FeatureGrid out(q.frame_count, cfg.latent_dim);
    for (std::size_t i = 0; i < q.layers.size(); ++i) {
        const auto& idx = q.layers[i];
        if (idx.empty()) continue;
        const std::size_t expected = downsampled_length(q.frame_count, cfg.vq_strides[i]);
        if (idx.size() != expected)
            throw Error(ErrorCode::InvalidLength, "layer " + std::to_string(i + 1) + " has " +
                                                      std::to_string(idx.size()) + " tokens, expected " +
                                                      std::to_string(expected));
        FeatureGrid native(idx.size(), cfg.latent_dim);
        for (std::size_t t = 0; t < idx.size(); ++t) {
            if (idx[t] < 0 || static_cast<std::size_t>(idx[t]) >= books[i].size())
                throw Error(ErrorCode::IndexOutOfRange, "token " + std::to_string(idx[t]) + " out of range");
            const auto e = books[i].projected().row(static_cast<std::size_t>(idx[t]));
            std::copy(e.begin(), e.end(), native.row(t).begin());
        }
        const auto up = upsample_frames(native, q.frame_count);
        for (std::size_t k = 0; k < out.data().size(); ++k) out.data()[k] += up.data()[k];
    }
    return out;
}

std::size_t tokens_per_second(int sample_rate, std::size_t total_downsample, std::span<const std::size_t> vq_strides) {
    if (sample_rate <= 0 || total_downsample == 0)
        throw Error(ErrorCode::InvalidArgument, "sample rate and downsample factor must be positive");
    const std::size_t frames = static_cast<std::size_t>(sample_rate) / total_downsample;
    std::size_t total = 0;
    for (auto k : vq_strides) total += downsampled_length(frames, k);
    return total;
}

LayerSelection parse_layer_selection(std::string_view text, std::size_t layer_count) {
    LayerSelection sel;
    if (text == "semantic") {
        sel.push_back(0);
    } else if (text == "all" || text.empty()) {
        for (std::size_t i = 0; i < layer_count; ++i) sel.push_back(i);
    } else {
        std::stringstream ss{std::string(text)};
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::size_t id = 0;
            try {
                id = std::stoul(item);
            } catch (const std::exception&) {
                throw Error(ErrorCode::ParseError, "bad layer id '" + item + "'", item);
            }
            if (id == 0 || id > layer_count)
                throw Error(ErrorCode::IndexOutOfRange, "layer id " + item + " out of range", item);
            sel.push_back(id - 1);
        }
        std::sort(sel.begin(), sel.end());
        sel.erase(std::unique(sel.begin(), sel.end()), sel.end());
    }
    return sel;
}

std::string render_tokens(const QuantizedAudio& q, std::span<const Codebook> books, const LayerSelection& selection) {
    std::string out;
    for (std::size_t s = 0; s < selection.size(); ++s) {
        const std::size_t layer = selection[s];
        if (layer >= q.layers.size() || layer >= books.size())
            throw Error(ErrorCode::IndexOutOfRange, "layer " + std::to_string(layer + 1) + " not available");
        if (s) out += kLayerSeparator;
        const auto& labels = books[layer].labels();
        bool first = true;
        for (auto idx : q.layers[layer]) {
            if (idx < 0 || static_cast<std::size_t>(idx) >= labels.size())
                throw Error(ErrorCode::IndexOutOfRange, "token " + std::to_string(idx) + " out of range");
            if (!first) out += ' ';
            out += labels[static_cast<std::size_t>(idx)];
            first = false;
        }
    }
    return out;
}

QuantizedAudio parse_tokens(std::string_view text, std::span<const Codebook> books, const LayerSelection& selection) {
    // Whitespace-delimited words; a bare "<L>" word starts the next layer.
    std::vector<std::vector<std::string>> segments(1);
    std::istringstream ss{std::string(text)};
    std::string word;
    while (ss >> word) {
        if (word == "<L>") segments.emplace_back();
        else segments.back().push_back(word);
    }
    if (segments.size() != selection.size())
        throw Error(ErrorCode::LayerCountMismatch, "text has " + std::to_string(segments.size()) +
                                                       " layers, selection has " + std::to_string(selection.size()));
    QuantizedAudio q;
    q.layers.resize(books.size());
    for (std::size_t s = 0; s < selection.size(); ++s) {
        const std::size_t layer = selection[s];
        if (layer >= books.size())
            throw Error(ErrorCode::IndexOutOfRange, "layer " + std::to_string(layer + 1) + " not available");
        for (const auto& w : segments[s]) {
            auto idx = books[layer].index_of(w);
            if (!idx) throw Error(ErrorCode::UnknownLabel, "unknown token '" + w + "'", w);
            q.layers[layer].push_back(static_cast<std::int64_t>(*idx));
        }
    }
    return q;
}

void save_token_stream(const QuantizedAudio& q, const std::filesystem::path& path) {
    nlohmann::json j;
    j["config_digest"] = to_hex(q.config_digest);
    j["frame_count"] = q.frame_count;
    j["layers"] = q.layers;
    j["strides"] = q.strides;
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string(), path.string());
    out << j.dump() << '\n';
}

QuantizedAudio load_token_stream(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string(), path.string());
    try {
        nlohmann::json j;
        in >> j;
        QuantizedAudio q;
        q.config_digest = from_hex(j.at("config_digest").get<std::string>());
        q.frame_count = j.at("frame_count").get<std::size_t>();
        q.layers = j.at("layers").get<std::vector<std::vector<std::int64_t>>>();
        q.strides = j.at("strides").get<std::vector<std::size_t>>();
        return q;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("token stream: ") + e.what());
    }
}

}  // namespace llmcodec
