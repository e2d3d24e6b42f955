#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "llmcodec/codebook.hpp"
#include "llmcodec/signal.hpp"

namespace llmcodec {

struct CodecConfig {
    int sample_rate = 16000;
    std::vector<std::size_t> encoder_strides{3, 4, 5, 8};
    std::size_t latent_dim = 64;
    std::vector<std::size_t> vq_strides{4, 2, 1};
    /// Names the vocabulary each layer is drawn from ("word" or "subword").
    std::vector<std::string> codebook_ids{"word", "subword", "subword"};

    std::size_t total_downsample() const;
    std::size_t layer_count() const { return vq_strides.size(); }
    /// Throws ConfigMismatch when the invariants fail.
    void validate() const;
    /// Stable text form hashed into stream digests.
    std::string canonical() const;
};

/// Layers are ordered semantic, coarse acoustic, residual acoustic. A layer
/// left empty is "not selected" and contributes nothing on decode.
struct QuantizedAudio {
    std::vector<std::vector<std::int64_t>> layers;
    std::size_t frame_count = 0;
    std::vector<std::size_t> strides;
    std::uint64_t config_digest = 0;

    std::size_t token_count() const;
    bool operator==(const QuantizedAudio&) const = default;
};

struct LayerQuantization {
    std::vector<std::int64_t> indices;
    FeatureGrid quantized;
};

LayerQuantization quantize_layer(const FeatureGrid& grid, const Codebook& book,
                                 SearchMode mode = SearchMode::Accelerated);

/// Intermediate values of the multi-scale residual chain.
struct EncodeResult {
    QuantizedAudio tokens;
    std::vector<FeatureGrid> layer_inputs;   // D_i = downsample(R_i, k_i)
    std::vector<FeatureGrid> quantized;      // Q_i at native length
    std::vector<FeatureGrid> contributions;  // U_i = upsample(Q_i, T)
    FeatureGrid residual;                    // R_{n+1}

    /// Sum of the layer contributions (the quantized features fed to the decoder).
    FeatureGrid reconstruction() const;
};

std::uint64_t config_digest(const CodecConfig& cfg, std::span<const Codebook> books);

EncodeResult encode(const FeatureGrid& features, const CodecConfig& cfg, std::span<const Codebook> books);
FeatureGrid decode(const QuantizedAudio& q, const CodecConfig& cfg, std::span<const Codebook> books);

/// Sum over layers of floor(frames / k_i) with frames = floor(sample_rate / total_downsample).
std::size_t tokens_per_second(int sample_rate, std::size_t total_downsample,
                              std::span<const std::size_t> vq_strides);

/// Zero-based layer ids in ascending order.
using LayerSelection = std::vector<std::size_t>;

/// "semantic" -> {0}, "all" -> every layer, otherwise 1-based ids such as "1,2".
LayerSelection parse_layer_selection(std::string_view text, std::size_t layer_count);

inline constexpr std::string_view kLayerSeparator = " <L> ";

std::string render_tokens(const QuantizedAudio& q, std::span<const Codebook> books,
                          const LayerSelection& selection);
/// Inverse of render_tokens. The result has one slot per codebook; layers
/// outside `selection` stay empty and frame_count/strides/digest are unset.
QuantizedAudio parse_tokens(std::string_view text, std::span<const Codebook> books,
                            const LayerSelection& selection);

// Token-stream JSON file.
void save_token_stream(const QuantizedAudio& q, const std::filesystem::path& path);
QuantizedAudio load_token_stream(const std::filesystem::path& path);

}  // namespace llmcodec
