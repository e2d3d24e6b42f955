#pragma once

#include <cstdint>
#include <vector>

#include "llmcodec/autograd.hpp"
#include "llmcodec/codebook.hpp"
#include "llmcodec/losses.hpp"
#include "llmcodec/quantizer.hpp"
#include "llmcodec/signal.hpp"

namespace llmcodec::nn {

struct ModelOptions {
    /// Width of the first encoder block; doubles per block up to max_channels.
    std::size_t channels = 8;
    std::size_t max_channels = 64;
    std::uint64_t seed = 1;
    /// When false the codebook entries become trainable parameters.
    bool frozen_codebooks = true;
};

/// Graph handles for one codebook layer.
struct BookBinding {
    Var entries;  // [N, D]
    Var weight;   // [d, D]
    Var bias;     // [d]
};

struct EncoderOutput {
    FeatureGrid features;  // ceil(L / total_downsample) frames
    std::size_t pad = 0;   // zeros appended to reach a multiple of total_downsample
};

/// Convolutional encoder/decoder plus the codebooks they quantize against.
///
/// Encoder: kernel-7 input conv, then per stride s a residual unit (two
/// kernel-3 convs with a skip) and a stride-s conv with kernel 2s, then a
/// kernel-7 conv to the latent dim. The decoder mirrors it with transposed
/// convolutions in reversed stride order. tanh activations throughout.
///
/// Parameter ids: "enc.*", "dec.*", and "vq.<layer>.proj.{weight,bias}"
/// (plus "vq.<layer>.entries" when codebooks are not frozen).
class ToyCodecModel {
public:
    ToyCodecModel(CodecConfig config, std::vector<Codebook> books, ModelOptions options = {});

    const CodecConfig& config() const { return config_; }
    const ModelOptions& options() const { return options_; }
    const std::vector<Codebook>& books() const { return books_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    /// audio [L] with L a multiple of total_downsample -> [L / total, d].
    Var encode(Graph& g, Var audio, bool trainable) const;
    /// grid [T, d] -> audio [T * total].
    Var decode(Graph& g, Var grid, bool trainable) const;
    BookBinding bind_book(Graph& g, std::size_t layer, bool trainable) const;

    /// Copies the "vq.*" parameters back into the codebooks.
    void sync_codebooks();

    EncoderOutput encoder_forward(const AudioBuffer& audio) const;
    /// Removes `pad` trailing samples (when the grid is long enough to carry them).
    AudioBuffer decoder_forward(const FeatureGrid& grid, std::size_t pad = 0) const;

    /// Full codec path: encode, truncate to floor(L / total) frames, quantize.
    QuantizedAudio quantize_audio(const AudioBuffer& audio) const;
    AudioBuffer reconstruct(const QuantizedAudio& q) const;

    std::size_t channels_at(std::size_t block) const;

private:
    Var param(Graph& g, std::string_view id, bool trainable) const;
    Var residual_unit(Graph& g, Var x, const std::string& prefix, bool trainable) const;

    CodecConfig config_;
    std::vector<Codebook> books_;
    ModelOptions options_;
    mutable ParameterStore params_;
};

struct DiscriminatorOptions {
    /// One discriminator per hop; n_fft = 4 * hop.
    std::vector<std::size_t> hops{64, 256};
    std::size_t hidden = 16;
    std::size_t bands = 16;
    std::size_t layers = 3;
    std::uint64_t seed = 2;
};

/// Spectrogram discriminators: per hop, band-pooled magnitude and
/// log-magnitude channels feed a stack of kernel-3 convolutions; every
/// hidden layer output is a feature map and the last layer is a logit map.
class SpectroDiscriminator {
public:
    explicit SpectroDiscriminator(DiscriminatorOptions options = {});

    const DiscriminatorOptions& options() const { return options_; }
    std::size_t count() const { return options_.hops.size(); }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    SpectrogramConfig spectro_config(std::size_t k) const;

    losses::DiscriminatorVars forward(Graph& g, Var audio, bool trainable) const;
    losses::DiscriminatorOutputs evaluate(const AudioBuffer& audio) const;

private:
    DiscriminatorOptions options_;
    mutable ParameterStore params_;
};

// ---------------------------------------------------------------------------

struct BridgeOutput {
    EncodeResult encoded;
    /// Quantized features; backward copies the gradient to the encoder output.
    Var quantized;
    /// Layer-1 projected entries up-sampled to T (gradient to layer-1 projection).
    Var semantic_full;
    /// Layer-2 projected entries at native length (gradient to layer-2 projection).
    Var acoustic_native;
    /// Sum over layers of mean((D_i - sg(Q_i))^2); gradient to the encoder only.
    Var commitment;
    /// Unfrozen codebooks only: sum over assigned rows of |D_t - q_j|^2 / count_j,
    /// gradient to the raw entries only.
    std::optional<Var> codebook;
};

/// Straight-through bridge between encoder output `features` [T, d] and the decoder.
BridgeOutput vq_bridge(Graph& g, Var features, const ToyCodecModel& model, bool trainable);

}  // namespace llmcodec::nn
