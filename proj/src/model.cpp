#include "llmcodec/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "llmcodec/error.hpp"

namespace llmcodec::nn {

namespace {

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias.
Tensor uniform_init(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (double& v : t.data) v = uni(rng);
    return t;
}

void add_conv(ParameterStore& store, const std::string& prefix, std::size_t cout, std::size_t cin, std::size_t k,
              std::mt19937_64& rng) {
    store.add(prefix + ".weight", uniform_init({cout, cin, k}, cin * k, rng));
    store.add(prefix + ".bias", Tensor({cout}));
}

void add_conv_transpose(ParameterStore& store, const std::string& prefix, std::size_t cin, std::size_t cout,
                        std::size_t k, std::mt19937_64& rng) {
    store.add(prefix + ".weight", uniform_init({cin, cout, k}, cout * k, rng));
    store.add(prefix + ".bias", Tensor({cout}));
}

}  // namespace

ToyCodecModel::ToyCodecModel(CodecConfig config, std::vector<Codebook> books, ModelOptions options)
    : config_(std::move(config)), books_(std::move(books)), options_(options) {
    config_.validate();
    if (books_.size() != config_.layer_count())
        throw Error(ErrorCode::ConfigMismatch, "need one codebook per vq layer");
    if (options_.channels == 0) throw Error(ErrorCode::InvalidArgument, "channels must be positive");

    std::mt19937_64 rng(options_.seed);
    const std::size_t blocks = config_.encoder_strides.size();
    const std::size_t d = config_.latent_dim;
    add_conv(params_, "enc.in", channels_at(0), 1, 7, rng);
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::string p = "enc.block" + std::to_string(b);
        const std::size_t c = channels_at(b), s = config_.encoder_strides[b];
        add_conv(params_, p + ".res.conv1", c, c, 3, rng);
        add_conv(params_, p + ".res.conv2", c, c, 3, rng);
        add_conv(params_, p + ".down", channels_at(b + 1), c, 2 * s, rng);
    }
    add_conv(params_, "enc.out", d, channels_at(blocks), 7, rng);

    add_conv(params_, "dec.in", channels_at(blocks), d, 7, rng);
    for (std::size_t b = blocks; b-- > 0;) {
        const std::string p = "dec.block" + std::to_string(b);
        const std::size_t c = channels_at(b), s = config_.encoder_strides[b];
        add_conv_transpose(params_, p + ".up", channels_at(b + 1), c, 2 * s, rng);
        add_conv(params_, p + ".res.conv1", c, c, 3, rng);
        add_conv(params_, p + ".res.conv2", c, c, 3, rng);
    }
    add_conv(params_, "dec.out", 1, channels_at(0), 7, rng);

    for (std::size_t i = 0; i < books_.size(); ++i) {
        auto& book = books_[i];
        if (book.projected_dim() != d)
            throw Error(ErrorCode::ConfigMismatch, "codebook " + std::to_string(i) + " projects to the wrong dim");
        book.set_frozen(options_.frozen_codebooks);
        const std::string p = "vq." + std::to_string(i);
        params_.add(p + ".proj.weight", Tensor::from_grid(book.projection().weight));
        params_.add(p + ".proj.bias", Tensor({d}, book.projection().bias));
        if (!options_.frozen_codebooks) params_.add(p + ".entries", Tensor::from_grid(book.entries()));
    }
}

std::size_t ToyCodecModel::channels_at(std::size_t block) const {
    std::size_t c = options_.channels;
    for (std::size_t i = 0; i < block; ++i) c = std::min(c * 2, std::max(options_.max_channels, options_.channels));
    return c;
}

Var ToyCodecModel::param(Graph& g, std::string_view id, bool trainable) const {
    Parameter& p = params_.at(id);
    return trainable ? g.parameter(p) : g.constant(p.value);
}

Var ToyCodecModel::residual_unit(Graph& g, Var x, const std::string& prefix, bool trainable) const {
    Var h = ops::conv1d(ops::tanh(x), param(g, prefix + ".conv1.weight", trainable),
                        param(g, prefix + ".conv1.bias", trainable), 1, 1, 1);
    h = ops::conv1d(ops::tanh(h), param(g, prefix + ".conv2.weight", trainable),
                    param(g, prefix + ".conv2.bias", trainable), 1, 1, 1);
    return ops::add(x, h);
}

Var ToyCodecModel::encode(Graph& g, Var audio, bool trainable) const {
    const std::size_t total = config_.total_downsample();
    if (audio.value().rank() != 1 || audio.size() == 0 || audio.size() % total != 0)
        throw Error(ErrorCode::InvalidLength, "encoder input must be a positive multiple of " + std::to_string(total));
    Var x = ops::reshape(audio, {1, audio.size()});
    x = ops::conv1d(x, param(g, "enc.in.weight", trainable), param(g, "enc.in.bias", trainable), 1, 3, 3);
    for (std::size_t b = 0; b < config_.encoder_strides.size(); ++b) {
        const std::string p = "enc.block" + std::to_string(b);
        const std::size_t s = config_.encoder_strides[b];
        x = residual_unit(g, x, p + ".res", trainable);
        // Kernel 2s with s total padding keeps length exactly L / s.
        x = ops::conv1d(ops::tanh(x), param(g, p + ".down.weight", trainable), param(g, p + ".down.bias", trainable),
                        s, (s + 1) / 2, s / 2);
    }
    x = ops::conv1d(ops::tanh(x), param(g, "enc.out.weight", trainable), param(g, "enc.out.bias", trainable), 1, 3, 3);
    return ops::transpose(x);
}

Var ToyCodecModel::decode(Graph& g, Var grid, bool trainable) const {
    if (grid.value().rank() != 2 || grid.shape()[1] != config_.latent_dim || grid.shape()[0] == 0)
        throw Error(ErrorCode::DimensionMismatch, "decoder input must be [T, " + std::to_string(config_.latent_dim) + "]");
    Var x = ops::transpose(grid);
    x = ops::conv1d(x, param(g, "dec.in.weight", trainable), param(g, "dec.in.bias", trainable), 1, 3, 3);
    for (std::size_t b = config_.encoder_strides.size(); b-- > 0;) {
        const std::string p = "dec.block" + std::to_string(b);
        const std::size_t s = config_.encoder_strides[b];
        const std::size_t len = x.shape()[1];
        x = ops::conv_transpose1d(ops::tanh(x), param(g, p + ".up.weight", trainable),
                                  param(g, p + ".up.bias", trainable), s, s / 2, len * s);
        x = residual_unit(g, x, p + ".res", trainable);
    }
    x = ops::conv1d(ops::tanh(x), param(g, "dec.out.weight", trainable), param(g, "dec.out.bias", trainable), 1, 3, 3);
    return ops::reshape(x, {x.size()});
}

BookBinding ToyCodecModel::bind_book(Graph& g, std::size_t layer, bool trainable) const {
    const std::string p = "vq." + std::to_string(layer);
    BookBinding b;
    if (options_.frozen_codebooks) b.entries = g.constant(Tensor::from_grid(books_.at(layer).entries()));
    else b.entries = param(g, p + ".entries", trainable);
    b.weight = param(g, p + ".proj.weight", trainable);
    b.bias = param(g, p + ".proj.bias", trainable);
    return b;
}

void ToyCodecModel::sync_codebooks() {
    for (std::size_t i = 0; i < books_.size(); ++i) {
        const std::string p = "vq." + std::to_string(i);
        auto& book = books_[i];
        if (!options_.frozen_codebooks) {
            const auto& e = params_.at(p + ".entries").value;
            book.mutable_entries().data() = e.data;
        }
        Projection proj{params_.at(p + ".proj.weight").value.to_grid(), params_.at(p + ".proj.bias").value.data};
        book.set_projection(std::move(proj));
    }
}

EncoderOutput ToyCodecModel::encoder_forward(const AudioBuffer& audio) const {
    if (audio.samples.empty()) throw Error(ErrorCode::EmptyInput, "cannot encode empty audio");
    const std::size_t total = config_.total_downsample();
    const std::size_t padded = (audio.size() + total - 1) / total * total;
    std::vector<double> x = audio.samples;
    x.resize(padded, 0.0);
    Graph g;
    Var e = encode(g, g.constant(Tensor::from_samples(x)), false);
    return {e.value().to_grid(), padded - audio.size()};
}

AudioBuffer ToyCodecModel::decoder_forward(const FeatureGrid& grid, std::size_t pad) const {
    Graph g;
    Var y = decode(g, g.constant(Tensor::from_grid(grid)), false);
    AudioBuffer out;
    out.sample_rate = config_.sample_rate;
    out.samples = y.value().data;
    if (pad < out.samples.size()) out.samples.resize(out.samples.size() - pad);
    return out;
}

QuantizedAudio ToyCodecModel::quantize_audio(const AudioBuffer& audio) const {
    if (audio.sample_rate != config_.sample_rate)
        throw Error(ErrorCode::ConfigMismatch, "audio is " + std::to_string(audio.sample_rate) + " Hz, codec expects " +
                                                   std::to_string(config_.sample_rate) + " Hz");
    const std::size_t frames = audio.size() / config_.total_downsample();
    if (frames == 0)
        throw Error(ErrorCode::EmptyInput, "audio shorter than one frame (" +
                                               std::to_string(config_.total_downsample()) + " samples)");
    auto enc = encoder_forward(audio);
    FeatureGrid features(frames, config_.latent_dim,
                         std::vector<double>(enc.features.data().begin(),
                                             enc.features.data().begin() +
                                                 static_cast<std::ptrdiff_t>(frames * config_.latent_dim)));
    return llmcodec::encode(features, config_, books_).tokens;
}

AudioBuffer ToyCodecModel::reconstruct(const QuantizedAudio& q) const {
    return decoder_forward(llmcodec::decode(q, config_, books_));
}

// ---------------------------------------------------------------------------

SpectroDiscriminator::SpectroDiscriminator(DiscriminatorOptions options) : options_(std::move(options)) {
    if (options_.hops.empty()) throw Error(ErrorCode::InvalidArgument, "need at least one discriminator");
    for (std::size_t k = 1; k < options_.hops.size(); ++k)
        if (options_.hops[k] <= options_.hops[k - 1])
            throw Error(ErrorCode::InvalidArgument, "discriminator hops must be strictly increasing");
    if (options_.layers < 2) throw Error(ErrorCode::InvalidArgument, "discriminator needs at least two layers");
    std::mt19937_64 rng(options_.seed);
    for (std::size_t k = 0; k < count(); ++k) {
        spectro_config(k).validate();
        const std::string p = "disc" + std::to_string(k);
        std::size_t cin = 2 * options_.bands;
        for (std::size_t l = 0; l + 1 < options_.layers; ++l) {
            add_conv(params_, p + ".conv" + std::to_string(l), options_.hidden, cin, 3, rng);
            cin = options_.hidden;
        }
        add_conv(params_, p + ".logits", 1, cin, 3, rng);
    }
}

SpectrogramConfig SpectroDiscriminator::spectro_config(std::size_t k) const {
    SpectrogramConfig cfg;
    cfg.hop = options_.hops.at(k);
    cfg.n_fft = 4 * cfg.hop;
    cfg.window = Window::Hann;
    cfg.band_count = options_.bands;
    return cfg;
}

losses::DiscriminatorVars SpectroDiscriminator::forward(Graph& g, Var audio, bool trainable) const {
    auto param = [&](const std::string& id) {
        Parameter& p = params_.at(id);
        return trainable ? g.parameter(p) : g.constant(p.value);
    };
    losses::DiscriminatorVars out;
    for (std::size_t k = 0; k < count(); ++k) {
        const auto cfg = spectro_config(k);
        const std::string p = "disc" + std::to_string(k);
        Var pooled = ops::band_mean(ops::stft_magnitude(audio, cfg), options_.bands);
        Var x = ops::concat_rows({ops::transpose(pooled), ops::transpose(ops::log_eps(pooled, 1e-5))});
        auto& feats = out.features.emplace_back();
        for (std::size_t l = 0; l + 1 < options_.layers; ++l) {
            const std::string c = p + ".conv" + std::to_string(l);
            x = ops::tanh(ops::conv1d(x, param(c + ".weight"), param(c + ".bias"), 1, 1, 1));
            feats.push_back(x);
        }
        out.logits.push_back(ops::conv1d(x, param(p + ".logits.weight"), param(p + ".logits.bias"), 1, 1, 1));
    }
    return out;
}

losses::DiscriminatorOutputs SpectroDiscriminator::evaluate(const AudioBuffer& audio) const {
    Graph g;
    auto vars = forward(g, g.constant(Tensor::from_samples(audio.samples)), false);
    losses::DiscriminatorOutputs out;
    for (auto l : vars.logits) out.logits.push_back(l.value().to_grid());
    for (const auto& fs : vars.features) {
        auto& dst = out.features.emplace_back();
        for (auto f : fs) dst.push_back(f.value().to_grid());
    }
    return out;
}

// ---------------------------------------------------------------------------

BridgeOutput vq_bridge(Graph& g, Var features, const ToyCodecModel& model, bool trainable) {
    const auto& cfg = model.config();
    const auto& books = model.books();
    BridgeOutput out{encode(features.value().to_grid(), cfg, books), {}, {}, {}, {}, std::nullopt};
    const auto& enc = out.encoded;
    const std::size_t frames = features.shape()[0];

    out.quantized = ops::straight_through(features, Tensor::from_grid(enc.reconstruction()));

    // Residual chain rebuilt on the graph so commitment gradients reach the
    // encoder; the subtracted contributions are constants.
    std::vector<Var> commit_terms;
    std::vector<Var> codebook_terms;
    Var residual = features;
    for (std::size_t i = 0; i < cfg.layer_count(); ++i) {
        const std::size_t len = enc.layer_inputs[i].frames();
        Var down = ops::resample_rows(residual, len);
        commit_terms.push_back(losses::commitment_loss(down, enc.quantized[i]));
        residual = ops::sub(residual, g.constant(Tensor::from_grid(enc.contributions[i])));

        const auto& idx = enc.tokens.layers[i];
        if (!model.options().frozen_codebooks) {
            BookBinding b = model.bind_book(g, i, trainable);
            Var q = ops::project_rows(ops::gather_rows(b.entries, idx), ops::detach(b.weight), ops::detach(b.bias));
            std::vector<double> counts(books[i].size(), 0.0);
            for (auto j : idx) counts[static_cast<std::size_t>(j)] += 1.0;
            Tensor row_weight({len, cfg.latent_dim});
            for (std::size_t t = 0; t < len; ++t)
                std::fill_n(row_weight.data.begin() + static_cast<std::ptrdiff_t>(t * cfg.latent_dim), cfg.latent_dim,
                            1.0 / counts[static_cast<std::size_t>(idx[t])]);
            Var err = ops::square(ops::sub(q, g.constant(Tensor::from_grid(enc.layer_inputs[i]))));
            codebook_terms.push_back(ops::sum(ops::mul(err, g.constant(std::move(row_weight)))));
        }
    }
    out.commitment = ops::weighted_sum(commit_terms, std::vector<double>(commit_terms.size(), 1.0));
    if (!codebook_terms.empty())
        out.codebook = ops::weighted_sum(codebook_terms, std::vector<double>(codebook_terms.size(), 1.0));

    auto projected_layer = [&](std::size_t i) {
        BookBinding b = model.bind_book(g, i, trainable);
        return ops::project_rows(ops::gather_rows(ops::detach(b.entries), enc.tokens.layers[i]), b.weight, b.bias);
    };
    out.semantic_full = ops::resample_rows(projected_layer(0), frames);
    out.acoustic_native = cfg.layer_count() > 1 ? projected_layer(1) : projected_layer(0);
    return out;
}

}  // namespace llmcodec::nn
