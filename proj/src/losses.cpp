#include "llmcodec/losses.hpp"

#include <cmath>

#include "llmcodec/error.hpp"

namespace llmcodec::losses {

using nn::Graph;
using nn::Tensor;
using nn::Var;
namespace ops = nn::ops;

void LossWeights::validate() const {
    for (auto name : kPartNames) {
        const double w = (*this)[name];
        if (!std::isfinite(w) || w < 0.0)
            throw Error(ErrorCode::InvalidArgument, "loss weight '" + std::string(name) + "' must be finite and >= 0");
    }
}

double LossWeights::operator[](std::string_view part) const {
    if (part == "time") return time;
    if (part == "freq") return freq;
    if (part == "adv") return adv;
    if (part == "feat") return feat;
    if (part == "sem") return sem;
    if (part == "cons") return cons;
    if (part == "commit") return commit;
    throw Error(ErrorCode::MissingPart, "unknown loss part '" + std::string(part) + "'", std::string(part));
}

namespace {

Var l1_mean(Var a, Var b) { return ops::mean(ops::abs(ops::sub(a, b))); }

void require_same_length(const Var& a, const Var& b) {
    if (a.shape() != b.shape()) throw Error(ErrorCode::LengthMismatch, "signals differ in length");
}

Var hinge_mean(Var logits, double sign) {
    // max(0, 1 + sign * mean(logits))
    return ops::relu(ops::add_scalar(ops::scale(ops::mean(logits), sign), 1.0));
}

void check_congruent(const DiscriminatorVars& real, const DiscriminatorVars& fake) {
    if (real.logits.size() != fake.logits.size() || real.logits.empty())
        throw Error(ErrorCode::StructureMismatch, "real and fake discriminator counts differ or are zero");
    for (std::size_t k = 0; k < real.logits.size(); ++k)
        if (real.logits[k].shape() != fake.logits[k].shape())
            throw Error(ErrorCode::StructureMismatch, "logit shapes differ for discriminator " + std::to_string(k));
}

DiscriminatorVars as_vars(Graph& g, const DiscriminatorOutputs& o) {
    DiscriminatorVars v;
    for (const auto& l : o.logits) v.logits.push_back(g.constant(Tensor::from_grid(l)));
    for (const auto& fs : o.features) {
        auto& dst = v.features.emplace_back();
        for (const auto& f : fs) dst.push_back(g.constant(Tensor::from_grid(f)));
    }
    return v;
}

std::vector<std::vector<Var>> as_vars(Graph& g, const std::vector<std::vector<FeatureGrid>>& feats) {
    std::vector<std::vector<Var>> out;
    for (const auto& fs : feats) {
        auto& dst = out.emplace_back();
        for (const auto& f : fs) dst.push_back(g.constant(Tensor::from_grid(f)));
    }
    return out;
}

Var audio_var(Graph& g, const AudioBuffer& a) { return g.constant(Tensor::from_samples(a.samples)); }

}  // namespace

// ---------------------------------------------------------------------------

Var recon_time_l1(Var x, Var x_hat) {
    require_same_length(x, x_hat);
    if (x.size() == 0) throw Error(ErrorCode::LengthMismatch, "empty signals");
    return l1_mean(x, x_hat);
}

Var recon_freq_l1(Var x, Var x_hat, const SpectrogramConfig& cfg) {
    require_same_length(x, x_hat);
    const Var sx = ops::stft_magnitude(x, cfg);
    const Var sy = ops::stft_magnitude(x_hat, cfg);
    const auto edges = subband_edges(cfg.bins(), cfg.band_count);
    std::vector<Var> bands;
    for (std::size_t b = 0; b < cfg.band_count; ++b)
        bands.push_back(l1_mean(ops::slice_cols(sx, edges[b], edges[b + 1]), ops::slice_cols(sy, edges[b], edges[b + 1])));
    return ops::weighted_sum(bands, std::vector<double>(bands.size(), 1.0 / static_cast<double>(bands.size())));
}

Var disc_hinge_loss(const DiscriminatorVars& real, const DiscriminatorVars& fake) {
    check_congruent(real, fake);
    std::vector<Var> terms;
    for (std::size_t k = 0; k < real.logits.size(); ++k) {
        terms.push_back(hinge_mean(real.logits[k], -1.0));
        terms.push_back(hinge_mean(fake.logits[k], +1.0));
    }
    return ops::weighted_sum(terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(real.logits.size())));
}

Var gen_adv_loss(const DiscriminatorVars& fake) {
    if (fake.logits.empty()) throw Error(ErrorCode::StructureMismatch, "no discriminator outputs");
    std::vector<Var> terms;
    for (const auto& l : fake.logits) terms.push_back(hinge_mean(l, -1.0));
    return ops::weighted_sum(terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
}

Var feature_match_loss(const std::vector<std::vector<Var>>& real, const std::vector<std::vector<Var>>& fake) {
    if (real.size() != fake.size() || real.empty())
        throw Error(ErrorCode::StructureMismatch, "feature nesting differs between real and fake");
    std::vector<Var> terms;
    for (std::size_t k = 0; k < real.size(); ++k) {
        if (real[k].size() != fake[k].size())
            throw Error(ErrorCode::StructureMismatch, "layer count differs for discriminator " + std::to_string(k));
        for (std::size_t l = 0; l < real[k].size(); ++l) {
            if (real[k][l].shape() != fake[k][l].shape())
                throw Error(ErrorCode::StructureMismatch, "feature shape differs");
            terms.push_back(l1_mean(real[k][l], fake[k][l]));
        }
    }
    if (terms.empty()) throw Error(ErrorCode::StructureMismatch, "no feature layers");
    return ops::weighted_sum(terms, std::vector<double>(terms.size(), 1.0 / static_cast<double>(terms.size())));
}

Var semantic_loss(Var layer1_full, Var target) {
    if (layer1_full.value().rank() != 2 || layer1_full.shape()[0] == 0 || target.value().rank() != 1 ||
        layer1_full.shape()[1] != target.size())
        throw Error(ErrorCode::DimensionMismatch, "semantic target dim must equal the latent dim");
    return l1_mean(ops::mean_rows(layer1_full), target);
}

Var consistency_loss(Var layer2, Var target) {
    if (layer2.value().rank() != 2 || target.value().rank() != 2 || layer2.shape()[1] != target.shape()[1])
        throw Error(ErrorCode::DimensionMismatch, "consistency target dim must equal the latent dim");
    return l1_mean(layer2, ops::resample_rows(target, layer2.shape()[0]));
}

Var commitment_loss(Var layer_input, const FeatureGrid& quantized) {
    if (layer_input.value().rank() != 2 || layer_input.shape()[0] != quantized.frames() ||
        layer_input.shape()[1] != quantized.dim())
        throw Error(ErrorCode::ShapeMismatch, "commitment inputs differ in shape");
    Var q = layer_input.graph->constant(Tensor::from_grid(quantized));
    return ops::mean(ops::square(ops::sub(layer_input, q)));
}

Var total_generator_loss(const LossWeights& weights, const std::map<std::string, Var>& parts) {
    weights.validate();
    std::vector<Var> terms;
    std::vector<double> w;
    for (auto name : kPartNames) {
        auto it = parts.find(std::string(name));
        if (it == parts.end())
            throw Error(ErrorCode::MissingPart, "missing loss part '" + std::string(name) + "'", std::string(name));
        if (!std::isfinite(it->second.value().item()))
            throw Error(ErrorCode::NonFiniteValue, "loss part '" + std::string(name) + "' is not finite");
        terms.push_back(it->second);
        w.push_back(weights[name]);
    }
    return ops::weighted_sum(terms, w);
}

// ---------------------------------------------------------------------------

double recon_time_l1(const AudioBuffer& x, const AudioBuffer& x_hat) {
    Graph g;
    return recon_time_l1(audio_var(g, x), audio_var(g, x_hat)).value().item();
}

double recon_freq_l1(const AudioBuffer& x, const AudioBuffer& x_hat, const SpectrogramConfig& cfg) {
    Graph g;
    return recon_freq_l1(audio_var(g, x), audio_var(g, x_hat), cfg).value().item();
}

double disc_hinge_loss(const DiscriminatorOutputs& real, const DiscriminatorOutputs& fake) {
    Graph g;
    return disc_hinge_loss(as_vars(g, real), as_vars(g, fake)).value().item();
}

double gen_adv_loss(const DiscriminatorOutputs& fake) {
    Graph g;
    return gen_adv_loss(as_vars(g, fake)).value().item();
}

double feature_match_loss(const std::vector<std::vector<FeatureGrid>>& real,
                          const std::vector<std::vector<FeatureGrid>>& fake) {
    Graph g;
    return feature_match_loss(as_vars(g, real), as_vars(g, fake)).value().item();
}

double semantic_loss(const FeatureGrid& layer1_full, std::span<const double> target) {
    Graph g;
    return semantic_loss(g.constant(Tensor::from_grid(layer1_full)), g.constant(Tensor::from_samples(target)))
        .value()
        .item();
}

double consistency_loss(const FeatureGrid& layer2, const FeatureGrid& target) {
    Graph g;
    return consistency_loss(g.constant(Tensor::from_grid(layer2)), g.constant(Tensor::from_grid(target)))
        .value()
        .item();
}

double commitment_loss(const FeatureGrid& layer_input, const FeatureGrid& quantized) {
    Graph g;
    return commitment_loss(g.constant(Tensor::from_grid(layer_input)), quantized).value().item();
}

double total_generator_loss(const LossWeights& weights, const std::map<std::string, double>& parts) {
    Graph g;
    std::map<std::string, Var> vars;
    for (const auto& [k, v] : parts) vars.emplace(k, g.constant(Tensor::scalar(v)));
    return total_generator_loss(weights, vars).value().item();
}

}  // namespace llmcodec::losses
