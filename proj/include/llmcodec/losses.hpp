#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "llmcodec/autograd.hpp"
#include "llmcodec/signal.hpp"

namespace llmcodec::losses {

struct LossWeights {
    double time = 1.0;
    double freq = 1.0;
    double adv = 1.0;
    double feat = 1.0;
    double sem = 1.0;
    double cons = 1.0;
    double commit = 0.25;

    void validate() const;
    double operator[](std::string_view part) const;
};

/// Names of the generator loss parts, in summation order.
inline constexpr std::array<std::string_view, 7> kPartNames = {"time", "freq", "adv", "feat",
                                                               "sem",  "cons", "commit"};

/// Per-discriminator logit maps and intermediate feature maps.
struct DiscriminatorOutputs {
    std::vector<FeatureGrid> logits;
    std::vector<std::vector<FeatureGrid>> features;
};

struct DiscriminatorVars {
    std::vector<nn::Var> logits;
    std::vector<std::vector<nn::Var>> features;
};

// Plain evaluation.
double recon_time_l1(const AudioBuffer& x, const AudioBuffer& x_hat);
double recon_freq_l1(const AudioBuffer& x, const AudioBuffer& x_hat, const SpectrogramConfig& cfg);
double disc_hinge_loss(const DiscriminatorOutputs& real, const DiscriminatorOutputs& fake);
double gen_adv_loss(const DiscriminatorOutputs& fake);
double feature_match_loss(const std::vector<std::vector<FeatureGrid>>& real,
                          const std::vector<std::vector<FeatureGrid>>& fake);
double semantic_loss(const FeatureGrid& layer1_full, std::span<const double> target);
double consistency_loss(const FeatureGrid& layer2, const FeatureGrid& target);
double commitment_loss(const FeatureGrid& layer_input, const FeatureGrid& quantized);
double total_generator_loss(const LossWeights& weights, const std::map<std::string, double>& parts);

// Differentiable forms; every plain function above evaluates one of these.
nn::Var recon_time_l1(nn::Var x, nn::Var x_hat);
nn::Var recon_freq_l1(nn::Var x, nn::Var x_hat, const SpectrogramConfig& cfg);
nn::Var disc_hinge_loss(const DiscriminatorVars& real, const DiscriminatorVars& fake);
nn::Var gen_adv_loss(const DiscriminatorVars& fake);
nn::Var feature_match_loss(const std::vector<std::vector<nn::Var>>& real,
                           const std::vector<std::vector<nn::Var>>& fake);
nn::Var semantic_loss(nn::Var layer1_full, nn::Var target);
nn::Var consistency_loss(nn::Var layer2, nn::Var target);
/// Mean squared difference; `quantized` is a constant so only `layer_input` gets gradient.
nn::Var commitment_loss(nn::Var layer_input, const FeatureGrid& quantized);
nn::Var total_generator_loss(const LossWeights& weights, const std::map<std::string, nn::Var>& parts);

}  // namespace llmcodec::losses
