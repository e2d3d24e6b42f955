#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "llmcodec/autograd.hpp"
#include "llmcodec/losses.hpp"
#include "llmcodec/model.hpp"

namespace llmcodec::nn {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// First and second moments keyed by parameter id.
struct AdamMoments {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

/// One AdamW update of every parameter in `params` from its accumulated
/// grad, with bias correction for step `t` (1-based). Decay is decoupled:
/// p <- p - lr * wd * p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(ParameterStore& params, AdamMoments& moments, std::uint64_t t, const AdamHyper& hyper);

/// Frame-level and global guidance targets for one clip.
struct Guidance {
    std::vector<double> global;  // g, latent dim
    FeatureGrid frames;          // w, any length, latent dim
};

std::vector<double> load_global_guidance(const std::filesystem::path& path);
void save_global_guidance(const std::vector<double>& g, const std::filesystem::path& path);
/// LCGW1 binary grid.
FeatureGrid load_guidance_grid(const std::filesystem::path& path);
void save_guidance_grid(const FeatureGrid& w, const std::filesystem::path& path);

struct LossRecord {
    std::uint64_t step = 0;
    std::map<std::string, double> parts;  // batch means of each generator part
    double generator = 0.0;
    double discriminator = 0.0;
    double codebook = 0.0;
};

struct TrainOptions {
    losses::LossWeights weights;
    SpectrogramConfig spectro;
    AdamHyper generator_adam;
    AdamHyper discriminator_adam;
};

struct TrainState {
    ToyCodecModel model;
    SpectroDiscriminator discriminator;
    AdamMoments generator_moments;
    AdamMoments discriminator_moments;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
    std::vector<LossRecord> history;
};

/// One discriminator update on the detached reconstruction followed by one
/// generator update; the discriminator update is skipped when neither the
/// adversarial nor the feature-matching weight is positive. Clips are cropped
/// to a multiple of total_downsample. Throws NonFiniteValue on a non-finite
/// loss.
LossRecord train_step(TrainState& state, const std::vector<AudioBuffer>& batch,
                      const std::vector<const Guidance*>& guidance, const TrainOptions& options);

/// Per-clip sum of three sinusoids with frequencies in [100, 4000] Hz and
/// amplitudes summing below 0.9.
std::vector<AudioBuffer> synthetic_corpus(std::size_t clips, std::size_t samples, int sample_rate,
                                          std::uint64_t seed);
/// Deterministic stand-in guidance targets for synthetic clips.
Guidance synthetic_guidance(std::size_t latent_dim, std::size_t frames, std::uint64_t seed);

// LCKP1 checkpoint: parameters of the model and discriminator, Adam moments,
// step and seed.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// Loads into an already-constructed state; every stored parameter must exist
/// with the same shape (DigestMismatch otherwise).
void load_checkpoint(TrainState& state, const std::filesystem::path& path);

}  // namespace llmcodec::nn
