#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "llmcodec/error.hpp"
#include "llmcodec/losses.hpp"
#include "llmcodec/model.hpp"
#include "llmcodec/quantizer.hpp"
#include "llmcodec/train.hpp"

namespace llmcodec::cli {

struct TrainSettings {
    std::size_t steps = 300;
    std::size_t batch_size = 4;
    std::uint64_t seed = 1;
    double lr = 1e-4;
    double disc_lr = 1e-4;
    std::size_t clips = 32;            // synthetic corpus size
    std::size_t clip_samples = 16000;  // synthetic clip length
    std::filesystem::path checkpoint = "llmcodec.ckpt";
    std::filesystem::path history = "loss_history.json";
};

/// Empty paths fall back to seeded synthetic assets.
struct AssetPaths {
    std::filesystem::path embeddings;     // LCEB1 vocabulary table
    std::filesystem::path words;          // word list
    std::filesystem::path tokenizer;      // word -> sub-word ids (JSON)
    std::filesystem::path word_codebook;  // LCEB1 written by build-codebook
    std::filesystem::path guidance_dir;   // <stem>.g.json and <stem>.w.bin per clip
    std::uint64_t synthetic_seed = 7;
};

struct RunConfig {
    CodecConfig codec;
    SpectrogramConfig spectro;
    losses::LossWeights weights;
    nn::ModelOptions model;
    nn::DiscriminatorOptions discriminator;
    TrainSettings train;
    AssetPaths assets;
};

/// Flat `key = value` text, one per line, '#' starts a comment. Relative paths
/// resolve against `base_dir`. Unknown keys are rejected.
RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
/// Every key with its current value, in file syntax.
std::string dump_run_config(const RunConfig& cfg);

/// One codebook per layer, drawn from the configured assets.
std::vector<Codebook> build_codebooks(const RunConfig& cfg);
nn::TrainState make_train_state(const RunConfig& cfg);

/// 0 ok, 2 asset, 3 digest, 4 numeric, 5 client, 1 anything else.
int exit_code_for(ErrorCode code);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace llmcodec::cli
