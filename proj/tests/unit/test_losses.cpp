#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "llmcodec/losses.hpp"
#include "test_util.hpp"

using namespace llmcodec;
using namespace llmcodec::losses;
using testutil::code_of;

namespace {

constexpr double kTol = 1e-12;

AudioBuffer audio(std::vector<double> s) {
    AudioBuffer a;
    a.sample_rate = 16000;
    a.samples = std::move(s);
    return a;
}

AudioBuffer noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    std::vector<double> s(n);
    for (double& v : s) v = u(rng);
    return audio(std::move(s));
}

// Magnitude spectrogram by direct DFT over unpadded, uncentred frames.
std::vector<std::vector<double>> dft_spectrogram(const std::vector<double>& x, std::size_t n_fft, std::size_t hop) {
    std::vector<double> frame_src = x;
    if (frame_src.size() < n_fft) frame_src.resize(n_fft, 0.0);
    const std::size_t frames = 1 + (frame_src.size() - n_fft) / hop;
    std::vector<std::vector<double>> out(frames, std::vector<double>(n_fft / 2 + 1));
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t k = 0; k <= n_fft / 2; ++k) {
            double re = 0.0, im = 0.0;
            for (std::size_t n = 0; n < n_fft; ++n) {
                const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / n_fft);
                const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * n) / n_fft;
                re += w * frame_src[f * hop + n] * std::cos(ang);
                im += w * frame_src[f * hop + n] * std::sin(ang);
            }
            out[f][k] = std::hypot(re, im);
        }
    return out;
}

DiscriminatorOutputs logits(std::vector<double> per_disc) {
    DiscriminatorOutputs o;
    for (double v : per_disc) o.logits.push_back(FeatureGrid::from_rows({{v}}));
    return o;
}

std::map<std::string, double> all_parts(double v) {
    std::map<std::string, double> m;
    for (auto n : kPartNames) m[std::string(n)] = v;
    return m;
}

}  // namespace

TEST(TimeL1, Examples) {
    const auto x = noise(100, 1);
    EXPECT_EQ(recon_time_l1(x, x), 0.0);
    EXPECT_NEAR(recon_time_l1(audio({0, 1}), audio({1, 1})), 0.5, kTol);
    auto neg = x;
    double m = 0.0;
    for (double& v : neg.samples) {
        m += std::abs(v);
        v = -v;
    }
    m /= static_cast<double>(x.size());
    EXPECT_NEAR(recon_time_l1(x, neg), 2.0 * m, kTol);
    EXPECT_EQ(code_of([] { recon_time_l1(audio({0, 1}), audio({0})); }), ErrorCode::LengthMismatch);
}

TEST(FreqL1, IdentityAndSilence) {
    SpectrogramConfig cfg;
    const auto x = noise(2000, 2);
    EXPECT_EQ(recon_freq_l1(x, x, cfg), 0.0);

    const auto spec = dft_spectrogram(x.samples, cfg.n_fft, cfg.hop);
    const auto edges = subband_edges(cfg.bins(), cfg.band_count);
    double expected = 0.0;
    for (std::size_t b = 0; b < cfg.band_count; ++b) {
        double s = 0.0;
        for (const auto& row : spec)
            for (std::size_t k = edges[b]; k < edges[b + 1]; ++k) s += row[k];
        expected += s / static_cast<double>(spec.size() * (edges[b + 1] - edges[b]));
    }
    expected /= static_cast<double>(cfg.band_count);
    EXPECT_NEAR(recon_freq_l1(x, audio(std::vector<double>(2000, 0.0)), cfg), expected, 1e-9);
    EXPECT_EQ(code_of([&] { recon_freq_l1(x, noise(10, 1), cfg); }), ErrorCode::LengthMismatch);
}

TEST(FreqL1, SingleBandIsPlainSpectrogramL1) {
    SpectrogramConfig cfg;
    cfg.band_count = 1;
    const auto x = noise(1500, 3), y = noise(1500, 4);
    const auto sx = dft_spectrogram(x.samples, cfg.n_fft, cfg.hop);
    const auto sy = dft_spectrogram(y.samples, cfg.n_fft, cfg.hop);
    double s = 0.0;
    for (std::size_t f = 0; f < sx.size(); ++f)
        for (std::size_t k = 0; k < sx[f].size(); ++k) s += std::abs(sx[f][k] - sy[f][k]);
    EXPECT_NEAR(recon_freq_l1(x, y, cfg), s / static_cast<double>(sx.size() * sx[0].size()), 1e-9);
}

TEST(DiscHinge, Examples) {
    EXPECT_NEAR(disc_hinge_loss(logits({1}), logits({-1})), 0.0, kTol);
    EXPECT_NEAR(disc_hinge_loss(logits({0}), logits({0})), 2.0, kTol);
    EXPECT_NEAR(disc_hinge_loss(logits({1, -1}), logits({-1, 1})), 2.0, kTol);
    // Multi-element logits reduce by mean before the hinge: mean 0.5 real, mean -3 fake.
    DiscriminatorOutputs real, fake;
    real.logits.push_back(FeatureGrid::from_rows({{-1, 2}}));
    fake.logits.push_back(FeatureGrid::from_rows({{-5, -1}}));
    EXPECT_NEAR(disc_hinge_loss(real, fake), 0.5, kTol);
    EXPECT_EQ(code_of([] { disc_hinge_loss(logits({1, 1}), logits({1})); }), ErrorCode::StructureMismatch);
}

TEST(GenAdv, Examples) {
    EXPECT_NEAR(gen_adv_loss(logits({1})), 0.0, kTol);
    EXPECT_NEAR(gen_adv_loss(logits({0})), 1.0, kTol);
    EXPECT_NEAR(gen_adv_loss(logits({-1})), 2.0, kTol);
    EXPECT_NEAR(gen_adv_loss(logits({3, -1})), 1.0, kTol);
}

TEST(FeatureMatch, Examples) {
    const std::vector<std::vector<FeatureGrid>> a{{FeatureGrid::from_rows({{1, 2}, {3, 4}})}};
    EXPECT_EQ(feature_match_loss(a, a), 0.0);
    const std::vector<std::vector<FeatureGrid>> b{{FeatureGrid::from_rows({{2, 1}, {4, 5}})}};
    EXPECT_NEAR(feature_match_loss(a, b), 1.0, kTol);
    const std::vector<std::vector<FeatureGrid>> r2{{FeatureGrid::from_rows({{0, 0}}), FeatureGrid::from_rows({{0}})}};
    const std::vector<std::vector<FeatureGrid>> f2{{FeatureGrid::from_rows({{0, 0}}), FeatureGrid::from_rows({{2}})}};
    EXPECT_NEAR(feature_match_loss(r2, f2), 1.0, kTol);
    EXPECT_EQ(code_of([&] { feature_match_loss(a, r2); }), ErrorCode::StructureMismatch);
}

TEST(Semantic, Examples) {
    const std::vector<double> g{0.5, -1.0};
    EXPECT_EQ(semantic_loss(FeatureGrid::from_rows({{0.5, -1.0}, {0.5, -1.0}}), g), 0.0);
    EXPECT_NEAR(semantic_loss(FeatureGrid::from_rows({{0, 2}, {2, 0}}), std::vector<double>{0, 0}), 1.0, kTol);
    EXPECT_NEAR(semantic_loss(FeatureGrid::from_rows({{2, -2}}), std::vector<double>{1, 1}), 2.0, kTol);
    EXPECT_EQ(code_of([] { semantic_loss(FeatureGrid::from_rows({{1}}), std::vector<double>{1, 1}); }),
              ErrorCode::DimensionMismatch);
}

TEST(Semantic, InvariantToFramePermutation) {
    std::mt19937_64 rng(9);
    const auto grid = testutil::random_grid(12, 5, rng);
    FeatureGrid rev(12, 5);
    for (std::size_t t = 0; t < 12; ++t)
        for (std::size_t j = 0; j < 5; ++j) rev.at(t, j) = grid.at(11 - t, j);
    const std::vector<double> g{0.1, 0.2, -0.3, 0.4, 0.0};
    EXPECT_NEAR(semantic_loss(grid, g), semantic_loss(rev, g), kTol);
}

TEST(Consistency, Examples) {
    const auto e = FeatureGrid::from_rows({{1, 2}, {3, 4}});
    EXPECT_EQ(consistency_loss(e, e), 0.0);
    EXPECT_EQ(consistency_loss(FeatureGrid::from_rows({{0}, {3}}), FeatureGrid::from_rows({{0}, {1}, {2}, {3}})), 0.0);
    const auto shifted = FeatureGrid::from_rows({{1.5, 2.5}, {3.5, 4.5}});
    EXPECT_NEAR(consistency_loss(shifted, e), 0.5, kTol);
    EXPECT_EQ(code_of([&] { consistency_loss(e, FeatureGrid::from_rows({{1}})); }), ErrorCode::DimensionMismatch);
}

TEST(Commitment, Examples) {
    const auto a = FeatureGrid::from_rows({{1, 2}, {3, 4}});
    EXPECT_EQ(commitment_loss(a, a), 0.0);
    const auto b = FeatureGrid::from_rows({{2, 1}, {4, 5}});
    EXPECT_NEAR(commitment_loss(a, b), 1.0, kTol);
    const auto c = FeatureGrid::from_rows({{2.5, 0.5}, {4.5, 5.5}});  // difference scaled by 1.5
    EXPECT_NEAR(commitment_loss(a, c), 1.5 * 1.5 * commitment_loss(a, FeatureGrid::from_rows({{2, 1}, {4, 5}})), kTol);
    EXPECT_EQ(code_of([&] { commitment_loss(a, FeatureGrid::from_rows({{1, 2}})); }), ErrorCode::ShapeMismatch);
}

TEST(Commitment, GradientOnlyReachesInput) {
    nn::Graph g;
    nn::Var x = g.variable(nn::Tensor({1, 2}, {1.0, 3.0}));
    auto loss = commitment_loss(x, FeatureGrid::from_rows({{0.0, 1.0}}));
    g.backward(loss);
    EXPECT_EQ(g.grad(x), (std::vector<double>{1.0, 2.0}));
}

TEST(Total, Examples) {
    const LossWeights w;
    EXPECT_EQ(total_generator_loss(w, all_parts(0.0)), 0.0);
    EXPECT_NEAR(total_generator_loss(w, all_parts(1.0)), 6.25, kTol);
    LossWeights zero{0, 0, 0, 0, 0, 0, 0};
    EXPECT_EQ(total_generator_loss(zero, all_parts(3.7)), 0.0);
    auto missing = all_parts(1.0);
    missing.erase("cons");
    try {
        total_generator_loss(w, missing);
        FAIL() << "expected MissingPart";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingPart);
        EXPECT_EQ(e.detail(), "cons");
    }
    LossWeights bad;
    bad.adv = -1.0;
    EXPECT_EQ(code_of([&] { total_generator_loss(bad, all_parts(1.0)); }), ErrorCode::InvalidArgument);
}

TEST(Losses, NonNegativeOnRandomInputs) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = noise(700, 100 + trial), y = noise(700, 200 + trial);
        EXPECT_GE(recon_time_l1(x, y), 0.0);
        EXPECT_GE(recon_freq_l1(x, y, SpectrogramConfig{}), 0.0);
        const auto a = testutil::random_grid(4, 3, rng), b = testutil::random_grid(4, 3, rng);
        EXPECT_GE(commitment_loss(a, b), 0.0);
        EXPECT_GE(consistency_loss(a, b), 0.0);
        EXPECT_GE(semantic_loss(a, std::vector<double>{0.1, 0.2, 0.3}), 0.0);
    }
}
