#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "llmcodec/train.hpp"
#include "test_util.hpp"

using namespace llmcodec;
using namespace llmcodec::nn;
using testutil::code_of;

namespace {

Codebook identity_book(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back("e" + std::to_string(i));
    Codebook b(labels, testutil::random_grid(n, d, rng), d, seed);
    Projection p{FeatureGrid(d, d), std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < d; ++i) p.weight.at(i, i) = 1.0;
    b.set_projection(p);
    return b;
}

CodecConfig tiny_config(std::vector<std::size_t> vq = {2, 1}) {
    CodecConfig cfg;
    cfg.latent_dim = 6;
    cfg.vq_strides = std::move(vq);
    cfg.codebook_ids.assign(cfg.vq_strides.size(), "subword");
    return cfg;
}

ToyCodecModel tiny_model(bool frozen = true, std::vector<std::size_t> vq = {2, 1}) {
    const CodecConfig cfg = tiny_config(vq);
    std::vector<Codebook> books;
    for (std::size_t i = 0; i < cfg.layer_count(); ++i) {
        std::mt19937_64 rng(40 + i);
        std::vector<std::string> labels;
        for (int n = 0; n < 16; ++n) labels.push_back("t" + std::to_string(n));
        books.emplace_back(labels, testutil::random_grid(16, 8, rng), cfg.latent_dim, 50 + i);
    }
    ModelOptions mo;
    mo.channels = 2;
    mo.max_channels = 8;
    mo.frozen_codebooks = frozen;
    return ToyCodecModel(cfg, books, mo);
}

TrainState tiny_state(bool frozen = true) {
    DiscriminatorOptions d;
    d.hidden = 4;
    d.bands = 4;
    return TrainState{tiny_model(frozen), SpectroDiscriminator(d), {}, {}, 0, 1, {}};
}

AudioBuffer tone(std::size_t n, double freq, double amp = 0.5) {
    AudioBuffer a;
    a.sample_rate = 16000;
    a.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / 16000.0);
    return a;
}

std::vector<const Guidance*> guidance_for(const std::vector<Guidance>& g) {
    std::vector<const Guidance*> out;
    for (const auto& x : g) out.push_back(&x);
    return out;
}

}  // namespace

TEST(Model, EncoderDecoderShapes) {
    const auto model = tiny_model();
    const auto one = model.encoder_forward(tone(480, 440));
    EXPECT_EQ(one.features.frames(), 1u);
    EXPECT_EQ(one.features.dim(), 6u);
    EXPECT_EQ(one.pad, 0u);
    EXPECT_EQ(model.decoder_forward(one.features).size(), 480u);

    const auto sec = model.encoder_forward(tone(16000, 440));
    EXPECT_EQ(sec.features.frames(), 34u);
    EXPECT_EQ(sec.pad, 320u);
    EXPECT_EQ(model.decoder_forward(sec.features, sec.pad).size(), 16000u);
    const auto q = model.quantize_audio(tone(16000, 440));
    EXPECT_EQ(q.frame_count, 33u);
    EXPECT_EQ(q.layers[0].size(), 16u);
    EXPECT_EQ(q.layers[1].size(), 33u);
    EXPECT_EQ(model.reconstruct(q).size(), 33u * 480u);

    for (std::size_t frames : {2u, 5u}) {
        const auto e = model.encoder_forward(tone(480 * frames, 300));
        EXPECT_EQ(model.decoder_forward(e.features).size(), 480u * frames);
    }
    EXPECT_EQ(code_of([&] { model.encoder_forward(AudioBuffer{}); }), ErrorCode::EmptyInput);
    EXPECT_EQ(code_of([&] { model.quantize_audio(tone(479, 440)); }), ErrorCode::EmptyInput);
    EXPECT_EQ(code_of([&] { model.decoder_forward(FeatureGrid(2, 5)); }), ErrorCode::DimensionMismatch);
}

TEST(Model, ZeroInputGivesZeroOutput) {
    const auto model = tiny_model();
    AudioBuffer silence;
    silence.sample_rate = 16000;
    silence.samples.assign(960, 0.0);
    const auto e = model.encoder_forward(silence);
    for (double v : e.features.data()) EXPECT_EQ(v, 0.0);
    for (double v : model.decoder_forward(FeatureGrid(3, 6)).samples) EXPECT_EQ(v, 0.0);
}

TEST(Model, ParameterLayout) {
    auto model = tiny_model();
    EXPECT_EQ(model.channels_at(0), 2u);
    EXPECT_EQ(model.channels_at(2), 8u);
    EXPECT_EQ(model.channels_at(4), 8u);
    EXPECT_EQ(model.params().at("enc.block0.down.weight").value.shape, (std::vector<std::size_t>{4, 2, 6}));
    EXPECT_EQ(model.params().at("enc.block3.down.weight").value.shape, (std::vector<std::size_t>{8, 8, 16}));
    EXPECT_EQ(model.params().at("dec.block0.up.weight").value.shape, (std::vector<std::size_t>{4, 2, 6}));
    EXPECT_EQ(model.params().at("vq.1.proj.weight").value.shape, (std::vector<std::size_t>{6, 8}));
    EXPECT_EQ(model.params().find("vq.0.entries"), nullptr);
    auto unfrozen = tiny_model(false);
    EXPECT_NE(unfrozen.params().find("vq.0.entries"), nullptr);
}

TEST(Bridge, StraightThroughCopiesGradientExactly) {
    const auto model = tiny_model();
    std::mt19937_64 rng(1);
    const auto e = testutil::random_grid(8, 6, rng);
    const auto w = testutil::random_grid(8, 6, rng);
    Graph g;
    Var features = g.variable(Tensor::from_grid(e));
    auto bridge = vq_bridge(g, features, model, true);
    const auto expected = llmcodec::encode(e, model.config(), model.books()).reconstruction();
    EXPECT_EQ(bridge.quantized.value().to_grid(), expected);
    g.backward(ops::sum(ops::mul(bridge.quantized, g.constant(Tensor::from_grid(w)))));
    EXPECT_EQ(g.grad(features), w.data());
}

TEST(Bridge, CommitmentMatchesPerLayerDefinition) {
    const auto model = tiny_model();
    std::mt19937_64 rng(2);
    const auto e = testutil::random_grid(8, 6, rng);
    Graph g;
    auto bridge = vq_bridge(g, g.variable(Tensor::from_grid(e)), model, true);
    double expected = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
        expected += losses::commitment_loss(bridge.encoded.layer_inputs[i], bridge.encoded.quantized[i]);
    EXPECT_NEAR(bridge.commitment.value().item(), expected, 1e-12);
    EXPECT_FALSE(bridge.codebook.has_value());
}

TEST(Bridge, FrozenCodebooksUnchangedByTraining) {
    auto state = tiny_state();
    std::vector<std::uint64_t> before;
    for (const auto& b : state.model.books()) before.push_back(b.entry_hash());
    const std::vector<AudioBuffer> batch{tone(960, 440), tone(960, 1000)};
    const std::vector<Guidance> gd{synthetic_guidance(6, 4, 1), synthetic_guidance(6, 4, 2)};
    for (int s = 0; s < 3; ++s) train_step(state, batch, guidance_for(gd), TrainOptions{});
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(state.model.books()[i].entry_hash(), before[i]);
    EXPECT_NE(state.model.params().at("vq.0.proj.weight").value.data,
              Tensor::from_grid(tiny_model().books()[0].projection().weight).data);
}

TEST(Bridge, UnfrozenEntryGradientIsMeanOfAssignedErrors) {
    const CodecConfig cfg = tiny_config({1});
    ModelOptions mo;
    mo.channels = 2;
    mo.max_channels = 4;
    mo.frozen_codebooks = false;
    const auto book = identity_book(4, 6, 3);
    ToyCodecModel model(cfg, {book}, mo);
    // Three frames: two near entry 1, one near entry 3.
    FeatureGrid e(3, 6);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 0.05);
    for (std::size_t j = 0; j < 6; ++j) {
        e.at(0, j) = book.entries().at(1, j) + n(rng);
        e.at(1, j) = book.entries().at(1, j) + n(rng);
        e.at(2, j) = book.entries().at(3, j) + n(rng);
    }
    auto codebook_term = [&](ToyCodecModel& m, bool backward) {
        Graph g;
        auto bridge = vq_bridge(g, g.constant(Tensor::from_grid(e)), m, true);
        EXPECT_TRUE(bridge.codebook.has_value());
        if (backward) {
            m.params().zero_grad();
            g.backward(*bridge.codebook);
        }
        return bridge.codebook->value().item();
    };
    codebook_term(model, true);
    const auto grad = model.params().at("vq.0.entries").grad.data;
    ASSERT_EQ(grad.size(), 24u);
    for (std::size_t j = 0; j < 6; ++j) {
        const double mean1 = (2.0 * (book.entries().at(1, j) - e.at(0, j)) + 2.0 * (book.entries().at(1, j) - e.at(1, j))) / 2.0;
        const double mean3 = 2.0 * (book.entries().at(3, j) - e.at(2, j));
        EXPECT_NEAR(grad[6 + j], mean1, 1e-12);
        EXPECT_NEAR(grad[18 + j], mean3, 1e-12);
        EXPECT_EQ(grad[j], 0.0);
        EXPECT_EQ(grad[12 + j], 0.0);
    }
    // Central differences on the raw entries.
    Parameter& entries = model.params().at("vq.0.entries");
    for (std::size_t k = 0; k < 24; ++k) {
        const double x0 = entries.value.data[k];
        const double h = 1e-5 * (1.0 + std::fabs(x0));
        entries.value.data[k] = x0 + h;
        model.sync_codebooks();
        const double fp = codebook_term(model, false);
        entries.value.data[k] = x0 - h;
        model.sync_codebooks();
        const double fm = codebook_term(model, false);
        entries.value.data[k] = x0;
        model.sync_codebooks();
        const double numeric = (fp - fm) / (2.0 * h);
        EXPECT_NEAR(grad[k], numeric, 1e-4 * std::max(1.0, std::fabs(numeric)));
    }
}

TEST(Discriminator, OutputsAndValidation) {
    DiscriminatorOptions d;
    d.hops = {32, 64, 128};
    d.hidden = 5;
    d.bands = 4;
    d.layers = 3;
    SpectroDiscriminator disc(d);
    const auto out = disc.evaluate(tone(2048, 700));
    ASSERT_EQ(out.logits.size(), 3u);
    ASSERT_EQ(out.features.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) {
        // Maps are channels x frames.
        EXPECT_EQ(out.logits[k].frames(), 1u);
        EXPECT_EQ(out.logits[k].dim(), stft_frame_count(2048, disc.spectro_config(k)));
        EXPECT_EQ(out.features[k].size(), 2u);
        EXPECT_EQ(out.features[k][0].frames(), 5u);
    }
    d.hops = {64, 32};
    EXPECT_EQ(code_of([&] { SpectroDiscriminator{d}; }), ErrorCode::InvalidArgument);
    d.hops = {};
    EXPECT_EQ(code_of([&] { SpectroDiscriminator{d}; }), ErrorCode::InvalidArgument);
}

TEST(Train, IdenticalStatesGiveBitIdenticalRecords) {
    auto a = tiny_state(), b = tiny_state();
    const std::vector<AudioBuffer> batch{tone(1440, 300), tone(1440, 2100, 0.3)};
    const std::vector<Guidance> gd{synthetic_guidance(6, 5, 1), synthetic_guidance(6, 5, 2)};
    for (int s = 0; s < 3; ++s) {
        const auto ra = train_step(a, batch, guidance_for(gd), TrainOptions{});
        const auto rb = train_step(b, batch, guidance_for(gd), TrainOptions{});
        EXPECT_EQ(ra.parts, rb.parts);
        EXPECT_EQ(ra.generator, rb.generator);
        EXPECT_EQ(ra.discriminator, rb.discriminator);
        EXPECT_EQ(ra.step, static_cast<std::uint64_t>(s + 1));
    }
    for (std::size_t i = 0; i < a.model.params().size(); ++i)
        EXPECT_EQ(a.model.params().items()[i].value, b.model.params().items()[i].value);
}

TEST(Train, ZeroWeightsOnlyDecay) {
    auto state = tiny_state();
    std::vector<Tensor> before;
    for (const auto& p : state.model.params().items()) before.push_back(p.value);
    std::vector<Tensor> disc_before;
    for (const auto& p : state.discriminator.params().items()) disc_before.push_back(p.value);
    TrainOptions opt;
    opt.weights = losses::LossWeights{0, 0, 0, 0, 0, 0, 0};
    const auto rec = train_step(state, {tone(960, 500)}, {}, opt);
    EXPECT_EQ(rec.generator, 0.0);
    const double f = opt.generator_adam.lr * opt.generator_adam.weight_decay;
    std::size_t i = 0;
    for (const auto& p : state.model.params().items()) {
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            double x = before[i].data[k];
            x -= f * x;
            EXPECT_EQ(p.value.data[k], x) << p.id;
        }
        ++i;
    }
    i = 0;
    for (const auto& p : state.discriminator.params().items()) EXPECT_EQ(p.value, disc_before[i++]);
}

TEST(Train, NonFiniteLossIsReported) {
    auto state = tiny_state();
    state.model.params().at("dec.out.bias").value.data[0] = std::numeric_limits<double>::quiet_NaN();
    const std::vector<Guidance> gd{synthetic_guidance(6, 2, 1)};
    EXPECT_EQ(code_of([&] { train_step(state, {tone(960, 500)}, guidance_for(gd), TrainOptions{}); }),
              ErrorCode::NonFiniteValue);
}

TEST(Train, BatchValidation) {
    auto state = tiny_state();
    EXPECT_EQ(code_of([&] { train_step(state, {}, {}, TrainOptions{}); }), ErrorCode::EmptyInput);
    EXPECT_EQ(code_of([&] { train_step(state, {tone(960, 500)}, {}, TrainOptions{}); }), ErrorCode::InvalidArgument);
    TrainOptions unguided;
    unguided.weights.sem = 0.0;
    unguided.weights.cons = 0.0;
    EXPECT_EQ(code_of([&] { train_step(state, {tone(100, 500)}, {}, unguided); }), ErrorCode::EmptyInput);
}

TEST(Checkpoint, RoundTripResumesIdentically) {
    testutil::TempDir dir("ckpt");
    auto a = tiny_state();
    const std::vector<AudioBuffer> batch{tone(960, 440)};
    const std::vector<Guidance> gd{synthetic_guidance(6, 2, 1)};
    train_step(a, batch, guidance_for(gd), TrainOptions{});
    save_checkpoint(a, dir / "a.ckpt");

    auto b = tiny_state();
    load_checkpoint(b, dir / "a.ckpt");
    EXPECT_EQ(b.step, 1u);
    EXPECT_EQ(b.seed, a.seed);
    for (std::size_t i = 0; i < a.model.params().size(); ++i)
        EXPECT_EQ(a.model.params().items()[i].value, b.model.params().items()[i].value);
    for (std::size_t i = 0; i < a.model.books().size(); ++i)
        EXPECT_EQ(a.model.books()[i].digest(), b.model.books()[i].digest());
    EXPECT_EQ(a.generator_moments.m, b.generator_moments.m);
    EXPECT_EQ(a.discriminator_moments.v, b.discriminator_moments.v);

    const auto ra = train_step(a, batch, guidance_for(gd), TrainOptions{});
    const auto rb = train_step(b, batch, guidance_for(gd), TrainOptions{});
    EXPECT_EQ(ra.parts, rb.parts);
    EXPECT_EQ(ra.discriminator, rb.discriminator);

    save_checkpoint(b, dir / "b.ckpt");
    auto c = tiny_state();
    load_checkpoint(c, dir / "b.ckpt");
    save_checkpoint(c, dir / "c.ckpt");
    EXPECT_EQ(testutil::read_bytes(dir / "b.ckpt"), testutil::read_bytes(dir / "c.ckpt"));
}

TEST(Checkpoint, MismatchedModelAndCorruptFiles) {
    testutil::TempDir dir("ckpt_bad");
    auto a = tiny_state();
    save_checkpoint(a, dir / "a.ckpt");
    TrainState other{tiny_model(true, {1}), SpectroDiscriminator(a.discriminator.options()), {}, {}, 0, 1, {}};
    EXPECT_EQ(code_of([&] { load_checkpoint(other, dir / "a.ckpt"); }), ErrorCode::DigestMismatch);
    std::ofstream(dir / "bad.ckpt") << "NOPE";
    EXPECT_EQ(code_of([&] { load_checkpoint(a, dir / "bad.ckpt"); }), ErrorCode::BadMagic);
    auto bytes = testutil::read_bytes(dir / "a.ckpt");
    std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    EXPECT_EQ(code_of([&] { load_checkpoint(a, dir / "trunc.ckpt"); }), ErrorCode::TruncatedFile);
    EXPECT_EQ(code_of([&] { load_checkpoint(a, dir / "missing.ckpt"); }), ErrorCode::NotFound);
}

TEST(Guidance, FilesRoundTrip) {
    testutil::TempDir dir("guid");
    const auto gd = synthetic_guidance(5, 7, 9);
    save_global_guidance(gd.global, dir / "g.json");
    save_guidance_grid(gd.frames, dir / "w.bin");
    EXPECT_EQ(load_global_guidance(dir / "g.json"), gd.global);
    FeatureGrid rounded = gd.frames;
    for (double& v : rounded.data()) v = static_cast<float>(v);
    EXPECT_EQ(load_guidance_grid(dir / "w.bin"), rounded);
    EXPECT_EQ(code_of([&] { load_guidance_grid(dir / "g.json"); }), ErrorCode::BadMagic);
}

TEST(Corpus, SeededMultiSine) {
    const auto a = synthetic_corpus(4, 1000, 16000, 3), b = synthetic_corpus(4, 1000, 16000, 3);
    ASSERT_EQ(a.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(a[i].samples, b[i].samples);
        double peak = 0.0;
        for (double v : a[i].samples) peak = std::max(peak, std::fabs(v));
        EXPECT_LT(peak, 0.9);
        EXPECT_GT(peak, 0.05);
    }
    EXPECT_NE(a[0].samples, a[1].samples);
    EXPECT_NE(synthetic_corpus(1, 1000, 16000, 4)[0].samples, a[0].samples);
}

TEST(Model, EndToEndGradientsMatchFiniteDifferences) {
    const auto model = tiny_model();
    std::mt19937_64 rng(6);
    const auto w = testutil::random_grid(1, 960, rng);
    const Tensor weights({960}, w.data());
    Tensor x({960});
    std::normal_distribution<double> n(0.0, 0.3);
    for (double& v : x.data) v = n(rng);
    const auto r = grad_check(
        [&](Graph& g, Var v) {
            Var y = model.decode(g, model.encode(g, v, false), false);
            return ops::sum(ops::mul(y, g.constant(weights)));
        },
        x);
    EXPECT_LT(r.max_rel_error, 1e-4);

    // Parameter gradients of a smooth loss, probed on a sample of coordinates.
    auto m = tiny_model();
    auto loss_value = [&](bool backward) {
        Graph g;
        Var y = m.decode(g, m.encode(g, g.constant(x), true), true);
        Var l = ops::sum(ops::mul(y, g.constant(weights)));
        if (backward) {
            m.params().zero_grad();
            g.backward(l);
        }
        return l.value().item();
    };
    loss_value(true);
    for (auto& p : m.params().items()) {
        if (p.id.rfind("vq.", 0) == 0) continue;
        for (std::size_t k = 0; k < p.value.size(); k += 1 + p.value.size() / 4) {
            const double x0 = p.value.data[k];
            const double h = 1e-5 * (1.0 + std::fabs(x0));
            p.value.data[k] = x0 + h;
            const double fp = loss_value(false);
            p.value.data[k] = x0 - h;
            const double fm = loss_value(false);
            p.value.data[k] = x0;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = p.grad.data[k];
            EXPECT_LT(std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), 1e-8}), 1e-4)
                << p.id << "[" << k << "]";
        }
    }
}
