#include "llmcodec/train.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "llmcodec/binary_io.hpp"
#include "llmcodec/error.hpp"

namespace llmcodec::nn {

void adam_step(ParameterStore& params, AdamMoments& moments, std::uint64_t t, const AdamHyper& hyper) {
    if (t == 0) throw Error(ErrorCode::InvalidArgument, "adam step index is 1-based");
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
    for (auto& p : params.items()) {
        if (p.grad.shape != p.value.shape)
            throw Error(ErrorCode::ShapeMismatch, "gradient shape differs from parameter " + p.id);
        auto& m = moments.m.try_emplace(p.id, Tensor(p.value.shape)).first->second;
        auto& v = moments.v.try_emplace(p.id, Tensor(p.value.shape)).first->second;
        if (m.shape != p.value.shape || v.shape != p.value.shape)
            throw Error(ErrorCode::ShapeMismatch, "adam moments do not match parameter " + p.id);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.data[i];
            double& x = p.value.data[i];
            x -= hyper.lr * hyper.weight_decay * x;
            m.data[i] = hyper.beta1 * m.data[i] + (1.0 - hyper.beta1) * g;
            v.data[i] = hyper.beta2 * v.data[i] + (1.0 - hyper.beta2) * g * g;
            const double m_hat = m.data[i] / bc1;
            const double v_hat = v.data[i] / bc2;
            x -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Guidance files

namespace {
constexpr std::string_view kGuidanceMagic = "LCGW1";
constexpr std::string_view kCheckpointMagic = "LCKP1";
}  // namespace

std::vector<double> load_global_guidance(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string(), path.string());
    try {
        nlohmann::json j;
        in >> j;
        return j.at("g").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("guidance file: ") + e.what());
    }
}

void save_global_guidance(const std::vector<double>& g, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string(), path.string());
    out << nlohmann::json{{"g", g}}.dump() << '\n';
}

FeatureGrid load_guidance_grid(const std::filesystem::path& path) {
    bin::Reader r(bin::read_file(path.string()));
    if (r.remaining() < kGuidanceMagic.size() || r.str(kGuidanceMagic.size()) != kGuidanceMagic)
        throw Error(ErrorCode::BadMagic, "not an LCGW1 file: " + path.string());
    const auto frames = r.get<std::uint32_t>();
    const auto dim = r.get<std::uint32_t>();
    r.need(static_cast<std::size_t>(frames) * dim * sizeof(float));
    std::vector<double> data(static_cast<std::size_t>(frames) * dim);
    for (double& v : data) v = static_cast<double>(r.get<float>());
    if (!r.at_end()) throw Error(ErrorCode::DimensionMismatch, "trailing bytes in guidance grid");
    return FeatureGrid(frames, dim, std::move(data));
}

void save_guidance_grid(const FeatureGrid& w, const std::filesystem::path& path) {
    bin::Writer out;
    out.str(kGuidanceMagic);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(w.frames()));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(w.dim()));
    for (double v : w.data()) out.put(static_cast<float>(v));
    bin::write_file(path.string(), out.buffer());
}

// ---------------------------------------------------------------------------

namespace {

struct ClipForward {
    Var audio;
    Var reconstruction;
    BridgeOutput bridge;
};

AudioBuffer crop_to_frames(const AudioBuffer& a, std::size_t total) {
    AudioBuffer out = a;
    out.samples.resize(a.size() / total * total);
    if (out.samples.empty())
        throw Error(ErrorCode::EmptyInput, "training clip shorter than " + std::to_string(total) + " samples");
    return out;
}

}  // namespace

LossRecord train_step(TrainState& state, const std::vector<AudioBuffer>& batch,
                      const std::vector<const Guidance*>& guidance, const TrainOptions& options) {
    if (batch.empty()) throw Error(ErrorCode::EmptyInput, "empty training batch");
    const auto& w = options.weights;
    w.validate();
    const bool need_guidance = w.sem > 0.0 || w.cons > 0.0;
    if (need_guidance && guidance.size() != batch.size())
        throw Error(ErrorCode::InvalidArgument, "semantic/consistency weights need guidance for every clip");
    auto& model = state.model;
    const std::size_t total = model.config().total_downsample();
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const std::uint64_t t = state.step + 1;

    Graph g;
    std::vector<ClipForward> clips;
    clips.reserve(batch.size());
    for (const auto& clip : batch) {
        const AudioBuffer x = crop_to_frames(clip, total);
        Var audio = g.constant(Tensor::from_samples(x.samples));
        Var features = model.encode(g, audio, true);
        BridgeOutput bridge = vq_bridge(g, features, model, true);
        Var recon = model.decode(g, bridge.quantized, true);
        clips.push_back({audio, recon, std::move(bridge)});
    }

    LossRecord rec;
    rec.step = t;
    const bool use_disc = w.adv > 0.0 || w.feat > 0.0;
    if (use_disc) {
        Graph gd;
        state.discriminator.params().zero_grad();
        std::vector<Var> terms;
        for (const auto& c : clips) {
            auto real = state.discriminator.forward(gd, gd.constant(c.audio.value()), true);
            auto fake = state.discriminator.forward(gd, gd.constant(c.reconstruction.value()), true);
            terms.push_back(losses::disc_hinge_loss(real, fake));
        }
        Var loss = ops::weighted_sum(terms, std::vector<double>(terms.size(), inv_batch));
        rec.discriminator = loss.value().item();
        if (!std::isfinite(rec.discriminator))
            throw Error(ErrorCode::NonFiniteValue, "discriminator loss is not finite at step " + std::to_string(t));
        gd.backward(loss);
        adam_step(state.discriminator.params(), state.discriminator_moments, t, options.discriminator_adam);
    }

    std::vector<Var> totals;
    for (auto name : losses::kPartNames) rec.parts[std::string(name)] = 0.0;
    for (std::size_t b = 0; b < clips.size(); ++b) {
        const auto& c = clips[b];
        std::map<std::string, Var> parts;
        parts["time"] = losses::recon_time_l1(c.audio, c.reconstruction);
        parts["freq"] = losses::recon_freq_l1(c.audio, c.reconstruction, options.spectro);
        if (use_disc) {
            auto fake = state.discriminator.forward(g, c.reconstruction, false);
            auto real = state.discriminator.forward(g, c.audio, false);
            parts["adv"] = losses::gen_adv_loss(fake);
            parts["feat"] = losses::feature_match_loss(real.features, fake.features);
        } else {
            parts["adv"] = g.constant(Tensor::scalar(0.0));
            parts["feat"] = g.constant(Tensor::scalar(0.0));
        }
        const Guidance* gd = b < guidance.size() ? guidance[b] : nullptr;
        if (gd) {
            parts["sem"] = losses::semantic_loss(c.bridge.semantic_full, g.constant(Tensor::from_samples(gd->global)));
            parts["cons"] = losses::consistency_loss(c.bridge.acoustic_native, g.constant(Tensor::from_grid(gd->frames)));
        } else {
            parts["sem"] = g.constant(Tensor::scalar(0.0));
            parts["cons"] = g.constant(Tensor::scalar(0.0));
        }
        parts["commit"] = c.bridge.commitment;
        for (const auto& [name, v] : parts) rec.parts[name] += inv_batch * v.value().item();
        Var clip_total = losses::total_generator_loss(w, parts);
        if (c.bridge.codebook) {
            rec.codebook += inv_batch * c.bridge.codebook->value().item();
            clip_total = ops::add(clip_total, *c.bridge.codebook);
        }
        totals.push_back(clip_total);
    }
    Var loss = ops::weighted_sum(totals, std::vector<double>(totals.size(), inv_batch));
    rec.generator = loss.value().item();
    if (!std::isfinite(rec.generator))
        throw Error(ErrorCode::NonFiniteValue, "generator loss is not finite at step " + std::to_string(t));
    model.params().zero_grad();
    g.backward(loss);
    adam_step(model.params(), state.generator_moments, t, options.generator_adam);
    model.sync_codebooks();

    state.step = t;
    state.history.push_back(rec);
    return rec;
}

// ---------------------------------------------------------------------------

std::vector<AudioBuffer> synthetic_corpus(std::size_t clips, std::size_t samples, int sample_rate, std::uint64_t seed) {
    std::vector<AudioBuffer> out;
    out.reserve(clips);
    for (std::size_t c = 0; c < clips; ++c) {
        std::mt19937_64 rng(seed * 1000003ULL + c);
        std::uniform_real_distribution<double> freq(100.0, 4000.0);
        std::uniform_real_distribution<double> amp(0.1, 1.0);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        double f[3], a[3], p[3], sum = 0.0;
        for (int i = 0; i < 3; ++i) {
            f[i] = freq(rng);
            a[i] = amp(rng);
            p[i] = phase(rng);
            sum += a[i];
        }
        for (double& v : a) v *= 0.85 / sum;
        AudioBuffer clip;
        clip.sample_rate = sample_rate;
        clip.samples.resize(samples);
        for (std::size_t n = 0; n < samples; ++n) {
            const double time = static_cast<double>(n) / sample_rate;
            double v = 0.0;
            for (int i = 0; i < 3; ++i) v += a[i] * std::sin(2.0 * std::numbers::pi * f[i] * time + p[i]);
            clip.samples[n] = v;
        }
        out.push_back(std::move(clip));
    }
    return out;
}

Guidance synthetic_guidance(std::size_t latent_dim, std::size_t frames, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.5);
    Guidance gd;
    gd.global.resize(latent_dim);
    for (double& v : gd.global) v = normal(rng);
    gd.frames = FeatureGrid(frames, latent_dim);
    for (double& v : gd.frames.data()) v = normal(rng);
    return gd;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_record(bin::Writer& w, const std::string& path, const Tensor& t) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(path.size()));
    w.str(path);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.bytes(t.data.data(), t.data.size() * sizeof(double));
}

std::pair<std::string, Tensor> read_record(bin::Reader& r) {
    const auto len = r.get<std::uint16_t>();
    std::string path = r.str(len);
    const auto rank = r.get<std::uint8_t>();
    std::vector<std::size_t> shape;
    for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(r.get<std::uint32_t>());
    Tensor t(shape);
    r.need(t.size() * sizeof(double));
    for (double& v : t.data) v = r.get<double>();
    return {std::move(path), std::move(t)};
}

std::vector<std::pair<std::string, const Tensor*>> moment_records(const TrainState& s) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (const auto* mom : {&s.generator_moments, &s.discriminator_moments}) {
        for (const auto& [id, t] : mom->m) out.emplace_back("m:" + id, &t);
        for (const auto& [id, t] : mom->v) out.emplace_back("v:" + id, &t);
    }
    return out;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    bin::Writer w;
    w.str(kCheckpointMagic);
    const auto& gen = state.model.params().items();
    const auto& disc = state.discriminator.params().items();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(gen.size() + disc.size()));
    for (const auto& p : gen) write_record(w, p.id, p.value);
    for (const auto& p : disc) write_record(w, p.id, p.value);
    const auto moments = moment_records(state);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(moments.size()));
    for (const auto& [id, t] : moments) write_record(w, id, *t);
    w.put<std::uint64_t>(state.step);
    w.put<std::uint64_t>(state.seed);
    bin::write_file(path.string(), w.buffer());
}

void load_checkpoint(TrainState& state, const std::filesystem::path& path) {
    bin::Reader r(bin::read_file(path.string()));
    if (r.remaining() < kCheckpointMagic.size() || r.str(kCheckpointMagic.size()) != kCheckpointMagic)
        throw Error(ErrorCode::BadMagic, "not an LCKP1 checkpoint: " + path.string());
    auto& gen = state.model.params();
    auto& disc = state.discriminator.params();
    const auto count = r.get<std::uint32_t>();
    if (count != gen.size() + disc.size())
        throw Error(ErrorCode::DigestMismatch, "checkpoint holds " + std::to_string(count) +
                                                   " parameters, model has " + std::to_string(gen.size() + disc.size()));
    for (std::uint32_t i = 0; i < count; ++i) {
        auto [id, t] = read_record(r);
        Parameter* p = gen.find(id);
        if (!p) p = disc.find(id);
        if (!p || p->value.shape != t.shape)
            throw Error(ErrorCode::DigestMismatch, "checkpoint parameter '" + id + "' does not match the model", id);
        p->value = std::move(t);
        p->zero_grad();
    }
    const auto moments = r.get<std::uint32_t>();
    state.generator_moments = {};
    state.discriminator_moments = {};
    for (std::uint32_t i = 0; i < moments; ++i) {
        auto [key, t] = read_record(r);
        if (key.size() < 3 || key[1] != ':') throw Error(ErrorCode::CorruptHeader, "bad moment record " + key);
        const std::string id = key.substr(2);
        AdamMoments* target = gen.find(id) ? &state.generator_moments
                              : disc.find(id) ? &state.discriminator_moments
                                              : nullptr;
        if (!target) throw Error(ErrorCode::DigestMismatch, "moment for unknown parameter '" + id + "'", id);
        (key[0] == 'm' ? target->m : target->v)[id] = std::move(t);
    }
    state.step = r.get<std::uint64_t>();
    state.seed = r.get<std::uint64_t>();
    if (!r.at_end()) throw Error(ErrorCode::CorruptHeader, "trailing bytes in checkpoint");
    state.model.sync_codebooks();
}

}  // namespace llmcodec::nn
