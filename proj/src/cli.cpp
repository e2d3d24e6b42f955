#include "llmcodec/cli.hpp"

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "llmcodec/binary_io.hpp"
#include "llmcodec/hash.hpp"
#include "llmcodec/icl.hpp"

namespace llmcodec::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end)
        throw Error(ErrorCode::ParseError, "bad value for '" + std::string(key) + "': " + std::string(value),
                    std::string(key));
    return out;
}

std::vector<std::string> split_list(std::string_view value) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss{std::string(value)};
    while (std::getline(ss, item, ',')) out.emplace_back(trim(item));
    return out;
}

std::vector<std::size_t> parse_size_list(std::string_view key, std::string_view value) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(value)) out.push_back(parse_number<std::size_t>(key, item));
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw Error(ErrorCode::ParseError, "bad boolean for '" + std::string(key) + "': " + std::string(value),
                std::string(key));
}

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    return out;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void require_file(const fs::path& p, std::string_view key) {
    if (!p.empty() && !fs::exists(p))
        throw Error(ErrorCode::NotFound, std::string(key) + " does not exist: " + p.string(), p.string());
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir) {
    RunConfig cfg;
    const auto path = [&](std::string_view v) -> fs::path {
        fs::path p{std::string(v)};
        return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s = line;
        if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string_view::npos)
            throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected key = value",
                        std::string(s));
        const std::string key(trim(s.substr(0, eq)));
        const std::string_view v = trim(s.substr(eq + 1));

        auto& c = cfg.codec;
        auto& w = cfg.weights;
        auto& t = cfg.train;
        auto& a = cfg.assets;
        if (key == "sample_rate") c.sample_rate = parse_number<int>(key, v);
        else if (key == "encoder_strides") c.encoder_strides = parse_size_list(key, v);
        else if (key == "latent_dim") c.latent_dim = parse_number<std::size_t>(key, v);
        else if (key == "vq_strides") c.vq_strides = parse_size_list(key, v);
        else if (key == "codebook_ids") c.codebook_ids = split_list(v);
        else if (key == "stft.n_fft") cfg.spectro.n_fft = parse_number<std::size_t>(key, v);
        else if (key == "stft.hop") cfg.spectro.hop = parse_number<std::size_t>(key, v);
        else if (key == "stft.band_count") cfg.spectro.band_count = parse_number<std::size_t>(key, v);
        else if (key == "stft.window") {
            if (v == "hann") cfg.spectro.window = Window::Hann;
            else if (v == "rectangular") cfg.spectro.window = Window::Rectangular;
            else throw Error(ErrorCode::ParseError, "unknown window '" + std::string(v) + "'", key);
        }
        else if (key == "weight.time") w.time = parse_number<double>(key, v);
        else if (key == "weight.freq") w.freq = parse_number<double>(key, v);
        else if (key == "weight.adv") w.adv = parse_number<double>(key, v);
        else if (key == "weight.feat") w.feat = parse_number<double>(key, v);
        else if (key == "weight.sem") w.sem = parse_number<double>(key, v);
        else if (key == "weight.cons") w.cons = parse_number<double>(key, v);
        else if (key == "weight.commit") w.commit = parse_number<double>(key, v);
        else if (key == "model.channels") cfg.model.channels = parse_number<std::size_t>(key, v);
        else if (key == "model.max_channels") cfg.model.max_channels = parse_number<std::size_t>(key, v);
        else if (key == "model.seed") cfg.model.seed = parse_number<std::uint64_t>(key, v);
        else if (key == "model.frozen_codebooks") cfg.model.frozen_codebooks = parse_bool(key, v);
        else if (key == "disc.hops") cfg.discriminator.hops = parse_size_list(key, v);
        else if (key == "disc.hidden") cfg.discriminator.hidden = parse_number<std::size_t>(key, v);
        else if (key == "disc.bands") cfg.discriminator.bands = parse_number<std::size_t>(key, v);
        else if (key == "disc.layers") cfg.discriminator.layers = parse_number<std::size_t>(key, v);
        else if (key == "disc.seed") cfg.discriminator.seed = parse_number<std::uint64_t>(key, v);
        else if (key == "train.steps") t.steps = parse_number<std::size_t>(key, v);
        else if (key == "train.batch_size") t.batch_size = parse_number<std::size_t>(key, v);
        else if (key == "train.seed") t.seed = parse_number<std::uint64_t>(key, v);
        else if (key == "train.lr") t.lr = parse_number<double>(key, v);
        else if (key == "train.disc_lr") t.disc_lr = parse_number<double>(key, v);
        else if (key == "train.clips") t.clips = parse_number<std::size_t>(key, v);
        else if (key == "train.clip_samples") t.clip_samples = parse_number<std::size_t>(key, v);
        else if (key == "train.checkpoint") t.checkpoint = path(v);
        else if (key == "train.history") t.history = path(v);
        else if (key == "assets.embeddings") a.embeddings = path(v);
        else if (key == "assets.words") a.words = path(v);
        else if (key == "assets.tokenizer") a.tokenizer = path(v);
        else if (key == "assets.word_codebook") a.word_codebook = path(v);
        else if (key == "assets.guidance_dir") a.guidance_dir = path(v);
        else if (key == "assets.seed") a.synthetic_seed = parse_number<std::uint64_t>(key, v);
        else throw Error(ErrorCode::ParseError, "unknown config key '" + key + "'", key);
    }

    cfg.codec.validate();
    cfg.spectro.validate();
    cfg.weights.validate();
    if (cfg.train.batch_size == 0) throw Error(ErrorCode::ParseError, "train.batch_size must be positive");
    require_file(cfg.assets.embeddings, "assets.embeddings");
    require_file(cfg.assets.words, "assets.words");
    require_file(cfg.assets.tokenizer, "assets.tokenizer");
    require_file(cfg.assets.word_codebook, "assets.word_codebook");
    require_file(cfg.assets.guidance_dir, "assets.guidance_dir");
    if (cfg.assets.words.empty() != cfg.assets.tokenizer.empty())
        throw Error(ErrorCode::ParseError, "assets.words and assets.tokenizer go together");
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    return parse_run_config(bin::read_file(path.string()), path.parent_path());
}

std::string dump_run_config(const RunConfig& cfg) {
    std::ostringstream os;
    const auto& c = cfg.codec;
    const auto& w = cfg.weights;
    const auto& t = cfg.train;
    const auto& a = cfg.assets;
    os << "sample_rate = " << c.sample_rate << "\n"
       << "encoder_strides = " << join(c.encoder_strides) << "\n"
       << "latent_dim = " << c.latent_dim << "\n"
       << "vq_strides = " << join(c.vq_strides) << "\n"
       << "codebook_ids = " << join(c.codebook_ids) << "\n"
       << "stft.n_fft = " << cfg.spectro.n_fft << "\n"
       << "stft.hop = " << cfg.spectro.hop << "\n"
       << "stft.window = " << (cfg.spectro.window == Window::Hann ? "hann" : "rectangular") << "\n"
       << "stft.band_count = " << cfg.spectro.band_count << "\n"
       << "weight.time = " << format_double(w.time) << "\n"
       << "weight.freq = " << format_double(w.freq) << "\n"
       << "weight.adv = " << format_double(w.adv) << "\n"
       << "weight.feat = " << format_double(w.feat) << "\n"
       << "weight.sem = " << format_double(w.sem) << "\n"
       << "weight.cons = " << format_double(w.cons) << "\n"
       << "weight.commit = " << format_double(w.commit) << "\n"
       << "model.channels = " << cfg.model.channels << "\n"
       << "model.max_channels = " << cfg.model.max_channels << "\n"
       << "model.seed = " << cfg.model.seed << "\n"
       << "model.frozen_codebooks = " << (cfg.model.frozen_codebooks ? "true" : "false") << "\n"
       << "disc.hops = " << join(cfg.discriminator.hops) << "\n"
       << "disc.hidden = " << cfg.discriminator.hidden << "\n"
       << "disc.bands = " << cfg.discriminator.bands << "\n"
       << "disc.layers = " << cfg.discriminator.layers << "\n"
       << "disc.seed = " << cfg.discriminator.seed << "\n"
       << "train.steps = " << t.steps << "\n"
       << "train.batch_size = " << t.batch_size << "\n"
       << "train.seed = " << t.seed << "\n"
       << "train.lr = " << format_double(t.lr) << "\n"
       << "train.disc_lr = " << format_double(t.disc_lr) << "\n"
       << "train.clips = " << t.clips << "\n"
       << "train.clip_samples = " << t.clip_samples << "\n"
       << "train.checkpoint = " << t.checkpoint.string() << "\n"
       << "train.history = " << t.history.string() << "\n";
    const auto opt_path = [&](std::string_view key, const fs::path& p) {
        if (!p.empty()) os << key << " = " << p.string() << "\n";
    };
    opt_path("assets.embeddings", a.embeddings);
    opt_path("assets.words", a.words);
    opt_path("assets.tokenizer", a.tokenizer);
    opt_path("assets.word_codebook", a.word_codebook);
    opt_path("assets.guidance_dir", a.guidance_dir);
    os << "assets.seed = " << a.synthetic_seed << "\n";
    return os.str();
}

std::vector<Codebook> build_codebooks(const RunConfig& cfg) {
    cfg.codec.validate();
    const auto& a = cfg.assets;
    const std::size_t d = cfg.codec.latent_dim;
    std::optional<SyntheticAssets> synth;
    const auto synthetic = [&]() -> const SyntheticAssets& {
        if (!synth) synth = make_synthetic_assets(256, 64, 96, a.synthetic_seed);
        return *synth;
    };
    std::optional<EmbeddingTable> vocab;
    const auto vocabulary = [&]() -> const EmbeddingTable& {
        if (!vocab) vocab = a.embeddings.empty() ? synthetic().table : load_embedding_table(a.embeddings);
        return *vocab;
    };

    std::vector<Codebook> books;
    for (std::size_t i = 0; i < cfg.codec.layer_count(); ++i) {
        const std::uint64_t seed = cfg.model.seed * 1000 + i + 1;
        const std::string& id = cfg.codec.codebook_ids[i];
        if (id == "word") {
            if (!a.word_codebook.empty()) {
                EmbeddingTable t = load_embedding_table(a.word_codebook);
                if (t.projected_dim && *t.projected_dim != d)
                    throw Error(ErrorCode::ConfigMismatch, "word codebook was built for dim " +
                                                               std::to_string(*t.projected_dim) + ", config has " +
                                                               std::to_string(d));
                books.emplace_back(t.tokens, t.vectors, d, seed);
            } else if (!a.words.empty()) {
                books.push_back(build_word_codebook(load_word_list(a.words), load_tokenizer_map(a.tokenizer),
                                                    vocabulary(), d, seed));
            } else {
                const auto& s = synthetic();
                books.push_back(build_word_codebook(s.words, s.tokenizer, s.table, d, seed));
            }
        } else {
            books.push_back(build_subword_codebook(vocabulary(), d, seed));
        }
    }
    return books;
}

nn::TrainState make_train_state(const RunConfig& cfg) {
    return nn::TrainState{nn::ToyCodecModel(cfg.codec, build_codebooks(cfg), cfg.model),
                          nn::SpectroDiscriminator(cfg.discriminator),
                          {},
                          {},
                          0,
                          cfg.train.seed,
                          {}};
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::DigestMismatch:
            return 3;
        case ErrorCode::NonFiniteValue:
            return 4;
        case ErrorCode::Timeout:
        case ErrorCode::HttpStatus:
        case ErrorCode::MalformedResponse:
        case ErrorCode::EmptyCompletion:
            return 5;
        case ErrorCode::NotFound:
        case ErrorCode::UnsupportedFormat:
        case ErrorCode::CorruptHeader:
        case ErrorCode::IoError:
        case ErrorCode::BadMagic:
        case ErrorCode::TruncatedFile:
        case ErrorCode::DimensionMismatch:
        case ErrorCode::UnknownWord:
        case ErrorCode::EmptyResult:
        case ErrorCode::IndexOutOfRange:
        case ErrorCode::ParseError:
        case ErrorCode::ConfigMismatch:
        case ErrorCode::InvalidBandCount:
        case ErrorCode::InvalidStride:
            return 2;
        default:
            return 1;
    }
}

// ---------------------------------------------------------------------------

namespace {

struct ClientFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Context {
    RunConfig cfg;
    nn::TrainState state;
};

Context open_context(const std::string& config_path, const std::string& ckpt) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    nn::TrainState state = make_train_state(cfg);
    if (!ckpt.empty()) nn::load_checkpoint(state, ckpt);
    return {std::move(cfg), std::move(state)};
}

std::string digest_hex(const nn::ToyCodecModel& model) {
    return to_hex(config_digest(model.config(), model.books()));
}

void write_json(const json& j, const fs::path& path) { bin::write_file(path.string(), j.dump(2) + "\n"); }

std::vector<fs::path> wav_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorCode::NotFound, "data directory not found: " + dir.string(), dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw Error(ErrorCode::NotFound, "no .wav files in " + dir.string(), dir.string());
    return out;
}

// --- build-codebook --------------------------------------------------------

struct BuildCodebookArgs {
    std::string words, tokmap, emb, out;
    std::size_t dim = 64;
    std::uint64_t seed = 1;
    bool json = false;
};

int cmd_build_codebook(const BuildCodebookArgs& a, std::ostream& out) {
    const auto words = load_word_list(a.words);
    const auto tok = load_tokenizer_map(a.tokmap);
    const auto table = load_embedding_table(a.emb);
    WordCodebookStats stats;
    const Codebook book = build_word_codebook(words, tok, table, a.dim, a.seed, &stats);
    EmbeddingTable result{book.labels(), book.entries(), static_cast<std::uint32_t>(a.dim)};
    save_embedding_table(result, a.out);
    if (a.json)
        out << json{{"entries", book.size()},
                    {"excluded", stats.excluded},
                    {"duplicates", stats.duplicates},
                    {"entry_hash", to_hex(book.entry_hash())}}
                   .dump()
            << "\n";
    else
        out << "N=" << book.size() << " excluded=" << stats.excluded << " duplicates=" << stats.duplicates << "\n";
    return 0;
}

// --- encode / decode -------------------------------------------------------

struct CodecArgs {
    std::string in, out, config, ckpt, layers = "all", ref;
    bool json = false;
};

int cmd_encode(const CodecArgs& a, std::ostream& out) {
    Context ctx = open_context(a.config, a.ckpt);
    const auto& model = ctx.state.model;
    const AudioBuffer audio = load_wav(a.in);
    QuantizedAudio q = model.quantize_audio(audio);
    const LayerSelection sel = parse_layer_selection(a.layers, model.config().layer_count());
    for (std::size_t i = 0; i < q.layers.size(); ++i)
        if (!std::binary_search(sel.begin(), sel.end(), i)) q.layers[i].clear();
    save_token_stream(q, a.out);
    if (a.json) {
        json layers = json::array();
        for (const auto& l : q.layers) layers.push_back(l.size());
        out << json{{"frames", q.frame_count},
                    {"tokens", q.token_count()},
                    {"layers", layers},
                    {"config_digest", to_hex(q.config_digest)},
                    {"seed", ctx.state.seed}}
                   .dump()
            << "\n";
    } else {
        out << "frames=" << q.frame_count << " tokens=" << q.token_count() << " digest=" << to_hex(q.config_digest)
            << "\n";
    }
    return 0;
}

int cmd_decode(const CodecArgs& a, std::ostream& out) {
    Context ctx = open_context(a.config, a.ckpt);
    QuantizedAudio q = load_token_stream(a.in);
    if (a.layers != "all") {
        const LayerSelection sel = parse_layer_selection(a.layers, q.layers.size());
        for (std::size_t i = 0; i < q.layers.size(); ++i)
            if (!std::binary_search(sel.begin(), sel.end(), i)) q.layers[i].clear();
    }
    const AudioBuffer audio = ctx.state.model.reconstruct(q);
    save_wav(audio, a.out);
    json report{{"samples", audio.size()}, {"config_digest", to_hex(q.config_digest)}, {"seed", ctx.state.seed}};
    if (!a.ref.empty()) {
        AudioBuffer ref = load_wav(a.ref);
        AudioBuffer est = audio;
        const std::size_t n = std::min(ref.size(), est.size());
        ref.samples.resize(n);
        est.samples.resize(n);
        report["snr_db"] = snr_db(ref, est);
    }
    if (a.json) {
        out << report.dump() << "\n";
    } else {
        out << "samples=" << audio.size();
        if (report.contains("snr_db")) out << " snr_db=" << report["snr_db"].get<double>();
        out << "\n";
    }
    return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    std::string config, data_dir, ckpt, history, resume;
    std::optional<std::size_t> steps;
    bool synthetic = false;
    bool json = false;
    bool quiet = false;
};

nn::Guidance load_guidance(const fs::path& dir, const fs::path& clip) {
    const std::string stem = clip.stem().string();
    nn::Guidance g;
    g.global = nn::load_global_guidance(dir / (stem + ".g.json"));
    g.frames = nn::load_guidance_grid(dir / (stem + ".w.bin"));
    return g;
}

json history_json(const Context& ctx, std::size_t batch_size, const json& eval) {
    json steps = json::array();
    for (const auto& r : ctx.state.history) {
        json j{{"step", r.step}};
        for (const auto& [name, v] : r.parts) j[name] = v;
        j["generator"] = r.generator;
        j["discriminator"] = r.discriminator;
        j["codebook"] = r.codebook;
        steps.push_back(std::move(j));
    }
    return json{{"seed", ctx.state.seed},
                {"config_digest", digest_hex(ctx.state.model)},
                {"batch_size", batch_size},
                {"steps", ctx.state.history.size()},
                {"history", std::move(steps)},
                {"eval", eval}};
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    Context ctx = open_context(a.config, {});
    const RunConfig& cfg = ctx.cfg;
    if (!a.resume.empty()) nn::load_checkpoint(ctx.state, a.resume);
    const std::size_t steps = a.steps.value_or(cfg.train.steps);
    const fs::path ckpt = a.ckpt.empty() ? cfg.train.checkpoint : fs::path(a.ckpt);
    const fs::path history = a.history.empty() ? cfg.train.history : fs::path(a.history);

    std::vector<AudioBuffer> corpus;
    std::vector<nn::Guidance> guidance;
    const std::size_t total = cfg.codec.total_downsample();
    if (a.synthetic == !a.data_dir.empty())
        throw Error(ErrorCode::InvalidArgument, "train needs exactly one of --synthetic or --data-dir");
    if (a.synthetic) {
        corpus = nn::synthetic_corpus(cfg.train.clips, cfg.train.clip_samples, cfg.codec.sample_rate, cfg.train.seed);
    } else {
        for (const auto& p : wav_files(a.data_dir)) {
            AudioBuffer clip = load_wav(p);
            if (clip.sample_rate != cfg.codec.sample_rate)
                throw Error(ErrorCode::ConfigMismatch, p.string() + " is not at " + std::to_string(cfg.codec.sample_rate) +
                                                           " Hz", p.string());
            if (!cfg.assets.guidance_dir.empty()) guidance.push_back(load_guidance(cfg.assets.guidance_dir, p));
            corpus.push_back(std::move(clip));
        }
    }
    if (guidance.empty())
        for (std::size_t i = 0; i < corpus.size(); ++i)
            guidance.push_back(nn::synthetic_guidance(cfg.codec.latent_dim, corpus[i].size() / total,
                                                      cfg.train.seed * 7919 + i));

    nn::TrainOptions opts;
    opts.weights = cfg.weights;
    opts.spectro = cfg.spectro;
    opts.generator_adam.lr = cfg.train.lr;
    opts.discriminator_adam.lr = cfg.train.disc_lr;

    const std::size_t bs = cfg.train.batch_size;
    for (std::size_t s = 0; s < steps; ++s) {
        std::vector<AudioBuffer> batch;
        std::vector<const nn::Guidance*> gd;
        for (std::size_t b = 0; b < bs; ++b) {
            const std::size_t i = (s * bs + b) % corpus.size();
            batch.push_back(corpus[i]);
            gd.push_back(&guidance[i]);
        }
        nn::LossRecord rec;
        try {
            rec = nn::train_step(ctx.state, batch, gd, opts);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NonFiniteValue || std::string_view(e.what()).find(" at step ") !=
                                                                std::string_view::npos)
                throw;
            const std::string where = "step " + std::to_string(ctx.state.step + 1);
            std::string msg = e.what();
            msg.erase(0, msg.find(": ") + 2);
            throw Error(ErrorCode::NonFiniteValue, msg + " at " + where, where);
        }
        if (!a.quiet && !a.json && (rec.step % 10 == 0 || s + 1 == steps))
            out << "step " << rec.step << " generator=" << rec.generator << " time=" << rec.parts.at("time")
                << " discriminator=" << rec.discriminator << "\n";
    }

    // Codec-path SNR on the first clips, for comparison against encode/decode runs.
    const std::size_t eval_clips = std::min<std::size_t>(4, corpus.size());
    double snr_sum = 0.0;
    for (std::size_t i = 0; i < eval_clips; ++i) {
        AudioBuffer x = corpus[i];
        x.samples.resize(x.size() / total * total);
        const AudioBuffer y = ctx.state.model.reconstruct(ctx.state.model.quantize_audio(x));
        snr_sum += snr_db(x, y);
    }
    const json eval{{"clips", eval_clips}, {"snr_db", snr_sum / static_cast<double>(eval_clips)}};

    nn::save_checkpoint(ctx.state, ckpt);
    write_json(history_json(ctx, bs, eval), history);
    if (a.json)
        out << json{{"steps", ctx.state.history.size()},
                    {"checkpoint", ckpt.string()},
                    {"history", history.string()},
                    {"eval", eval}}
                   .dump()
            << "\n";
    else
        out << "wrote " << ckpt.string() << " and " << history.string() << " (snr_db=" << eval["snr_db"].get<double>()
            << ")\n";
    return 0;
}

// --- icl ---------------------------------------------------------------------

struct IclArgs {
    std::string episodes, client = "mock", report, constant, config, ckpt, out_dir;
    std::size_t concurrency = 4;
    int max_tokens = 16;
    bool json = false;
};

int cmd_icl(const IclArgs& a, std::ostream& out, std::ostream& err) {
    const auto episodes = icl::load_episodes(a.episodes);
    Context ctx = open_context(a.config, a.ckpt);

    std::unique_ptr<icl::LmClient> base;
    std::unique_ptr<icl::LmClient> wrapped;
    if (a.client == "mock") {
        base = std::make_unique<icl::NearestDemoClient>();
    } else if (a.client == "constant") {
        base = std::make_unique<icl::ConstantClient>(a.constant);
    } else if (a.client == "http") {
        try {
            base = std::make_unique<icl::HttpClient>(icl::HttpClient::from_env());
        } catch (const Error& e) {
            throw ClientFailure(e.what());
        }
        wrapped = std::make_unique<icl::RetryingClient>(*base, 3);
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown client '" + a.client + "'", a.client);
    }
    const icl::LmClient& client = wrapped ? *wrapped : *base;

    std::vector<icl::Episode> cls;
    std::vector<std::size_t> cls_index;
    std::vector<std::size_t> gen_index;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        if (episodes[i].task_kind == icl::TaskKind::Classification) {
            cls.push_back(episodes[i]);
            cls_index.push_back(i);
        } else {
            gen_index.push_back(i);
        }
    }

    json report{{"client", a.client},
                {"seed", ctx.state.seed},
                {"config_digest", digest_hex(ctx.state.model)},
                {"episodes", json::array()},
                {"error", nullptr}};
    std::optional<std::string> failure;
    if (!cls.empty()) {
        icl::ScoreOptions so;
        so.max_in_flight = a.concurrency;
        so.max_tokens = a.max_tokens;
        const auto r = icl::score_classification(cls, client, so);
        for (const auto& e : r.episodes) {
            const std::size_t k = e.index;
            report["episodes"].push_back({{"index", cls_index[k]},
                                          {"kind", "classification"},
                                          {"prompt_hash", e.prompt_hash},
                                          {"completion", e.completion},
                                          {"prediction", e.prediction ? json(*e.prediction) : json(nullptr)},
                                          {"answer", cls[k].answer},
                                          {"correct", e.correct}});
        }
        report["total"] = r.total;
        report["correct"] = r.correct;
        report["accuracy"] = r.accuracy;
        if (r.error) failure = *r.error;
    }
    if (!failure) {
        for (auto i : gen_index) {
            try {
                const AudioBuffer audio = icl::run_generation(episodes[i], client, ctx.state.model, a.max_tokens);
                json entry{{"index", i}, {"kind", "generation"}, {"samples", audio.size()}};
                if (!a.out_dir.empty()) {
                    const fs::path p = fs::path(a.out_dir) / ("generation_" + std::to_string(i) + ".wav");
                    save_wav(audio, p);
                    entry["wav"] = p.string();
                }
                report["episodes"].push_back(std::move(entry));
            } catch (const Error& e) {
                if (exit_code_for(e.code()) == 5) {
                    failure = "episode " + std::to_string(i) + ": " + e.what();
                    break;
                }
                report["episodes"].push_back({{"index", i}, {"kind", "generation"}, {"error", e.what()}});
            }
        }
    }
    if (failure) report["error"] = *failure;

    if (!a.report.empty()) write_json(report, a.report);
    if (a.json) {
        out << report.dump() << "\n";
    } else if (report.contains("accuracy")) {
        out << "accuracy=" << report["accuracy"].get<double>() << " (" << report["correct"].get<std::size_t>() << "/"
            << report["total"].get<std::size_t>() << ")\n";
    }
    if (failure) {
        err << "error: " << *failure << "\n";
        return 5;
    }
    return 0;
}

// --- tokens ------------------------------------------------------------------

struct TokensArgs {
    std::string in, config, ckpt, layers = "semantic";
    bool json = false;
};

int cmd_tokens(const TokensArgs& a, std::ostream& out) {
    Context ctx = open_context(a.config, a.ckpt);
    const auto& model = ctx.state.model;
    const auto& books = model.books();
    const QuantizedAudio q = fs::path(a.in).extension() == ".wav" ? model.quantize_audio(load_wav(a.in))
                                                                  : load_token_stream(a.in);
    if (q.layers.size() != books.size())
        throw Error(ErrorCode::LayerCountMismatch, "stream has " + std::to_string(q.layers.size()) +
                                                       " layers, config has " + std::to_string(books.size()));
    const LayerSelection sel = parse_layer_selection(a.layers, books.size());
    if (a.json) {
        json layers = json::array();
        for (auto i : sel) {
            json labels = json::array();
            std::istringstream words(render_tokens(q, books, {i}));
            for (std::string w; words >> w;) labels.push_back(w);
            layers.push_back({{"layer", i + 1}, {"codebook", model.config().codebook_ids[i]}, {"tokens", labels}});
        }
        out << json{{"layers", layers}}.dump() << "\n";
        return 0;
    }
    for (auto i : sel) {
        if (sel.size() > 1) out << "# layer " << i + 1 << " (" << model.config().codebook_ids[i] << ")\n";
        out << render_tokens(q, books, {i}) << "\n";
    }
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Audio codec with frozen language-model vocabularies"};
    app.name("llmcodec");
    app.require_subcommand(1);

    BuildCodebookArgs bc;
    auto* build = app.add_subcommand("build-codebook", "Build the word codebook from vocabulary assets");
    build->add_option("--words", bc.words, "Word list, one per line")->required();
    build->add_option("--tokmap", bc.tokmap, "Word to sub-word id map (JSON)")->required();
    build->add_option("--emb", bc.emb, "Vocabulary embeddings (LCEB1)")->required();
    build->add_option("--out", bc.out, "Output codebook (LCEB1)")->required();
    build->add_option("--dim", bc.dim, "Projected dimension recorded in the file");
    build->add_flag("--json", bc.json);

    CodecArgs enc, dec;
    auto* encode_cmd = app.add_subcommand("encode", "WAV to token stream");
    encode_cmd->add_option("--in", enc.in, "Input WAV")->required();
    encode_cmd->add_option("--out", enc.out, "Output token stream (JSON)")->required();
    encode_cmd->add_option("--config", enc.config, "Run config");
    encode_cmd->add_option("--ckpt", enc.ckpt, "Checkpoint");
    encode_cmd->add_option("--layers", enc.layers, "semantic, all, or 1-based ids such as 1,2");
    encode_cmd->add_flag("--json", enc.json);

    auto* decode_cmd = app.add_subcommand("decode", "Token stream to WAV");
    decode_cmd->add_option("--in", dec.in, "Input token stream (JSON)")->required();
    decode_cmd->add_option("--out", dec.out, "Output WAV")->required();
    decode_cmd->add_option("--config", dec.config, "Run config");
    decode_cmd->add_option("--ckpt", dec.ckpt, "Checkpoint");
    decode_cmd->add_option("--layers", dec.layers, "Decode only these layers");
    decode_cmd->add_option("--ref", dec.ref, "Reference WAV for an SNR report");
    decode_cmd->add_flag("--json", dec.json);

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train the toy codec");
    train->add_option("--config", tr.config, "Run config");
    train->add_option("--data-dir", tr.data_dir, "Directory of 16-bit mono WAV clips");
    train->add_flag("--synthetic", tr.synthetic, "Use the seeded multi-sine corpus");
    train->add_option("--steps", tr.steps, "Override train.steps");
    train->add_option("--ckpt", tr.ckpt, "Override train.checkpoint");
    train->add_option("--history", tr.history, "Override train.history");
    train->add_option("--resume", tr.resume, "Start from a checkpoint");
    train->add_flag("--quiet", tr.quiet);
    train->add_flag("--json", tr.json);

    IclArgs ic;
    auto* icl_cmd = app.add_subcommand("icl", "Score few-shot episodes against a completion client");
    icl_cmd->add_option("--episodes", ic.episodes, "Episode file (JSON list)")->required();
    icl_cmd->add_option("--client", ic.client, "mock, constant or http")
        ->check(CLI::IsMember({"mock", "constant", "http"}));
    icl_cmd->add_option("--constant", ic.constant, "Completion returned by the constant client");
    icl_cmd->add_option("--report", ic.report, "Report path (JSON)");
    icl_cmd->add_option("--config", ic.config, "Run config (generation episodes)");
    icl_cmd->add_option("--ckpt", ic.ckpt, "Checkpoint (generation episodes)");
    icl_cmd->add_option("--out-dir", ic.out_dir, "Where generated WAVs go");
    icl_cmd->add_option("--concurrency", ic.concurrency, "Requests in flight")->check(CLI::PositiveNumber);
    icl_cmd->add_option("--max-tokens", ic.max_tokens, "Completion length")->check(CLI::PositiveNumber);
    icl_cmd->add_flag("--json", ic.json);

    TokensArgs tk;
    auto* tokens = app.add_subcommand("tokens", "Print token words per layer");
    tokens->add_option("--in", tk.in, "Token stream (JSON) or WAV")->required();
    tokens->add_option("--config", tk.config, "Run config");
    tokens->add_option("--ckpt", tk.ckpt, "Checkpoint (WAV input)");
    tokens->add_option("--layers", tk.layers, "semantic, all, or 1-based ids");
    tokens->add_flag("--json", tk.json);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (build->parsed()) return cmd_build_codebook(bc, out);
        if (encode_cmd->parsed()) return cmd_encode(enc, out);
        if (decode_cmd->parsed()) return cmd_decode(dec, out);
        if (train->parsed()) return cmd_train(tr, out);
        if (icl_cmd->parsed()) return cmd_icl(ic, out, err);
        if (tokens->parsed()) return cmd_tokens(tk, out);
    } catch (const ClientFailure& e) {
        err << "error: " << e.what() << "\n";
        return 5;
    } catch (const Error& e) {
        err << "error: " << e.what();
        if (!e.detail().empty()) err << " [" << e.detail() << "]";
        err << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace llmcodec::cli
