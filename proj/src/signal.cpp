#include "llmcodec/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>

#include "llmcodec/binary_io.hpp"
#include "llmcodec/error.hpp"
#include "llmcodec/fft.hpp"

namespace llmcodec {

FeatureGrid::FeatureGrid(std::size_t frames, std::size_t dim, double fill)
    : frames_(frames), dim_(dim), data_(frames * dim, fill) {}

FeatureGrid::FeatureGrid(std::size_t frames, std::size_t dim, std::vector<double> data)
    : frames_(frames), dim_(dim), data_(std::move(data)) {
    if (data_.size() != frames_ * dim_)
        throw Error(ErrorCode::ShapeMismatch, "grid data size does not match T x d");
}

FeatureGrid FeatureGrid::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    const std::size_t d = rows.front().size();
    FeatureGrid g(rows.size(), d);
    for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != d) throw Error(ErrorCode::ShapeMismatch, "ragged rows");
        std::copy(rows[t].begin(), rows[t].end(), g.row(t).begin());
    }
    return g;
}

std::vector<std::vector<double>> FeatureGrid::to_rows() const {
    std::vector<std::vector<double>> out(frames_);
    for (std::size_t t = 0; t < frames_; ++t) out[t].assign(row(t).begin(), row(t).end());
    return out;
}

void SpectrogramConfig::validate() const {
    if (!is_power_of_two(n_fft)) throw Error(ErrorCode::InvalidArgument, "n_fft must be a power of two");
    if (hop == 0 || hop > n_fft) throw Error(ErrorCode::InvalidArgument, "hop must be in [1, n_fft]");
    if (band_count == 0 || band_count > bins())
        throw Error(ErrorCode::InvalidBandCount, "band_count must be in [1, n_fft/2+1]");
}

// ---------------------------------------------------------------------------
// WAV

namespace {

constexpr std::uint16_t kFormatPcm = 1;

std::uint32_t read_u32(const std::string& s, std::size_t at) {
    std::uint32_t v;
    std::memcpy(&v, s.data() + at, 4);
    return v;
}
std::uint16_t read_u16(const std::string& s, std::size_t at) {
    std::uint16_t v;
    std::memcpy(&v, s.data() + at, 2);
    return v;
}

}  // namespace

AudioBuffer load_wav(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::NotFound, "no such file " + path.string(), path.string());
    const std::string bytes = bin::read_file(path.string());
    if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0)
        throw Error(ErrorCode::CorruptHeader, "not a RIFF/WAVE file");

    bool have_fmt = false;
    int sample_rate = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::string id = bytes.substr(pos, 4);
        const std::size_t size = read_u32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size()) throw Error(ErrorCode::CorruptHeader, "chunk '" + id + "' overruns file");
        if (id == "fmt ") {
            if (size < 16) throw Error(ErrorCode::CorruptHeader, "fmt chunk too short");
            const auto format = read_u16(bytes, body);
            const auto channels = read_u16(bytes, body + 2);
            const auto bits = read_u16(bytes, body + 14);
            if (format != kFormatPcm) throw Error(ErrorCode::UnsupportedFormat, "compressed WAV is not supported");
            if (channels != 1) throw Error(ErrorCode::UnsupportedFormat, "only mono WAV is supported");
            if (bits != 16) throw Error(ErrorCode::UnsupportedFormat, "only 16-bit PCM is supported");
            sample_rate = static_cast<int>(read_u32(bytes, body + 4));
            if (sample_rate <= 0) throw Error(ErrorCode::CorruptHeader, "sample rate must be positive");
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw Error(ErrorCode::CorruptHeader, "data chunk before fmt chunk");
            AudioBuffer out;
            out.sample_rate = sample_rate;
            out.samples.resize(size / 2);
            for (std::size_t i = 0; i < out.samples.size(); ++i) {
                std::int16_t v;
                std::memcpy(&v, bytes.data() + body + 2 * i, 2);
                out.samples[i] = static_cast<double>(v) / 32768.0;
            }
            return out;
        }
        pos = body + size + (size & 1U);
    }
    throw Error(ErrorCode::CorruptHeader, have_fmt ? "missing data chunk" : "missing fmt chunk");
}

void save_wav(const AudioBuffer& audio, const std::filesystem::path& path) {
    const auto n = static_cast<std::uint32_t>(audio.samples.size());
    bin::Writer w;
    w.str("RIFF");
    w.put<std::uint32_t>(36 + 2 * n);
    w.str("WAVE");
    w.str("fmt ");
    w.put<std::uint32_t>(16);
    w.put<std::uint16_t>(kFormatPcm);
    w.put<std::uint16_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(audio.sample_rate));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(audio.sample_rate) * 2);
    w.put<std::uint16_t>(2);
    w.put<std::uint16_t>(16);
    w.str("data");
    w.put<std::uint32_t>(2 * n);
    for (double x : audio.samples) {
        const double scaled = std::round(std::clamp(x, -1.0, 1.0) * 32768.0);
        w.put(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
    }
    bin::write_file(path.string(), w.buffer());
}

// ---------------------------------------------------------------------------
// Spectra

std::vector<double> make_window(Window window, std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (window == Window::Hann) {
        for (std::size_t i = 0; i < n; ++i)
            w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

std::size_t stft_frame_count(std::size_t length, const SpectrogramConfig& cfg) {
    const std::size_t padded = std::max(length, cfg.n_fft);
    return 1 + (padded - cfg.n_fft) / cfg.hop;
}

FeatureGrid stft_magnitude(std::span<const double> samples, const SpectrogramConfig& cfg) {
    cfg.validate();
    const std::size_t frames = stft_frame_count(samples.size(), cfg);
    const auto window = make_window(cfg.window, cfg.n_fft);
    FeatureGrid out(frames, cfg.bins());
    std::vector<std::complex<double>> buf(cfg.n_fft);
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t start = t * cfg.hop;
        for (std::size_t n = 0; n < cfg.n_fft; ++n) {
            const std::size_t idx = start + n;
            buf[n] = idx < samples.size() ? samples[idx] * window[n] : 0.0;
        }
        fft_inplace(buf);
        for (std::size_t k = 0; k < cfg.bins(); ++k) out.at(t, k) = std::abs(buf[k]);
    }
    return out;
}

FeatureGrid stft_magnitude(const AudioBuffer& audio, const SpectrogramConfig& cfg) {
    return stft_magnitude(std::span<const double>(audio.samples), cfg);
}

std::vector<std::size_t> subband_edges(std::size_t dim, std::size_t bands) {
    if (bands == 0 || bands > dim) throw Error(ErrorCode::InvalidBandCount, "band count must be in [1, dim]");
    const std::size_t base = dim / bands;
    const std::size_t extra = dim % bands;
    std::vector<std::size_t> edges{0};
    for (std::size_t b = 0; b < bands; ++b) edges.push_back(edges.back() + base + (b < extra ? 1 : 0));
    return edges;
}

std::vector<FeatureGrid> subband_split(const FeatureGrid& spec, std::size_t bands) {
    const auto edges = subband_edges(spec.dim(), bands);
    std::vector<FeatureGrid> out;
    out.reserve(bands);
    for (std::size_t b = 0; b < bands; ++b) {
        const std::size_t width = edges[b + 1] - edges[b];
        FeatureGrid band(spec.frames(), width);
        for (std::size_t t = 0; t < spec.frames(); ++t)
            for (std::size_t j = 0; j < width; ++j) band.at(t, j) = spec.at(t, edges[b] + j);
        out.push_back(std::move(band));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Time-axis interpolation

std::vector<InterpTap> interpolation_taps(std::size_t src_frames, std::size_t dst_frames) {
    if (src_frames == 0) throw Error(ErrorCode::InvalidLength, "cannot interpolate an empty grid");
    if (dst_frames == 0) throw Error(ErrorCode::InvalidLength, "target length must be >= 1");
    std::vector<InterpTap> taps(dst_frames);
    if (dst_frames == 1 || src_frames == 1) return taps;
    const auto span_src = static_cast<double>(src_frames - 1);
    const auto span_dst = static_cast<double>(dst_frames - 1);
    for (std::size_t i = 0; i < dst_frames; ++i) {
        const double pos = static_cast<double>(i) * span_src / span_dst;
        auto lo = static_cast<std::size_t>(std::floor(pos));
        if (lo >= src_frames - 1) {
            taps[i] = {src_frames - 1, src_frames - 1, 0.0};
            continue;
        }
        taps[i] = {lo, lo + 1, pos - static_cast<double>(lo)};
    }
    return taps;
}

FeatureGrid resample_frames(const FeatureGrid& grid, std::size_t target_frames) {
    const auto taps = interpolation_taps(grid.frames(), target_frames);
    FeatureGrid out(target_frames, grid.dim());
    for (std::size_t i = 0; i < target_frames; ++i) {
        const auto& tap = taps[i];
        auto dst = out.row(i);
        const auto a = grid.row(tap.lo);
        if (tap.weight == 0.0) {
            std::copy(a.begin(), a.end(), dst.begin());
            continue;
        }
        const auto b = grid.row(tap.hi);
        for (std::size_t j = 0; j < grid.dim(); ++j) dst[j] = (1.0 - tap.weight) * a[j] + tap.weight * b[j];
    }
    return out;
}

std::size_t downsampled_length(std::size_t frames, std::size_t k) {
    if (k == 0) throw Error(ErrorCode::InvalidStride, "stride must be >= 1");
    if (frames == 0) return 0;
    return std::max<std::size_t>(1, frames / k);
}

FeatureGrid downsample_frames(const FeatureGrid& grid, std::size_t k) {
    if (k == 0) throw Error(ErrorCode::InvalidStride, "stride must be >= 1");
    if (grid.frames() == 0) throw Error(ErrorCode::InvalidLength, "grid must have at least one frame");
    if (k == 1) return grid;
    return resample_frames(grid, downsampled_length(grid.frames(), k));
}

FeatureGrid upsample_frames(const FeatureGrid& grid, std::size_t target_frames) {
    if (target_frames == 0) throw Error(ErrorCode::InvalidLength, "target length must be >= 1");
    if (target_frames == grid.frames()) return grid;
    return resample_frames(grid, target_frames);
}

// ---------------------------------------------------------------------------
// Metrics

double snr_db(const AudioBuffer& ref, const AudioBuffer& est) {
    if (ref.size() != est.size()) throw Error(ErrorCode::LengthMismatch, "reference and estimate lengths differ");
    double signal = 0.0, noise = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        signal += ref.samples[i] * ref.samples[i];
        const double e = ref.samples[i] - est.samples[i];
        noise += e * e;
    }
    if (signal == 0.0) throw Error(ErrorCode::ZeroReference, "reference has zero power");
    constexpr double kCap = 100.0;
    if (noise == 0.0) return kCap;
    return std::min(kCap, 10.0 * std::log10(signal / noise));
}

double log_spectral_distance(const AudioBuffer& ref, const AudioBuffer& est, const SpectrogramConfig& cfg) {
    if (ref.size() != est.size()) throw Error(ErrorCode::LengthMismatch, "reference and estimate lengths differ");
    constexpr double kEps = 1e-8;
    const auto a = stft_magnitude(ref, cfg);
    const auto b = stft_magnitude(est, cfg);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double diff = std::log10(a.data()[i] + kEps) - std::log10(b.data()[i] + kEps);
        acc += diff * diff;
    }
    return std::sqrt(acc / static_cast<double>(a.data().size()));
}

}  // namespace llmcodec
