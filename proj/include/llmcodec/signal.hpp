#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace llmcodec {

/// Mono waveform with samples nominally in [-1, 1].
struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate = 16000;

    std::size_t size() const { return samples.size(); }
};

/// Row-major T x d matrix of frame vectors.
class FeatureGrid {
public:
    FeatureGrid() = default;
    FeatureGrid(std::size_t frames, std::size_t dim, double fill = 0.0);
    FeatureGrid(std::size_t frames, std::size_t dim, std::vector<double> data);

    /// Builds a grid from nested rows; all rows must share one length.
    static FeatureGrid from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t frames() const { return frames_; }
    std::size_t dim() const { return dim_; }
    bool empty() const { return frames_ == 0; }

    double& at(std::size_t t, std::size_t j) { return data_[t * dim_ + j]; }
    double at(std::size_t t, std::size_t j) const { return data_[t * dim_ + j]; }

    std::span<double> row(std::size_t t) { return {data_.data() + t * dim_, dim_}; }
    std::span<const double> row(std::size_t t) const { return {data_.data() + t * dim_, dim_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    std::vector<std::vector<double>> to_rows() const;

    bool operator==(const FeatureGrid&) const = default;

private:
    std::size_t frames_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

enum class Window { Hann, Rectangular };

struct SpectrogramConfig {
    std::size_t n_fft = 512;
    std::size_t hop = 128;
    Window window = Window::Hann;
    std::size_t band_count = 4;

    /// Throws InvalidArgument / InvalidBandCount when the invariants fail.
    void validate() const;
    std::size_t bins() const { return n_fft / 2 + 1; }
};

// WAV I/O: RIFF/WAVE, 16-bit little-endian PCM, mono.
AudioBuffer load_wav(const std::filesystem::path& path);
void save_wav(const AudioBuffer& audio, const std::filesystem::path& path);

/// Analysis window of length n (periodic Hann, or all ones).
std::vector<double> make_window(Window window, std::size_t n);

/// Number of frames produced for `length` samples (input shorter than n_fft
/// is treated as n_fft long).
std::size_t stft_frame_count(std::size_t length, const SpectrogramConfig& cfg);

/// Windowed DFT magnitudes; frame t covers samples [t*hop, t*hop + n_fft).
FeatureGrid stft_magnitude(const AudioBuffer& audio, const SpectrogramConfig& cfg);
FeatureGrid stft_magnitude(std::span<const double> samples, const SpectrogramConfig& cfg);

/// Partitions columns into `bands` contiguous bands; the first dim % bands
/// bands are one column wider.
std::vector<FeatureGrid> subband_split(const FeatureGrid& spec, std::size_t bands);
/// Start column of every band plus a trailing end marker.
std::vector<std::size_t> subband_edges(std::size_t dim, std::size_t bands);

/// Output row i = (1 - weight) * src[lo] + weight * src[hi].
struct InterpTap {
    std::size_t lo = 0;
    std::size_t hi = 0;
    double weight = 0.0;
};
/// Endpoint-aligned taps: destination row i samples source position
/// i * (src - 1) / (dst - 1), or position 0 when dst == 1.
std::vector<InterpTap> interpolation_taps(std::size_t src_frames, std::size_t dst_frames);

/// Endpoint-aligned linear resampling of the time axis.
FeatureGrid resample_frames(const FeatureGrid& grid, std::size_t target_frames);
/// floor(T/k) frames (at least one), endpoint-aligned linear interpolation.
FeatureGrid downsample_frames(const FeatureGrid& grid, std::size_t k);
FeatureGrid upsample_frames(const FeatureGrid& grid, std::size_t target_frames);
/// Output length of downsample_frames for T input frames and stride k.
std::size_t downsampled_length(std::size_t frames, std::size_t k);

double snr_db(const AudioBuffer& ref, const AudioBuffer& est);
double log_spectral_distance(const AudioBuffer& ref, const AudioBuffer& est,
                             const SpectrogramConfig& cfg);

}  // namespace llmcodec
