#pragma once

#include <complex>
#include <filesystem>
#include <vector>

#include "gengan/audio.hpp"

namespace gengan {

enum class PaddingMode {
  reflect,  // fft_size/2 reflected samples on both ends (centered frames)
  none,     // frames start at sample 0; trailing partial frame dropped
};

/// Analysis parameters shared by the forward transform and the inversion.
struct FrontendConfig {
  int sample_rate = kSampleRate;
  int fft_size = 1024;
  int hop = 256;
  int n_bands = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
  PaddingMode padding = PaddingMode::reflect;
  /// Log-magnitude mapped to 1.0. Audio is peak-normalized before analysis
  /// everywhere in the pipeline, so a fixed ceiling stands for the corpus peak.
  double ceiling_db = 50.0;
  double dynamic_range_db = 80.0;
};

struct NormalizationStats {
  double floor_db = -30.0;
  double ceiling_db = 50.0;
};

/// Triangular mel-spaced weights, one row per band over fft_size/2+1 bins.
struct MelFilterbank {
  int n_bands = 0;
  int n_bins = 0;
  std::vector<double> weights;       // n_bands x n_bins, row-major
  std::vector<double> band_centers;  // Hz

  double weight(int band, int bin) const { return weights[std::size_t(band) * n_bins + bin]; }
};

/// (bands x frames) tensor with entries in [0, 1].
struct MelSpectrogram {
  int n_bands = 0;
  int n_frames = 0;
  int hop = 256;
  int fft_size = 1024;
  NormalizationStats stats;
  std::vector<double> values;  // row-major, band-major

  double& at(int band, int frame) { return values[std::size_t(band) * n_frames + frame]; }
  double at(int band, int frame) const { return values[std::size_t(band) * n_frames + frame]; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

MelFilterbank design_filterbank(int sample_rate, int fft_size, int n_bands, double f_min,
                                double f_max);

/// Number of frames produced for `n_samples` input samples.
int frame_count(std::size_t n_samples, const FrontendConfig& cfg = {});

using Spectrum = std::vector<std::vector<std::complex<double>>>;  // [frame][bin]

Spectrum stft(std::span<const double> x, const FrontendConfig& cfg = {});
/// Weighted overlap-add inverse; `length` trims/pads the output.
std::vector<double> istft(const Spectrum& frames, std::size_t length, const FrontendConfig& cfg = {});

MelSpectrogram mel_spectrogram(const Waveform& x, const FrontendConfig& cfg = {});

/// Log-magnitude (dB) of every cell, recovered through the stored stats.
std::vector<double> denormalize(const MelSpectrogram& m);
/// Maps dB values onto [0,1] with `stats` (clipping outside the range).
std::vector<double> normalize(std::span<const double> db, const NormalizationStats& stats);

/// Mel-to-linear lifting by non-negative least squares, then iterative
/// phase reconstruction (fast Griffin-Lim) for `iterations` rounds.
Waveform invert_mel(const MelSpectrogram& m, int iterations = 64, const FrontendConfig& cfg = {});

/// Throws InvalidInput when a spectrogram violates the [0,1] / shape rules.
void validate(const MelSpectrogram& m);

/// Writes `path` (tensor container with one float32 tensor "mel") and the
/// JSON sidecar `path` + ".json" holding the normalization stats.
void save_mel(const std::filesystem::path& path, const MelSpectrogram& m);
MelSpectrogram load_mel(const std::filesystem::path& path);

}  // namespace gengan
