#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace gengan {

inline constexpr int kSampleRate = 16000;

/// Mono PCM audio. Samples are nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Scales so that max |sample| == `peak`. Silent input is returned unchanged.
Waveform peak_normalize(Waveform x, double peak = 1.0);

/// Band-limited (windowed-sinc) resampling to `target_rate`.
Waveform resample(const Waveform& x, int target_rate);

/// Reads a RIFF/WAVE file (PCM 8/16/24/32-bit or IEEE float, any channel
/// count). Channels are averaged to mono and the result is resampled to
/// 16 kHz. Missing file -> MissingAsset; malformed -> InvalidInput.
Waveform read_wav(const std::filesystem::path& path);

/// Writes 16-bit signed mono PCM at x.sample_rate. Samples are clipped.
void write_wav(const std::filesystem::path& path, const Waveform& x);

double rms(std::span<const double> x);

}  // namespace gengan
