#include "gengan/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "gengan/error.hpp"

namespace gengan {

namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const std::uint8_t* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put32(std::ofstream& out, std::uint32_t v) {
  const std::uint8_t b[4] = {std::uint8_t(v), std::uint8_t(v >> 8), std::uint8_t(v >> 16),
                             std::uint8_t(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
void put16(std::ofstream& out, std::uint16_t v) {
  const std::uint8_t b[2] = {std::uint8_t(v), std::uint8_t(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

Waveform peak_normalize(Waveform x, double peak) {
  double m = 0.0;
  for (double v : x.samples) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    const double g = peak / m;
    for (double& v : x.samples) v *= g;
  }
  return x;
}

Waveform resample(const Waveform& x, int target_rate) {
  if (target_rate <= 0 || x.sample_rate <= 0) throw InvalidInput("sample rate must be positive");
  if (x.sample_rate == target_rate || x.samples.empty()) {
    Waveform y = x;
    y.sample_rate = target_rate;
    return y;
  }
  const double ratio = static_cast<double>(target_rate) / x.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // relative to input Nyquist
  constexpr int kHalfTaps = 16;
  const double support = kHalfTaps / cutoff;
  const auto out_len = static_cast<std::size_t>(std::floor(x.samples.size() * ratio));
  Waveform y;
  y.sample_rate = target_rate;
  y.samples.resize(out_len);
  const auto n_in = static_cast<long>(x.samples.size());
  for (std::size_t i = 0; i < out_len; ++i) {
    const double t = i / ratio;
    const long lo = static_cast<long>(std::ceil(t - support));
    const long hi = static_cast<long>(std::floor(t + support));
    double acc = 0.0;
    for (long k = std::max(lo, 0L); k <= std::min(hi, n_in - 1); ++k) {
      const double d = t - static_cast<double>(k);
      const double w = 0.5 + 0.5 * std::cos(std::numbers::pi * d / support);  // Hann taper
      acc += x.samples[static_cast<std::size_t>(k)] * cutoff * sinc(cutoff * d) * w;
    }
    y.samples[i] = acc;
  }
  return y;
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingAsset(path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  const auto bad = [&](const std::string& why) {
    return InvalidInput(path.string() + ": " + why);
  };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw bad("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint8_t* hdr = buf.data() + pos;
    const std::size_t len = le32(hdr + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(len, buf.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (avail < 16) throw bad("short fmt chunk");
      format = le16(buf.data() + body);
      channels = le16(buf.data() + body + 2);
      rate = le32(buf.data() + body + 4);
      bits = le16(buf.data() + body + 14);
      if (format == 0xFFFE && avail >= 26) format = le16(buf.data() + body + 24);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (channels == 0 || rate == 0) throw bad("missing fmt chunk");
  if (!data) throw bad("missing data chunk");
  const bool is_float = format == 3;
  if (!(format == 1 || is_float)) throw bad("unsupported WAV encoding " + std::to_string(format));
  const std::size_t bytes = bits / 8;
  if (bytes == 0 || (is_float && bytes != 4 && bytes != 8) || (!is_float && bytes > 4))
    throw bad("unsupported bit depth " + std::to_string(bits));
  const std::size_t frames = data_len / (bytes * channels);

  Waveform x;
  x.sample_rate = static_cast<int>(rate);
  x.samples.assign(frames, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + (f * channels + c) * bytes;
      double v = 0.0;
      if (is_float && bytes == 4) {
        float s;
        std::memcpy(&s, p, 4);
        v = s;
      } else if (is_float) {
        std::memcpy(&v, p, 8);
      } else if (bytes == 1) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else {
        std::int32_t s = 0;
        for (std::size_t b = 0; b < bytes; ++b) s |= std::int32_t(p[b]) << (8 * b);
        const int shift = 32 - static_cast<int>(bytes) * 8;
        s = (s << shift) >> shift;  // sign-extend
        v = s / std::ldexp(1.0, static_cast<int>(bytes) * 8 - 1);
      }
      acc += v;
    }
    x.samples[f] = acc / channels;
  }
  for (double v : x.samples)
    if (!std::isfinite(v)) throw bad("non-finite sample");
  return x.sample_rate == kSampleRate ? x : resample(x, kSampleRate);
}

void write_wav(const std::filesystem::path& path, const Waveform& x) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open for writing: " + path.string());
  const auto n = static_cast<std::uint32_t>(x.samples.size());
  out.write("RIFF", 4);
  put32(out, 36 + n * 2);
  out.write("WAVEfmt ", 8);
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(x.sample_rate));
  put32(out, static_cast<std::uint32_t>(x.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.write("data", 4);
  put32(out, n * 2);
  for (double v : x.samples) {
    const double c = std::clamp(std::isfinite(v) ? v : 0.0, -1.0, 1.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
}

}  // namespace gengan
