#include "gengan/frontend.hpp"

#include <Eigen/Dense>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include "json.hpp"
#include <numbers>
#include <random>

#include "gengan/container.hpp"
#include "gengan/error.hpp"

namespace gengan {

namespace {

constexpr double kMinMagnitude = 1e-12;

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Real FFT of fixed size with its own buffers. Only planning touches FFTW's
// global state, so it is serialized; execution is reentrant.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    real_ = fftw_alloc_real(static_cast<std::size_t>(n));
    complex_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(n, real_, complex_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(n, complex_, real_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(forward_);
      fftw_destroy_plan(inverse_);
    }
    fftw_free(real_);
    fftw_free(complex_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void forward(const double* in, std::vector<std::complex<double>>& out) {
    std::memcpy(real_, in, sizeof(double) * std::size_t(n_));
    fftw_execute(forward_);
    out.resize(std::size_t(n_ / 2 + 1));
    std::memcpy(static_cast<void*>(out.data()), complex_, sizeof(fftw_complex) * out.size());
  }
  // Scaled by 1/n so that inverse(forward(x)) == x.
  void inverse(const std::vector<std::complex<double>>& in, double* out) {
    std::memcpy(complex_, static_cast<const void*>(in.data()), sizeof(fftw_complex) * std::size_t(n_ / 2 + 1));
    fftw_execute(inverse_);
    const double scale = 1.0 / n_;
    for (int i = 0; i < n_; ++i) out[i] = real_[i] * scale;
  }

 private:
  int n_;
  double* real_;
  fftw_complex* complex_;
  fftw_plan forward_, inverse_;
};

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

std::vector<double> pad_signal(std::span<const double> x, const FrontendConfig& cfg) {
  if (cfg.padding == PaddingMode::none) return {x.begin(), x.end()};
  const auto pad = static_cast<std::size_t>(cfg.fft_size / 2);
  const std::size_t n = x.size();
  std::vector<double> out(n + 2 * pad, 0.0);
  if (n < 2) {
    if (n == 1) std::fill(out.begin(), out.end(), x[0]);
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    // reflect without repeating the edge sample
    long j = static_cast<long>(i) - static_cast<long>(pad);
    const long last = static_cast<long>(n) - 1;
    while (j < 0 || j > last) {
      if (j < 0) j = -j;
      if (j > last) j = 2 * last - j;
    }
    out[i] = x[static_cast<std::size_t>(j)];
  }
  return out;
}

void check_config(const FrontendConfig& cfg) {
  if (cfg.fft_size < 16 || cfg.hop < 1 || cfg.hop > cfg.fft_size || cfg.sample_rate <= 0)
    throw InvalidInput("invalid STFT configuration");
}

// Per-frame NNLS by multiplicative updates: s <- s * (F^T m) / (F^T F s).
Eigen::MatrixXd lift_to_linear(const MelFilterbank& fb, const Eigen::MatrixXd& mel) {
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> f(
      fb.weights.data(), fb.n_bands, fb.n_bins);
  const Eigen::MatrixXd ftm = f.transpose() * mel;
  // Start from the band-normalized back-projection.
  Eigen::VectorXd colsum = f.colwise().sum().transpose();
  Eigen::MatrixXd s = ftm;
  for (Eigen::Index k = 0; k < s.rows(); ++k) {
    const double d = colsum(k) > 0 ? colsum(k) : 1.0;
    s.row(k) /= d;
  }
  constexpr int kIterations = 60;
  for (int it = 0; it < kIterations; ++it) {
    const Eigen::MatrixXd denom = f.transpose() * (f * s);
    s = s.cwiseProduct(ftm).cwiseQuotient(denom.array().max(1e-12).matrix());
  }
  return s;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank design_filterbank(int sample_rate, int fft_size, int n_bands, double f_min,
                                double f_max) {
  if (sample_rate <= 0 || fft_size < 2 || n_bands < 1)
    throw InvalidInput("filterbank needs positive sample rate, fft size and band count");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0))
    throw InvalidInput("filterbank requires 0 <= f_min < f_max <= sample_rate/2");
  MelFilterbank fb;
  fb.n_bands = n_bands;
  fb.n_bins = fft_size / 2 + 1;
  fb.weights.assign(std::size_t(n_bands) * fb.n_bins, 0.0);
  const double lo = hz_to_mel(f_min);
  const double hi = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<std::size_t>(n_bands) + 2);
  for (int i = 0; i < n_bands + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (n_bands + 1));
  fb.band_centers.assign(edges.begin() + 1, edges.end() - 1);
  const double bin_hz = static_cast<double>(sample_rate) / fft_size;
  for (int b = 0; b < n_bands; ++b) {
    const double left = edges[b], center = edges[b + 1], right = edges[b + 2];
    double row_sum = 0.0;
    for (int k = 0; k < fb.n_bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > left && f <= center) w = (f - left) / (center - left);
      else if (f > center && f < right) w = (right - f) / (right - center);
      fb.weights[std::size_t(b) * fb.n_bins + k] = w;
      row_sum += w;
    }
    if (row_sum <= 0.0) {
      // Band narrower than one bin: fall back to the nearest bin.
      const int k = std::clamp(static_cast<int>(std::lround(center / bin_hz)), 0, fb.n_bins - 1);
      fb.weights[std::size_t(b) * fb.n_bins + k] = 1.0;
    }
  }
  return fb;
}

int frame_count(std::size_t n_samples, const FrontendConfig& cfg) {
  const std::size_t padded =
      n_samples + (cfg.padding == PaddingMode::reflect ? std::size_t(cfg.fft_size) : 0);
  if (padded < std::size_t(cfg.fft_size)) return 0;
  return 1 + static_cast<int>((padded - cfg.fft_size) / cfg.hop);
}

Spectrum stft(std::span<const double> x, const FrontendConfig& cfg) {
  check_config(cfg);
  const auto padded = pad_signal(x, cfg);
  const int n_frames = frame_count(x.size(), cfg);
  const auto window = hann(cfg.fft_size);
  RealFft fft(cfg.fft_size);
  Spectrum out(static_cast<std::size_t>(std::max(n_frames, 0)));
  std::vector<double> frame(static_cast<std::size_t>(cfg.fft_size));
  for (int t = 0; t < n_frames; ++t) {
    const std::size_t start = std::size_t(t) * cfg.hop;
    for (int i = 0; i < cfg.fft_size; ++i) frame[i] = padded[start + i] * window[i];
    fft.forward(frame.data(), out[t]);
  }
  return out;
}

std::vector<double> istft(const Spectrum& frames, std::size_t length, const FrontendConfig& cfg) {
  check_config(cfg);
  const auto window = hann(cfg.fft_size);
  const std::size_t n_frames = frames.size();
  const std::size_t total = n_frames == 0 ? 0 : (n_frames - 1) * cfg.hop + cfg.fft_size;
  std::vector<double> acc(total, 0.0), norm(total, 0.0);
  RealFft fft(cfg.fft_size);
  std::vector<double> frame(static_cast<std::size_t>(cfg.fft_size));
  for (std::size_t t = 0; t < n_frames; ++t) {
    fft.inverse(frames[t], frame.data());
    const std::size_t start = t * cfg.hop;
    for (int i = 0; i < cfg.fft_size; ++i) {
      acc[start + i] += frame[i] * window[i];
      norm[start + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < total; ++i)
    if (norm[i] > 1e-8) acc[i] /= norm[i];
  const std::size_t offset = cfg.padding == PaddingMode::reflect ? cfg.fft_size / 2 : 0;
  std::vector<double> out(length, 0.0);
  for (std::size_t i = 0; i < length && offset + i < total; ++i) out[i] = acc[offset + i];
  return out;
}

std::vector<double> normalize(std::span<const double> db, const NormalizationStats& stats) {
  const double range = stats.ceiling_db - stats.floor_db;
  std::vector<double> out(db.size());
  for (std::size_t i = 0; i < db.size(); ++i)
    out[i] = std::clamp((db[i] - stats.floor_db) / range, 0.0, 1.0);
  return out;
}

std::vector<double> denormalize(const MelSpectrogram& m) {
  const double range = m.stats.ceiling_db - m.stats.floor_db;
  std::vector<double> out(m.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = m.stats.floor_db + m.values[i] * range;
  return out;
}

MelSpectrogram mel_spectrogram(const Waveform& x, const FrontendConfig& cfg) {
  check_config(cfg);
  if (x.samples.empty()) throw InvalidInput("empty waveform");
  if (x.samples.size() < std::size_t(cfg.fft_size))
    throw InvalidInput("waveform shorter than one analysis window");
  for (double v : x.samples)
    if (!std::isfinite(v)) throw InvalidInput("non-finite sample in waveform");
  const auto fb = design_filterbank(cfg.sample_rate, cfg.fft_size, cfg.n_bands, cfg.f_min, cfg.f_max);
  const auto spec = stft(x.samples, cfg);

  MelSpectrogram m;
  m.n_bands = cfg.n_bands;
  m.n_frames = static_cast<int>(spec.size());
  m.hop = cfg.hop;
  m.fft_size = cfg.fft_size;
  m.stats = {cfg.ceiling_db - cfg.dynamic_range_db, cfg.ceiling_db};
  std::vector<double> db(std::size_t(m.n_bands) * m.n_frames);
  std::vector<double> mag(static_cast<std::size_t>(fb.n_bins));
  for (int t = 0; t < m.n_frames; ++t) {
    for (int k = 0; k < fb.n_bins; ++k) mag[k] = std::abs(spec[t][k]);
    for (int b = 0; b < m.n_bands; ++b) {
      double s = 0.0;
      const double* w = fb.weights.data() + std::size_t(b) * fb.n_bins;
      for (int k = 0; k < fb.n_bins; ++k) s += w[k] * mag[k];
      db[std::size_t(b) * m.n_frames + t] = 20.0 * std::log10(std::max(s, kMinMagnitude));
    }
  }
  m.values = normalize(db, m.stats);
  return m;
}

void validate(const MelSpectrogram& m) {
  if (m.n_bands < 1 || m.n_frames < 1 || m.values.size() != std::size_t(m.n_bands) * m.n_frames)
    throw InvalidInput("spectrogram shape is inconsistent");
  if (!(m.stats.ceiling_db > m.stats.floor_db)) throw InvalidInput("invalid normalization stats");
  for (double v : m.values)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("spectrogram value outside [0,1]");
}

Waveform invert_mel(const MelSpectrogram& m, int iterations, const FrontendConfig& base) {
  validate(m);
  if (iterations < 1) throw InvalidInput("invert_mel needs at least one iteration");
  FrontendConfig cfg = base;
  cfg.n_bands = m.n_bands;
  cfg.hop = m.hop;
  cfg.fft_size = m.fft_size;
  check_config(cfg);
  const auto fb = design_filterbank(cfg.sample_rate, cfg.fft_size, cfg.n_bands, cfg.f_min, cfg.f_max);

  // Undo the log compression; the floor maps to exactly zero magnitude.
  const auto db = denormalize(m);
  const double floor_mag = std::pow(10.0, m.stats.floor_db / 20.0);
  Eigen::MatrixXd mel(m.n_bands, m.n_frames);
  for (int b = 0; b < m.n_bands; ++b)
    for (int t = 0; t < m.n_frames; ++t)
      mel(b, t) = std::max(std::pow(10.0, db[std::size_t(b) * m.n_frames + t] / 20.0) - floor_mag, 0.0);
  const Eigen::MatrixXd linear = lift_to_linear(fb, mel);

  const std::size_t length = std::size_t(m.n_frames - 1) * cfg.hop +
                             (cfg.padding == PaddingMode::reflect ? 0 : std::size_t(cfg.fft_size));
  const auto n_frames = static_cast<std::size_t>(m.n_frames);
  const auto n_bins = static_cast<std::size_t>(fb.n_bins);

  // Fixed-seed initial phases keep the inversion deterministic.
  std::mt19937_64 rng(0x6d656cULL);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  Spectrum current(n_frames, std::vector<std::complex<double>>(n_bins));
  for (std::size_t t = 0; t < n_frames; ++t)
    for (std::size_t k = 0; k < n_bins; ++k)
      current[t][k] = std::polar(linear(Eigen::Index(k), Eigen::Index(t)), phase(rng));

  constexpr double kMomentum = 0.99;
  Spectrum previous = current;
  std::vector<double> signal = istft(current, length, cfg);
  for (int it = 0; it < iterations; ++it) {
    auto rebuilt = stft(signal, cfg);
    rebuilt.resize(n_frames, std::vector<std::complex<double>>(n_bins));
    for (std::size_t t = 0; t < n_frames; ++t) {
      for (std::size_t k = 0; k < n_bins; ++k) {
        const auto projected = rebuilt[t][k];
        const auto accelerated = projected + kMomentum * (projected - previous[t][k]);
        previous[t][k] = projected;
        const double a = std::abs(accelerated);
        const auto unit = a > kMinMagnitude ? accelerated / a : std::complex<double>(1.0, 0.0);
        current[t][k] = linear(Eigen::Index(k), Eigen::Index(t)) * unit;
      }
    }
    signal = istft(current, length, cfg);
  }
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples = std::move(signal);
  for (double& v : out.samples) v = std::clamp(v, -1.0, 1.0);
  return out;
}

void save_mel(const std::filesystem::path& path, const MelSpectrogram& m) {
  validate(m);
  TensorContainer c;
  nlohmann::json meta = {{"kind", "mel"}, {"hop", m.hop}, {"fft_size", m.fft_size}};
  c.metadata = meta.dump();
  Tensor t({std::size_t(m.n_bands), std::size_t(m.n_frames)});
  t.data = m.values;
  c.put("mel", std::move(t), DType::f32);
  write_container(path, c);
  nlohmann::json side = {{"floor_db", m.stats.floor_db},
                         {"ceiling_db", m.stats.ceiling_db},
                         {"hop", m.hop},
                         {"fft_size", m.fft_size},
                         {"n_bands", m.n_bands},
                         {"n_frames", m.n_frames}};
  std::ofstream(path.string() + ".json") << side.dump(2) << '\n';
}

MelSpectrogram load_mel(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingAsset(path.string());
  const auto c = read_container(path);
  const auto& t = c.get("mel");
  if (t.rank() != 2) throw InvalidInput("mel tensor must be two-dimensional");
  MelSpectrogram m;
  m.n_bands = static_cast<int>(t.dim(0));
  m.n_frames = static_cast<int>(t.dim(1));
  m.values = t.data;
  const std::string side_path = path.string() + ".json";
  std::ifstream side_in(side_path);
  if (!side_in) throw MissingAsset(side_path);
  nlohmann::json side;
  try {
    side_in >> side;
    m.stats = {side.at("floor_db").get<double>(), side.at("ceiling_db").get<double>()};
    m.hop = side.at("hop").get<int>();
    m.fft_size = side.at("fft_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(side_path + ": " + e.what());
  }
  for (double& v : m.values) v = std::clamp(v, 0.0, 1.0);
  return m;
}

}  // namespace gengan
