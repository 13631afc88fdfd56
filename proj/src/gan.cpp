#include "gengan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gengan/error.hpp"

namespace gengan {

char gender_code(Gender g) { return g == Gender::female ? 'F' : 'M'; }

Gender parse_gender(char code) {
  switch (code) {
    case 'M': case 'm': return Gender::male;
    case 'F': case 'f': return Gender::female;
    default: throw InvalidInput(std::string("unknown gender code '") + code + "'");
  }
}

SoftLabels sample_soft_labels(std::size_t n, double mean, double variance, std::uint64_t seed) {
  if (n == 0) throw InvalidInput("sample_soft_labels: n must be at least 1");
  if (!(variance >= 0.0) || !std::isfinite(mean)) throw InvalidInput("sample_soft_labels: variance must be >= 0");
  SoftLabels out;
  out.raw.resize(n);
  out.values.resize(n);
  if (variance == 0.0) {
    std::fill(out.raw.begin(), out.raw.end(), mean);
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(mean, std::sqrt(variance));
    for (auto& v : out.raw) v = dist(rng);
  }
  for (std::size_t i = 0; i < n; ++i) out.values[i] = std::clamp(out.raw[i], kSoftLabelMin, kSoftLabelMax);
  return out;
}

std::vector<double> sample_noise(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> z(dim);
  for (auto& v : z) v = dist(rng);
  return z;
}

// --- Generator ----------------------------------------------------------------

Generator::Generator(const GeneratorTopology& topo, std::uint64_t seed) : topo_(topo) {
  if (topo.bands < 1 || topo.base_channels < 1 || topo.depth < 1 || topo.kernel < 1 ||
      topo.kernel % 2 == 0 || topo.noise_dim < 0)
    throw InvalidInput("invalid generator topology");
  const auto k = static_cast<std::size_t>(topo.kernel);
  const std::size_t pad = k / 2;
  const auto depth = static_cast<std::size_t>(topo.depth);
  for (std::size_t i = 0; i <= depth; ++i)
    enc_width_.push_back(static_cast<std::size_t>(topo.base_channels) << std::min<std::size_t>(i, 3));

  enc_.emplace_back("gen.enc0", topo.bands + 1, enc_width_[0], k, 1, pad);
  for (std::size_t i = 1; i <= depth; ++i)
    enc_.emplace_back("gen.enc" + std::to_string(i), enc_width_[i - 1], enc_width_[i], k, 2, pad);
  enc_act_.assign(enc_.size(), nn::LeakyRelu(0.2));

  dec_.resize(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t up_in = (i + 1 == depth) ? enc_width_[depth] + topo.noise_dim : enc_width_[i + 1];
    dec_[i] = nn::Conv1d("gen.dec" + std::to_string(i), up_in + enc_width_[i], enc_width_[i], k, 1, pad);
  }
  dec_act_.assign(dec_.size(), nn::LeakyRelu(0.2));
  head_ = nn::Conv1d("gen.head", enc_width_[0], topo.bands, 1, 1, 0);

  nn::Rng rng(seed);
  for (auto& c : enc_) c.init(rng);
  for (auto& c : dec_) c.init(rng);
  head_.init(rng);
}

std::vector<nn::Param*> Generator::params() {
  std::vector<nn::Param*> ps;
  for (auto& c : enc_) c.collect(ps);
  for (auto& c : dec_) c.collect(ps);
  head_.collect(ps);
  return ps;
}

Tensor Generator::forward(const Tensor& mel, const Tensor& noise, std::span<const double> cond) {
  const auto bands = static_cast<std::size_t>(topo_.bands);
  if (mel.rank() != 3 || mel.dim(1) != bands)
    throw InvalidInput("generator: expected (N, " + std::to_string(bands) + ", T) input");
  const std::size_t n = mel.dim(0), len = mel.dim(2);
  if (len == 0 || len % time_multiple() != 0)
    throw InvalidInput("generator: frame count must be a positive multiple of " +
                       std::to_string(time_multiple()));
  if (cond.size() != n) throw InvalidInput("generator: one conditioning label per item required");
  const auto dz = static_cast<std::size_t>(topo_.noise_dim);
  if (noise.rank() != 2 || noise.dim(0) != n || noise.dim(1) != dz)
    throw InvalidInput("generator: noise must be (N, noise_dim)");

  Tensor c({n, 1, len});
  for (std::size_t b = 0; b < n; ++b) std::fill_n(c.ptr() + b * len, len, cond[b]);
  Tensor h = nn::concat_channels(mel, c);

  std::vector<Tensor> skips;
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    h = enc_act_[i].forward(enc_[i].forward(h));
    skips.push_back(h);
  }
  const std::size_t lb = h.dim(2);
  Tensor zb({n, dz, lb});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t j = 0; j < dz; ++j) std::fill_n(zb.ptr() + (b * dz + j) * lb, lb, noise.data[b * dz + j]);
  h = nn::concat_channels(h, zb);

  for (std::size_t i = dec_.size(); i-- > 0;) {
    h = nn::concat_channels(nn::upsample2(h), skips[i]);
    h = dec_act_[i].forward(dec_[i].forward(h));
  }
  return squash_.forward(head_.forward(h));
}

void Generator::backward(const Tensor& d_out) {
  Tensor d = head_.backward(squash_.backward(d_out));
  const std::size_t depth = dec_.size();
  std::vector<Tensor> d_skip(enc_.size());
  for (std::size_t i = 0; i < depth; ++i) {
    d = dec_[i].backward(dec_act_[i].backward(d));
    Tensor d_up, d_s;
    const std::size_t up_channels = d.dim(1) - enc_width_[i];
    nn::split_channels(d, up_channels, d_up, d_s);
    d_skip[i] = std::move(d_s);
    d = nn::upsample2_backward(d_up);
  }
  // d is now the gradient of cat(bottleneck, noise); the noise part is dropped.
  Tensor d_bottleneck, d_noise;
  nn::split_channels(d, enc_width_[depth], d_bottleneck, d_noise);
  d = std::move(d_bottleneck);
  for (std::size_t i = enc_.size(); i-- > 0;) {
    if (i < depth) {
      for (std::size_t j = 0; j < d.size(); ++j) d.data[j] += d_skip[i].data[j];
    }
    d = enc_[i].backward(enc_act_[i].backward(d));
  }
}

// --- Discriminator -------------------------------------------------------------

Discriminator::Discriminator(const DiscriminatorTopology& topo, std::uint64_t seed) : topo_(topo) {
  if (topo.bands < 1 || topo.base_channels < 1 || topo.blocks < 1 || topo.kernel < 1 ||
      topo.kernel % 2 == 0)
    throw InvalidInput("invalid discriminator topology");
  const auto k = static_cast<std::size_t>(topo.kernel);
  std::size_t in = static_cast<std::size_t>(topo.bands);
  for (int i = 0; i < topo.blocks; ++i) {
    const std::size_t out = static_cast<std::size_t>(topo.base_channels) << std::min((i + 1) / 2, 3);
    convs_.emplace_back("disc.conv" + std::to_string(i), in, out, k, 2, k / 2);
    in = out;
  }
  acts_.assign(convs_.size(), nn::LeakyRelu(0.2));
  out_ = nn::Linear("disc.out", in, 1);
  nn::Rng rng(seed);
  for (auto& c : convs_) c.init(rng);
  out_.init(rng);
}

std::vector<nn::Param*> Discriminator::params() {
  std::vector<nn::Param*> ps;
  for (auto& c : convs_) c.collect(ps);
  out_.collect(ps);
  return ps;
}

std::vector<double> Discriminator::forward(const Tensor& mel) {
  if (mel.rank() != 3 || mel.dim(1) != static_cast<std::size_t>(topo_.bands) || mel.dim(2) == 0)
    throw InvalidInput("discriminator: expected (N, " + std::to_string(topo_.bands) + ", T) input");
  Tensor h = mel;
  for (std::size_t i = 0; i < convs_.size(); ++i) h = acts_[i].forward(convs_[i].forward(h));
  pooled_length_ = h.dim(2);
  const Tensor p = squash_.forward(out_.forward(nn::mean_over_time(h)));
  return p.data;
}

Tensor Discriminator::backward(std::span<const double> d_prob) {
  Tensor d({d_prob.size(), 1});
  std::copy(d_prob.begin(), d_prob.end(), d.data.begin());
  d = nn::mean_over_time_backward(out_.backward(squash_.backward(d)), pooled_length_);
  for (std::size_t i = convs_.size(); i-- > 0;) d = convs_[i].backward(acts_[i].backward(d));
  return d;
}

// --- single-spectrogram inference -------------------------------------------

namespace {

Tensor to_batch(const MelSpectrogram& m, std::size_t padded_frames) {
  const auto bands = static_cast<std::size_t>(m.n_bands);
  const auto frames = static_cast<std::size_t>(m.n_frames);
  Tensor t({1, bands, padded_frames});
  for (std::size_t b = 0; b < bands; ++b)
    for (std::size_t f = 0; f < padded_frames; ++f)
      t.at(0, b, f) = m.at(static_cast<int>(b), static_cast<int>(std::min(f, frames - 1)));
  return t;
}

}  // namespace

MelSpectrogram generate(const Generator& g, const MelSpectrogram& m, std::span<const double> noise,
                        double y_cond) {
  validate(m);
  Generator model = g;
  if (m.n_bands != model.topology().bands)
    throw InvalidInput("generate: spectrogram has " + std::to_string(m.n_bands) + " bands, model expects " +
                       std::to_string(model.topology().bands));
  if (noise.size() != static_cast<std::size_t>(model.topology().noise_dim))
    throw InvalidInput("generate: noise vector has wrong length");
  const std::size_t mult = model.time_multiple();
  const std::size_t frames = static_cast<std::size_t>(m.n_frames);
  const std::size_t padded = (frames + mult - 1) / mult * mult;
  Tensor z({1, noise.size()});
  std::copy(noise.begin(), noise.end(), z.data.begin());
  const double cond[1] = {y_cond};
  const Tensor out = model.forward(to_batch(m, padded), z, cond);
  MelSpectrogram r = m;
  for (int b = 0; b < m.n_bands; ++b)
    for (int f = 0; f < m.n_frames; ++f) r.at(b, f) = out.at(0, std::size_t(b), std::size_t(f));
  return r;
}

double discriminate(const Discriminator& d, const MelSpectrogram& m) {
  validate(m);
  Discriminator model = d;
  if (m.n_bands != model.topology().bands) throw InvalidInput("discriminate: band count mismatch");
  return model.forward(to_batch(m, static_cast<std::size_t>(m.n_frames)))[0];
}

// --- losses -------------------------------------------------------------------

double bce(double target, double prob) {
  const double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

double bce_grad(double target, double prob) {
  if (prob < kProbClamp || prob > 1.0 - kProbClamp) return 0.0;
  return -target / prob + (1.0 - target) / (1.0 - prob);
}

std::string to_string(GeneratorTarget t) {
  return t == GeneratorTarget::ambiguous ? "ambiguous" : "ground_truth";
}

GeneratorTarget parse_generator_target(const std::string& s) {
  if (s == "ground_truth") return GeneratorTarget::ground_truth;
  if (s == "ambiguous") return GeneratorTarget::ambiguous;
  throw InvalidInput("generator_target must be ground_truth or ambiguous, got '" + s + "'");
}

namespace {

void check_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidInput("epsilon must lie in [0, 1]");
}

double mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw InvalidInput("distortion: spectrogram shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

LossBreakdown generator_loss(std::span<const double> m, std::span<const double> m_prime, double target,
                             double y_f, double epsilon) {
  check_epsilon(epsilon);
  LossBreakdown l;
  l.distortion = mse(m, m_prime);
  l.adversarial = bce(target, y_f);
  l.epsilon = epsilon;
  l.total = l.distortion + epsilon * l.adversarial;
  return l;
}

LossBreakdown generator_loss(const MelSpectrogram& m, const MelSpectrogram& m_prime, Gender y, double y_f,
                             double epsilon) {
  if (m.n_bands != m_prime.n_bands || m.n_frames != m_prime.n_frames)
    throw InvalidInput("distortion: spectrogram shapes differ");
  return generator_loss(m.values, m_prime.values, label_value(y), y_f, epsilon);
}

LossBreakdown discriminator_loss(double y, double y_r, double y_n, double y_f) {
  LossBreakdown l;
  l.real_term = bce(y, y_r);
  l.fake_term = bce(y_n, y_f);
  l.adversarial = l.real_term + l.fake_term;
  l.epsilon = 1.0;
  l.total = l.adversarial;
  return l;
}

LossBreakdown generator_loss_batch(const Tensor& m, const Tensor& m_prime, std::span<const double> targets,
                                   std::span<const double> y_f, double epsilon) {
  check_epsilon(epsilon);
  if (m.shape != m_prime.shape) throw InvalidInput("distortion: spectrogram shapes differ");
  if (targets.size() != y_f.size() || targets.empty()) throw InvalidInput("generator loss: label count mismatch");
  LossBreakdown l;
  l.distortion = mse(m.span(), m_prime.span());
  for (std::size_t i = 0; i < targets.size(); ++i) l.adversarial += bce(targets[i], y_f[i]);
  l.adversarial /= static_cast<double>(targets.size());
  l.epsilon = epsilon;
  l.total = l.distortion + epsilon * l.adversarial;
  return l;
}

LossBreakdown discriminator_loss_batch(std::span<const double> y, std::span<const double> y_r,
                                       std::span<const double> y_n, std::span<const double> y_f) {
  const std::size_t n = y.size();
  if (n == 0 || y_r.size() != n || y_n.size() != n || y_f.size() != n)
    throw InvalidInput("discriminator loss: label count mismatch");
  LossBreakdown l;
  for (std::size_t i = 0; i < n; ++i) {
    l.real_term += bce(y[i], y_r[i]);
    l.fake_term += bce(y_n[i], y_f[i]);
  }
  l.real_term /= static_cast<double>(n);
  l.fake_term /= static_cast<double>(n);
  l.adversarial = l.real_term + l.fake_term;
  l.total = l.adversarial;
  return l;
}

// --- parameter (de)serialization ----------------------------------------------

void store_params(TensorContainer& c, const std::string& prefix, const std::vector<nn::Param*>& ps) {
  for (const auto* p : ps) c.put(prefix + p->name, p->value, DType::f64);
}

void load_params(const TensorContainer& c, const std::string& prefix, const std::vector<nn::Param*>& ps) {
  for (auto* p : ps) {
    const auto* t = c.find(prefix + p->name);
    if (!t) throw CheckpointError("tensor '" + prefix + p->name + "' missing from checkpoint");
    if (t->value.shape != p->value.shape)
      throw CheckpointError("tensor '" + prefix + p->name + "' has an unexpected shape");
    p->value = t->value;
  }
}

}  // namespace gengan
