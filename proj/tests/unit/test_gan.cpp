#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gengan/error.hpp"
#include "gengan/gan.hpp"
#include "gradcheck.hpp"

using namespace gengan;

namespace {

double oracle_bce(double t, double p) {
  p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
  return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
}

MelSpectrogram random_mel(int bands, int frames, std::uint64_t seed) {
  MelSpectrogram m;
  m.n_bands = bands;
  m.n_frames = frames;
  m.values.resize(std::size_t(bands) * frames);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : m.values) v = u(rng);
  return m;
}

double mean_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / double(a.size());
}

}  // namespace

TEST_CASE("soft label statistics") {
  const auto s = sample_soft_labels(10000, 0.5, 0.05, 123);
  const double n = double(s.raw.size());
  const double mean = std::accumulate(s.raw.begin(), s.raw.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : s.raw) {
    m2 += (v - mean) * (v - mean);
    m3 += (v - mean) * (v - mean) * (v - mean);
  }
  const double var = m2 / (n - 1.0);
  const double skew = (m3 / n) / std::pow(m2 / n, 1.5);
  CHECK(mean >= 0.48);
  CHECK(mean <= 0.52);
  CHECK(var >= 0.04);
  CHECK(var <= 0.06);
  CHECK(std::abs(skew) < 0.1);
  for (double v : s.values) {
    CHECK(v >= kSoftLabelMin);
    CHECK(v <= kSoftLabelMax);
  }
  for (std::size_t i = 0; i < s.raw.size(); ++i)
    CHECK(s.values[i] == std::clamp(s.raw[i], kSoftLabelMin, kSoftLabelMax));
}

TEST_CASE("soft label edge cases") {
  for (double v : sample_soft_labels(100, 0.5, 0.0, 1).values) CHECK(v == 0.5);
  CHECK_THROWS_AS(sample_soft_labels(10, 0.5, -0.01, 1), InvalidInput);
  CHECK_THROWS_AS(sample_soft_labels(0, 0.5, 0.05, 1), InvalidInput);
  CHECK(sample_soft_labels(50, 0.5, 0.05, 9).values == sample_soft_labels(50, 0.5, 0.05, 9).values);
  CHECK(sample_soft_labels(50, 0.5, 0.05, 9).values != sample_soft_labels(50, 0.5, 0.05, 10).values);
}

TEST_CASE("gender encoding") {
  CHECK(label_value(Gender::male) == 0.0);
  CHECK(label_value(Gender::female) == 1.0);
  CHECK(parse_gender('M') == Gender::male);
  CHECK(parse_gender('F') == Gender::female);
  CHECK(gender_code(Gender::female) == 'F');
  CHECK_THROWS_AS(parse_gender('X'), InvalidInput);
}

TEST_CASE("generator preserves shape and range") {
  const Generator g(GeneratorTopology{}, 5);
  const auto z = sample_noise(64, 1);
  for (int frames : {16, 64, 100}) {
    const auto m = random_mel(80, frames, frames);
    const auto out = generate(g, m, z, 0.5);
    CHECK(out.n_bands == 80);
    CHECK(out.n_frames == frames);
    for (double v : out.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK_THROWS_AS(generate(g, random_mel(40, 32, 1), z, 0.5), InvalidInput);
  CHECK_THROWS_AS(generate(g, random_mel(80, 32, 1), sample_noise(10, 1), 0.5), InvalidInput);
}

TEST_CASE("noise and conditioning change the output") {
  const Generator g(GeneratorTopology{}, 8);
  const auto m = random_mel(80, 64, 2);
  const auto a = generate(g, m, sample_noise(64, 1), 0.5);
  const auto b = generate(g, m, sample_noise(64, 2), 0.5);
  CHECK(mean_abs_diff(a.values, b.values) > 0.0);
  const auto c = generate(g, m, sample_noise(64, 1), 0.9);
  CHECK(mean_abs_diff(a.values, c.values) > 0.0);
  CHECK(generate(g, m, sample_noise(64, 1), 0.5).values == a.values);
}

TEST_CASE("parameter counts of the default networks") {
  Generator g(GeneratorTopology{}, 1);
  Discriminator d(DiscriminatorTopology{}, 1);
  CHECK(nn::parameter_count(g.params()) == 429568);
  CHECK(nn::parameter_count(d.params()) == 45073);
}

TEST_CASE("discriminator output range and determinism") {
  const Discriminator d(DiscriminatorTopology{}, 3);
  for (int i = 0; i < 5; ++i) {
    const auto m = random_mel(80, 40 + 17 * i, i);
    const double p = discriminate(d, m);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    CHECK(discriminate(d, m) == p);
  }
  CHECK_THROWS_AS(discriminate(d, random_mel(20, 64, 1)), InvalidInput);
}

TEST_CASE("generator loss examples") {
  std::vector<double> m(100, 0.3);
  auto l = generator_loss(m, m, 1.0, 1.0 - 1e-12, 0.0);
  CHECK(l.total == 0.0);
  std::vector<double> zeros(64, 0.0), halves(64, 0.5);
  l = generator_loss(zeros, halves, 0.0, 0.3, 0.0);
  CHECK(l.total == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(l.total == l.distortion);
  l = generator_loss(zeros, halves, 1.0, 0.3, 0.4);
  CHECK(l.adversarial == doctest::Approx(oracle_bce(1.0, 0.3)).epsilon(1e-12));
  CHECK(std::abs(l.total - (l.distortion + l.epsilon * l.adversarial)) < 1e-12);
  CHECK_THROWS_AS(generator_loss(zeros, halves, 1.0, 0.3, 1.5), InvalidInput);
  CHECK_THROWS_AS(generator_loss(zeros, std::vector<double>(3, 0.0), 1.0, 0.3, 0.1), InvalidInput);
}

TEST_CASE("discriminator loss examples") {
  auto l = discriminator_loss(1.0, 1.0 - 1e-12, 0.5, 0.5);
  CHECK(l.real_term == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(l.fake_term == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  l = discriminator_loss(1.0, 0.5, 0.5, 0.5);
  CHECK(l.total == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross-entropy matches the direct formula") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double y = (rng() & 1) ? 1.0 : 0.0, y_r = u(rng), y_n = u(rng), y_f = u(rng);
    const auto l = discriminator_loss(y, y_r, y_n, y_f);
    const double want = oracle_bce(y, y_r) + oracle_bce(y_n, y_f);
    CHECK(std::abs(l.total - want) <= 1e-9);
    CHECK(std::abs(l.total - (l.real_term + l.fake_term)) <= 1e-12);
    CHECK(std::abs(bce(y_n, y_f) - oracle_bce(y_n, y_f)) <= 1e-9);
  }
}

TEST_CASE("batch loss additivity") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Tensor a({3, 4, 8}), b({3, 4, 8});
    for (double& v : a.data) v = u(rng);
    for (double& v : b.data) v = u(rng);
    const std::vector<double> t{0.0, 1.0, 0.4}, p{u(rng), u(rng), u(rng)};
    const double eps = u(rng);
    const auto l = generator_loss_batch(a, b, t, p, eps);
    CHECK(std::abs(l.total - (l.distortion + eps * l.adversarial)) <= 1e-12);
    double bce_mean = 0.0;
    for (int k = 0; k < 3; ++k) bce_mean += oracle_bce(t[k], p[k]) / 3.0;
    CHECK(std::abs(l.adversarial - bce_mean) <= 1e-9);
  }
}

TEST_CASE("generator loss gradient matches finite differences") {
  auto p = test_support::make_tiny_problem(21);
  auto params = p.gen.params();
  test_support::generator_gradient(p);
  const auto r = test_support::check_gradients(params, [&] { return test_support::generator_objective(p); }, 50, 1);
  CHECK(r.parameters <= 5000);
  CHECK(r.coordinates == 50);
  MESSAGE("generator max relative error " << r.max_rel_error);
  CHECK(r.max_rel_error <= 1e-3);
}

TEST_CASE("discriminator loss gradient matches finite differences") {
  auto p = test_support::make_tiny_problem(33);
  const Tensor fake = p.gen.forward(p.real, p.noise, p.y_n);
  test_support::discriminator_gradient(p, fake);
  const auto r = test_support::check_gradients(
      p.disc.params(), [&] { return test_support::discriminator_objective(p, fake); }, 50, 2);
  CHECK(r.parameters <= 5000);
  MESSAGE("discriminator max relative error " << r.max_rel_error);
  CHECK(r.max_rel_error <= 1e-3);
}

TEST_CASE("parameter files round trip and name bad tensors") {
  Generator g(GeneratorTopology{.bands = 6, .base_channels = 4, .depth = 2, .kernel = 3, .noise_dim = 3}, 1);
  TensorContainer c;
  store_params(c, "generator/", g.params());
  Generator h(g.topology(), 2);
  load_params(c, "generator/", h.params());
  auto gp = g.params(), hp = h.params();
  for (std::size_t i = 0; i < gp.size(); ++i) CHECK(gp[i]->value.data == hp[i]->value.data);
  c.tensors.pop_back();
  CHECK_THROWS_AS(load_params(c, "generator/", h.params()), CheckpointError);
}
