#pragma once

// Finite-difference checks of the generator and discriminator loss
// gradients through small networks.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gengan/gan.hpp"

namespace test_support {

struct TinyProblem {
  gengan::Generator gen;
  gengan::Discriminator disc;
  gengan::Tensor real;
  gengan::Tensor noise;
  std::vector<double> y, y_n;
  double epsilon = 0.5;
};

inline TinyProblem make_tiny_problem(std::uint64_t seed) {
  using namespace gengan;
  TinyProblem p;
  p.gen = Generator({.bands = 6, .base_channels = 4, .depth = 2, .kernel = 3, .noise_dim = 3}, seed);
  p.disc = Discriminator({.bands = 6, .base_channels = 4, .blocks = 2, .kernel = 3}, seed + 1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  p.real = Tensor({2, 6, 8});
  for (double& v : p.real.data) v = u(rng);
  p.noise = Tensor({2, 3});
  std::normal_distribution<double> g;
  for (double& v : p.noise.data) v = g(rng);
  p.y = {0.0, 1.0};
  p.y_n = {0.42, 0.61};
  return p;
}

inline double generator_objective(TinyProblem& p) {
  const auto fake = p.gen.forward(p.real, p.noise, p.y_n);
  const auto y_f = p.disc.forward(fake);
  return gengan::generator_loss_batch(p.real, fake, p.y, y_f, p.epsilon).total;
}

/// Analytic gradient of the generator loss w.r.t. the generator parameters,
/// composed from the distortion term and the discriminator input gradient.
inline void generator_gradient(TinyProblem& p) {
  using namespace gengan;
  const auto params = p.gen.params();
  nn::zero_grad(params);
  const auto fake = p.gen.forward(p.real, p.noise, p.y_n);
  const auto y_f = p.disc.forward(fake);
  const std::size_t n = y_f.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = p.epsilon * bce_grad(p.y[i], y_f[i]) / double(n);
  Tensor d_fake = p.disc.backward(d);
  const double scale = 2.0 / double(fake.size());
  for (std::size_t i = 0; i < fake.size(); ++i) d_fake.data[i] += scale * (fake.data[i] - p.real.data[i]);
  p.gen.backward(d_fake);
}

inline double discriminator_objective(TinyProblem& p, const gengan::Tensor& fake) {
  const auto y_r = p.disc.forward(p.real);
  const auto y_f = p.disc.forward(fake);
  return gengan::discriminator_loss_batch(p.y, y_r, p.y_n, y_f).total;
}

inline void discriminator_gradient(TinyProblem& p, const gengan::Tensor& fake) {
  using namespace gengan;
  nn::zero_grad(p.disc.params());
  const auto y_r = p.disc.forward(p.real);
  std::vector<double> d(y_r.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = bce_grad(p.y[i], y_r[i]) / double(d.size());
  p.disc.backward(d);
  const auto y_f = p.disc.forward(fake);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = bce_grad(p.y_n[i], y_f[i]) / double(d.size());
  p.disc.backward(d);
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t parameters = 0;
};

/// Compares stored analytic gradients against central differences on
/// `samples` random coordinates. The relative error uses a small absolute
/// floor so coordinates with near-zero gradient do not dominate.
template <class Objective>
GradCheckResult check_gradients(const std::vector<gengan::nn::Param*>& params, Objective&& f,
                                std::size_t samples, std::uint64_t seed, double step = 1e-5) {
  GradCheckResult r;
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (std::size_t i = 0; i < params[p]->value.size(); ++i) coords.emplace_back(p, i);
  r.parameters = coords.size();
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min(samples, coords.size()));
  for (auto [p, i] : coords) {
    const double analytic = params[p]->grad.data[i];
    double& w = params[p]->value.data[i];
    const double saved = w;
    w = saved + step;
    const double up = f();
    w = saved - step;
    const double down = f();
    w = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    r.max_rel_error = std::max(r.max_rel_error, rel);
  }
  r.coordinates = coords.size();
  return r;
}

}  // namespace test_support
