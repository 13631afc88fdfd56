#pragma once

// Minimal layer library for 1-D convolutional networks over (N, C, L)
// tensors. Every layer caches what its backward pass needs during forward;
// backward() accumulates parameter gradients and returns the input gradient.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gengan/tensor.hpp"

namespace gengan::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}
};

/// Non-trainable state that still has to be checkpointed.
struct Buffer {
  std::string name;
  Tensor value;
};

using Rng = std::mt19937_64;

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
         std::size_t pad);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Param*>& out) { out.push_back(&weight); out.push_back(&bias); }
  std::size_t out_length(std::size_t in_length) const;

  std::size_t in_channels = 0, out_channels = 0, kernel = 1, stride = 1, pad = 0;
  Param weight;  // (out, in, kernel)
  Param bias;    // (out)

 private:
  std::vector<std::size_t> in_shape_;
  std::vector<double> cols_;  // (in*kernel, N*Lout)
};

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);  // (N, in) -> (N, out)
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Param*>& out) { out.push_back(&weight); out.push_back(&bias); }

  Param weight;  // (out, in)
  Param bias;    // (out)

 private:
  Tensor x_;
};

class LeakyRelu {
 public:
  explicit LeakyRelu(double slope = 0.2) : slope_(slope) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  double slope_;
  Tensor x_;
};

class Sigmoid {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor y_;
};

class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  BatchNorm1d(std::string name, std::size_t channels);

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);
  void collect(std::vector<Param*>& out) { out.push_back(&gamma); out.push_back(&beta); }
  void buffers(std::vector<Buffer*>& out) { out.push_back(&running_mean); out.push_back(&running_var); }

  Param gamma, beta;
  Buffer running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

 private:
  Tensor xhat_;
  std::vector<double> inv_std_;
};

class MaxPool1d {
 public:
  Tensor forward(const Tensor& x);  // window 2, stride 2, floor
  Tensor backward(const Tensor& dy) const;

 private:
  std::vector<std::size_t> in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Nearest-neighbour x2 upsampling along L.
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& dy);

/// (N, C, L) -> (N, C) mean over L, and its adjoint.
Tensor mean_over_time(const Tensor& x);
Tensor mean_over_time_backward(const Tensor& dy, std::size_t length);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, std::size_t first, Tensor& da, Tensor& db);

/// Adaptive-moment optimizer over an ordered parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Param*>& params);
  std::uint64_t steps() const { return t_; }

  // Moments in parameter order, for checkpointing.
  std::vector<Tensor> first, second;
  std::uint64_t t_ = 0;

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

void zero_grad(const std::vector<Param*>& params);
std::size_t parameter_count(const std::vector<Param*>& params);
bool all_finite(const std::vector<Param*>& params);

}  // namespace gengan::nn
