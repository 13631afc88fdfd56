#include "gengan/nn.hpp"

#include <Eigen/Dense>

#include <cassert>
#include <cmath>

#include "gengan/error.hpp"

namespace gengan::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using ConstMapRow = Eigen::Map<const RowMat>;

void uniform_fill(Tensor& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.data) v = u(rng);
}

void require_rank3(const Tensor& x, std::size_t channels, const char* who) {
  if (x.rank() != 3 || x.dim(1) != channels)
    throw InvalidInput(std::string(who) + ": expected (N, " + std::to_string(channels) + ", L) input");
}

}  // namespace

// --- Conv1d -----------------------------------------------------------------

Conv1d::Conv1d(std::string name, std::size_t in, std::size_t out, std::size_t k, std::size_t s,
               std::size_t p)
    : in_channels(in),
      out_channels(out),
      kernel(k),
      stride(s),
      pad(p),
      weight(name + ".weight", {out, in, k}),
      bias(name + ".bias", {out}) {}

void Conv1d::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel));
  uniform_fill(weight.value, bound, rng);
  uniform_fill(bias.value, bound, rng);
}

std::size_t Conv1d::out_length(std::size_t in_length) const {
  if (in_length + 2 * pad < kernel) return 0;
  return (in_length + 2 * pad - kernel) / stride + 1;
}

Tensor Conv1d::forward(const Tensor& x) {
  require_rank3(x, in_channels, "conv1d");
  const std::size_t n = x.dim(0), lin = x.dim(2), lout = out_length(lin);
  if (lout == 0) throw InvalidInput("conv1d: input too short for kernel");
  in_shape_ = x.shape;
  const std::size_t rows = in_channels * kernel, cols = n * lout;
  cols_.assign(rows * cols, 0.0);
  for (std::size_t c = 0; c < in_channels; ++c) {
    for (std::size_t j = 0; j < kernel; ++j) {
      double* row = cols_.data() + (c * kernel + j) * cols;
      for (std::size_t b = 0; b < n; ++b) {
        const double* src = x.ptr() + (b * in_channels + c) * lin;
        double* dst = row + b * lout;
        for (std::size_t o = 0; o < lout; ++o) {
          const long pos = static_cast<long>(o * stride + j) - static_cast<long>(pad);
          if (pos >= 0 && pos < static_cast<long>(lin)) dst[o] = src[pos];
        }
      }
    }
  }
  ConstMapRow w(weight.value.ptr(), out_channels, rows);
  ConstMapRow cm(cols_.data(), rows, cols);
  RowMat y = w * cm;
  Tensor out({n, out_channels, lout});
  for (std::size_t oc = 0; oc < out_channels; ++oc) {
    const double bv = bias.value.data[oc];
    for (std::size_t b = 0; b < n; ++b) {
      double* dst = out.ptr() + (b * out_channels + oc) * lout;
      const double* src = y.data() + oc * cols + b * lout;
      for (std::size_t o = 0; o < lout; ++o) dst[o] = src[o] + bv;
    }
  }
  return out;
}

Tensor Conv1d::backward(const Tensor& dy) {
  const std::size_t n = in_shape_[0], lin = in_shape_[2], lout = dy.dim(2);
  const std::size_t rows = in_channels * kernel, cols = n * lout;
  RowMat g(out_channels, cols);
  for (std::size_t oc = 0; oc < out_channels; ++oc)
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(dy.ptr() + (b * out_channels + oc) * lout, lout, g.data() + oc * cols + b * lout);

  ConstMapRow cm(cols_.data(), rows, cols);
  MapRow dw(weight.grad.ptr(), out_channels, rows);
  dw.noalias() += g * cm.transpose();
  for (std::size_t oc = 0; oc < out_channels; ++oc) bias.grad.data[oc] += g.row(oc).sum();

  ConstMapRow w(weight.value.ptr(), out_channels, rows);
  RowMat dcols = w.transpose() * g;
  Tensor dx(in_shape_);
  for (std::size_t c = 0; c < in_channels; ++c) {
    for (std::size_t j = 0; j < kernel; ++j) {
      const double* row = dcols.data() + (c * kernel + j) * cols;
      for (std::size_t b = 0; b < n; ++b) {
        double* dst = dx.ptr() + (b * in_channels + c) * lin;
        const double* src = row + b * lout;
        for (std::size_t o = 0; o < lout; ++o) {
          const long pos = static_cast<long>(o * stride + j) - static_cast<long>(pad);
          if (pos >= 0 && pos < static_cast<long>(lin)) dst[pos] += src[o];
        }
      }
    }
  }
  return dx;
}

// --- Linear -----------------------------------------------------------------

Linear::Linear(std::string name, std::size_t in, std::size_t out)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}) {}

void Linear::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(weight.value.dim(1)));
  uniform_fill(weight.value, bound, rng);
  uniform_fill(bias.value, bound, rng);
}

Tensor Linear::forward(const Tensor& x) {
  const std::size_t in = weight.value.dim(1), out = weight.value.dim(0);
  if (x.rank() != 2 || x.dim(1) != in) throw InvalidInput("linear: input width mismatch");
  x_ = x;
  const std::size_t n = x.dim(0);
  ConstMapRow xm(x.ptr(), n, in);
  ConstMapRow w(weight.value.ptr(), out, in);
  Tensor y({n, out});
  MapRow ym(y.ptr(), n, out);
  ym.noalias() = xm * w.transpose();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) y.data[i * out + o] += bias.value.data[o];
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  const std::size_t in = weight.value.dim(1), out = weight.value.dim(0), n = dy.dim(0);
  ConstMapRow g(dy.ptr(), n, out);
  ConstMapRow xm(x_.ptr(), n, in);
  MapRow dw(weight.grad.ptr(), out, in);
  dw.noalias() += g.transpose() * xm;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) bias.grad.data[o] += dy.data[i * out + o];
  ConstMapRow w(weight.value.ptr(), out, in);
  Tensor dx({n, in});
  MapRow dxm(dx.ptr(), n, in);
  dxm.noalias() = g * w;
  return dx;
}

// --- activations ------------------------------------------------------------

Tensor LeakyRelu::forward(const Tensor& x) {
  x_ = x;
  Tensor y = x;
  for (double& v : y.data)
    if (v < 0) v *= slope_;
  return y;
}

Tensor LeakyRelu::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (x_.data[i] < 0) dx.data[i] *= slope_;
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  y_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= y_.data[i] * (1.0 - y_.data[i]);
  return dx;
}

// --- BatchNorm1d ------------------------------------------------------------

BatchNorm1d::BatchNorm1d(std::string name, std::size_t channels)
    : gamma(name + ".gamma", {channels}),
      beta(name + ".beta", {channels}),
      running_mean{name + ".running_mean", Tensor({channels}, 0.0)},
      running_var{name + ".running_var", Tensor({channels}, 1.0)} {
  std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.0);
}

Tensor BatchNorm1d::forward(const Tensor& x, bool training) {
  const std::size_t c_count = gamma.value.size();
  require_rank3(x, c_count, "batchnorm");
  const std::size_t n = x.dim(0), len = x.dim(2);
  const double m = static_cast<double>(n * len);
  Tensor y(x.shape);
  xhat_ = Tensor(x.shape);
  inv_std_.assign(c_count, 0.0);
  for (std::size_t c = 0; c < c_count; ++c) {
    double mean, var;
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t l = 0; l < len; ++l) s += x.at(b, c, l);
      mean = s / m;
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t l = 0; l < len; ++l) {
          const double d = x.at(b, c, l) - mean;
          ss += d * d;
        }
      var = ss / m;
      const double unbiased = m > 1 ? ss / (m - 1) : var;
      running_mean.value.data[c] = (1 - momentum) * running_mean.value.data[c] + momentum * mean;
      running_var.value.data[c] = (1 - momentum) * running_var.value.data[c] + momentum * unbiased;
    } else {
      mean = running_mean.value.data[c];
      var = running_var.value.data[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std_[c] = inv;
    const double g = gamma.value.data[c], bt = beta.value.data[c];
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t l = 0; l < len; ++l) {
        const double h = (x.at(b, c, l) - mean) * inv;
        xhat_.at(b, c, l) = h;
        y.at(b, c, l) = g * h + bt;
      }
  }
  return y;
}

Tensor BatchNorm1d::backward(const Tensor& dy) {
  // Training-mode adjoint (batch statistics depend on the input).
  const std::size_t c_count = gamma.value.size();
  const std::size_t n = dy.dim(0), len = dy.dim(2);
  const double m = static_cast<double>(n * len);
  Tensor dx(dy.shape);
  for (std::size_t c = 0; c < c_count; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t l = 0; l < len; ++l) {
        sum_dy += dy.at(b, c, l);
        sum_dy_xhat += dy.at(b, c, l) * xhat_.at(b, c, l);
      }
    gamma.grad.data[c] += sum_dy_xhat;
    beta.grad.data[c] += sum_dy;
    const double k = gamma.value.data[c] * inv_std_[c] / m;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t l = 0; l < len; ++l)
        dx.at(b, c, l) = k * (m * dy.at(b, c, l) - sum_dy - xhat_.at(b, c, l) * sum_dy_xhat);
  }
  return dx;
}

// --- MaxPool1d --------------------------------------------------------------

Tensor MaxPool1d::forward(const Tensor& x) {
  if (x.rank() != 3 || x.dim(2) < 2) throw InvalidInput("maxpool: input too short");
  in_shape_ = x.shape;
  const std::size_t n = x.dim(0), c = x.dim(1), lin = x.dim(2), lout = lin / 2;
  Tensor y({n, c, lout});
  argmax_.assign(y.size(), 0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t o = 0; o < lout; ++o) {
        const std::size_t i0 = 2 * o, i1 = i0 + 1;
        const bool first = x.at(b, ch, i0) >= x.at(b, ch, i1);
        const std::size_t idx = (b * c + ch) * lout + o;
        argmax_[idx] = first ? i0 : i1;
        y.data[idx] = x.at(b, ch, argmax_[idx]);
      }
  return y;
}

Tensor MaxPool1d::backward(const Tensor& dy) const {
  Tensor dx(in_shape_);
  const std::size_t n = dy.dim(0), c = dy.dim(1), lout = dy.dim(2);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t o = 0; o < lout; ++o) {
        const std::size_t idx = (b * c + ch) * lout + o;
        dx.at(b, ch, argmax_[idx]) += dy.data[idx];
      }
  return dx;
}

// --- shape helpers ----------------------------------------------------------

Tensor upsample2(const Tensor& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), l = x.dim(2);
  Tensor y({n, c, 2 * l});
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t o = 0; o < l; ++o) {
      y.data[i * 2 * l + 2 * o] = x.data[i * l + o];
      y.data[i * 2 * l + 2 * o + 1] = x.data[i * l + o];
    }
  return y;
}

Tensor upsample2_backward(const Tensor& dy) {
  const std::size_t n = dy.dim(0), c = dy.dim(1), l = dy.dim(2) / 2;
  Tensor dx({n, c, l});
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t o = 0; o < l; ++o)
      dx.data[i * l + o] = dy.data[i * 2 * l + 2 * o] + dy.data[i * 2 * l + 2 * o + 1];
  return dx;
}

Tensor mean_over_time(const Tensor& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), l = x.dim(2);
  Tensor y({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t o = 0; o < l; ++o) s += x.data[i * l + o];
    y.data[i] = s / static_cast<double>(l);
  }
  return y;
}

Tensor mean_over_time_backward(const Tensor& dy, std::size_t length) {
  const std::size_t n = dy.dim(0), c = dy.dim(1);
  Tensor dx({n, c, length});
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t o = 0; o < length; ++o) dx.data[i * length + o] = dy.data[i] / static_cast<double>(length);
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) throw InvalidInput("concat: shape mismatch");
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), l = a.dim(2);
  Tensor y({n, ca + cb, l});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.ptr() + i * ca * l, ca * l, y.ptr() + i * (ca + cb) * l);
    std::copy_n(b.ptr() + i * cb * l, cb * l, y.ptr() + i * (ca + cb) * l + ca * l);
  }
  return y;
}

void split_channels(const Tensor& d, std::size_t first, Tensor& da, Tensor& db) {
  const std::size_t n = d.dim(0), c = d.dim(1), l = d.dim(2), second = c - first;
  da = Tensor({n, first, l});
  db = Tensor({n, second, l});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(d.ptr() + i * c * l, first * l, da.ptr() + i * first * l);
    std::copy_n(d.ptr() + i * c * l + first * l, second * l, db.ptr() + i * second * l);
  }
}

// --- optimizer --------------------------------------------------------------

void Adam::step(const std::vector<Param*>& params) {
  if (first.size() != params.size()) {
    first.clear();
    second.clear();
    for (const auto* p : params) {
      first.emplace_back(p->value.shape);
      second.emplace_back(p->value.shape);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& m = first[i].data;
    auto& v = second[i].data;
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad.data[j];
      m[j] = beta1_ * m[j] + (1 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1 - beta2_) * g * g;
      p.value.data[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

void zero_grad(const std::vector<Param*>& params) {
  for (auto* p : params) p->grad.zero();
}

std::size_t parameter_count(const std::vector<Param*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

bool all_finite(const std::vector<Param*>& params) {
  for (const auto* p : params)
    for (double v : p->value.data)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace gengan::nn
