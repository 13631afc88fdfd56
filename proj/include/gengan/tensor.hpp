#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace gengan {

/// Dense row-major array of doubles with an explicit shape.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(count(shape), fill) {}

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }
  bool empty() const { return data.empty(); }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }
  std::span<double> span() { return data; }
  std::span<const double> span() const { return data; }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }

  // (N, C, L) accessors
  double& at(std::size_t n, std::size_t c, std::size_t l) {
    return data[(n * shape[1] + c) * shape[2] + l];
  }
  double at(std::size_t n, std::size_t c, std::size_t l) const {
    return data[(n * shape[1] + c) * shape[2] + l];
  }
};

}  // namespace gengan
