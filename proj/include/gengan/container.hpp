#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gengan/tensor.hpp"

namespace gengan {

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

struct NamedTensor {
  std::string name;
  DType dtype = DType::f64;
  Tensor value;
};

/// In-memory form of the versioned tensor container (see
/// docs/container_format.md for the byte layout).
struct TensorContainer {
  static constexpr std::uint32_t kVersion = 1;

  std::string metadata;  // JSON document
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
  const Tensor& get(const std::string& name) const;  // CheckpointError if absent
  void put(std::string name, Tensor value, DType dtype = DType::f64);
};

std::vector<std::uint8_t> serialize(const TensorContainer& c);
TensorContainer deserialize(const std::vector<std::uint8_t>& bytes);

void write_container(const std::filesystem::path& path, const TensorContainer& c);
/// Throws CheckpointError for a missing file, bad magic, version mismatch,
/// truncation, or a tensor whose checksum does not match (naming it).
TensorContainer read_container(const std::filesystem::path& path);

std::uint32_t crc32_of(const void* data, std::size_t n);
/// SHA-256 of `bytes`, lowercase hex.
std::string hex_digest(const std::vector<std::uint8_t>& bytes);

}  // namespace gengan
