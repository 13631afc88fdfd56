#include "gengan/container.hpp"

#include <openssl/sha.h>
#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gengan/error.hpp"

namespace gengan {

namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'G', 'G', 'T', 'C'};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  template <typename T>
  T pod(const char* what) {
    T v;
    need(sizeof(T), what);
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const std::uint8_t* raw(std::size_t n, const std::string& what) {
    need(n, what);
    const auto* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n, const std::string& what) {
    if (in_.size() - pos_ < n) throw CheckpointError("truncated container while reading " + what);
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(const void* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(
      ::crc32(crc, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

std::string hex_digest(const std::vector<std::uint8_t>& bytes) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> md{};
  SHA256(bytes.data(), bytes.size(), md.data());
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (auto b : md) os << std::setw(2) << static_cast<int>(b);
  return os.str();
}

const NamedTensor* TensorContainer::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const Tensor& TensorContainer::get(const std::string& name) const {
  const auto* t = find(name);
  if (!t) throw CheckpointError("tensor '" + name + "' not found in container");
  return t->value;
}

void TensorContainer::put(std::string name, Tensor value, DType dtype) {
  for (auto& t : tensors) {
    if (t.name == name) {
      t.value = std::move(value);
      t.dtype = dtype;
      return;
    }
  }
  tensors.push_back({std::move(name), dtype, std::move(value)});
}

std::vector<std::uint8_t> serialize(const TensorContainer& c) {
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.pod<std::uint32_t>(TensorContainer::kVersion);
  w.pod<std::uint64_t>(c.metadata.size());
  w.raw(c.metadata.data(), c.metadata.size());
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(t.dtype));
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(t.value.rank()));
    for (auto d : t.value.shape) w.pod<std::uint64_t>(d);
    std::vector<std::uint8_t> payload;
    if (t.dtype == DType::f32) {
      std::vector<float> f(t.value.data.begin(), t.value.data.end());
      payload.resize(f.size() * sizeof(float));
      std::memcpy(payload.data(), f.data(), payload.size());
    } else {
      payload.resize(t.value.size() * sizeof(double));
      std::memcpy(payload.data(), t.value.ptr(), payload.size());
    }
    w.pod<std::uint64_t>(payload.size());
    w.raw(payload.data(), payload.size());
    w.pod<std::uint32_t>(crc32_of(payload.data(), payload.size()));
  }
  return w.take();
}

TensorContainer deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const auto* magic = r.raw(4, "magic");
  if (std::memcmp(magic, kMagic.data(), 4) != 0) throw CheckpointError("bad container magic");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != TensorContainer::kVersion)
    throw CheckpointError("unsupported container version " + std::to_string(version));
  TensorContainer c;
  const auto meta_len = r.pod<std::uint64_t>("metadata length");
  const auto* meta = r.raw(meta_len, "metadata");
  c.metadata.assign(reinterpret_cast<const char*>(meta), meta_len);
  const auto count = r.pod<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.pod<std::uint32_t>("tensor name length");
    const auto* name = r.raw(name_len, "tensor name");
    t.name.assign(reinterpret_cast<const char*>(name), name_len);
    const auto dtype = r.pod<std::uint8_t>(("dtype of " + t.name).c_str());
    if (dtype != 1 && dtype != 2) throw CheckpointError("tensor '" + t.name + "': unknown dtype");
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.pod<std::uint8_t>("rank");
    t.value.shape.resize(rank);
    for (auto& d : t.value.shape) d = r.pod<std::uint64_t>("dims");
    const auto nbytes = r.pod<std::uint64_t>("payload length");
    const std::size_t elem = t.dtype == DType::f32 ? sizeof(float) : sizeof(double);
    if (nbytes != Tensor::count(t.value.shape) * elem)
      throw CheckpointError("tensor '" + t.name + "': payload size does not match shape");
    const auto* payload = r.raw(nbytes, "payload of " + t.name);
    const auto crc = r.pod<std::uint32_t>("checksum");
    if (crc != crc32_of(payload, nbytes))
      throw CheckpointError("tensor '" + t.name + "': checksum mismatch (corrupted block)");
    t.value.data.resize(Tensor::count(t.value.shape));
    if (t.dtype == DType::f32) {
      std::vector<float> f(t.value.size());
      std::memcpy(f.data(), payload, nbytes);
      std::copy(f.begin(), f.end(), t.value.data.begin());
    } else {
      std::memcpy(t.value.ptr(), payload, nbytes);
    }
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after last tensor");
  return c;
}

void write_container(const std::filesystem::path& path, const TensorContainer& c) {
  const auto bytes = serialize(c);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

TensorContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open container: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace gengan
