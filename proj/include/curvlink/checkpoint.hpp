#pragma once

// Binary checkpoint container. Byte layout is documented in docs/checkpoint.md.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "curvlink/error.hpp"
#include "curvlink/manifold.hpp"
#include "curvlink/model.hpp"

namespace curvlink {

inline constexpr std::array<char, 8> kCheckpointMagic{'C', 'L', 'N', 'K', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::array<Curvature, 2> kappa;
  std::array<bool, 2> base_learnable{true, true};
  std::string config;  // "key = value" echo of the effective configuration
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* find(const std::string& name) const {
    for (const auto& [n, m] : tensors)
      if (n == name) return &m;
    return nullptr;
  }

  const Matrix& require(const std::string& name) const {
    const Matrix* m = find(name);
    if (!m) throw FormatError("checkpoint has no tensor '" + name + "'");
    return *m;
  }
};

// Parameters plus the final embeddings, stored as "<network>.embedding".
inline Checkpoint make_checkpoint(const EncoderParams& p, const std::array<Curvature, 2>& kappa,
                                  const std::array<Matrix, 2>& embeddings, std::string config) {
  Checkpoint c;
  c.kappa = kappa;
  c.config = std::move(config);
  for (int n = 0; n < 2; ++n) c.base_learnable[n] = p.net[n].base_learnable;
  p.for_each([&](const std::string& name, const Matrix& m, TensorKind, int) {
    c.tensors.emplace_back(name, m);
  });
  for (int n = 0; n < 2; ++n) {
    c.tensors.emplace_back(std::string(kNetworkNames[n]) + ".embedding", embeddings[n]);
  }
  return c;
}

// Rebuilds encoder parameters; the layer count comes from the tensor names.
inline EncoderParams checkpoint_params(const Checkpoint& c) {
  EncoderParams p;
  for (int n = 0; n < 2; ++n) {
    const std::string prefix = kNetworkNames[n];
    p.net[n].base = c.require(prefix + ".base");
    p.net[n].base_learnable = c.base_learnable[n];
    for (std::size_t l = 0;; ++l) {
      const std::string q = prefix + ".layer" + std::to_string(l) + ".";
      if (!c.find(q + "w_self")) break;
      p.net[n].layers.push_back({c.require(q + "w_self"), c.require(q + "w_cross"),
                                 c.require(q + "beta_in"), c.require(q + "beta_er")});
    }
  }
  if (p.net[0].layers.size() != p.net[1].layers.size() || p.net[0].layers.empty()) {
    throw FormatError("checkpoint layer tensors are incomplete");
  }
  return p;
}

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_arithmetic_v<T>);
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    bytes_.insert(bytes_.end(), b.begin(), b.end());
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    std::array<unsigned char, sizeof(T)> b;
    take(b.data(), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
  }
  void take(void* out, std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint is truncated");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    take(s.data(), n);
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
  detail::ByteWriter w;
  w.put_bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.put(kCheckpointVersion);
  w.put(c.kappa[0].value());
  w.put(c.kappa[1].value());
  w.put(static_cast<std::uint8_t>((c.base_learnable[0] ? 1u : 0u) | (c.base_learnable[1] ? 2u : 0u)));
  w.put_string(c.config);
  w.put(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, m] : c.tensors) {
    w.put_string(name);
    w.put(static_cast<std::uint32_t>(m.rows()));
    w.put(static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) w.put(m(i, j));
  }
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::vector<unsigned char> bytes) {
  detail::ByteReader r(std::move(bytes));
  std::array<char, 8> magic{};
  r.take(magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  const double ks = r.get<double>(), kt = r.get<double>();
  for (double k : {ks, kt}) {
    if (!std::isfinite(k) || std::abs(k) > kKappaMax) throw FormatError("checkpoint curvature is invalid");
  }
  c.kappa = {Curvature(ks), Curvature(kt)};
  const auto flags = r.get<std::uint8_t>();
  if (flags > 3) throw FormatError("checkpoint flags are invalid");
  c.base_learnable = {(flags & 1u) != 0, (flags & 2u) != 0};
  c.config = r.get_string();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = r.get_string();
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (static_cast<double>(rows) * cols * sizeof(double) > static_cast<double>(r.remaining())) {
      throw FormatError("checkpoint is truncated");
    }
    Matrix m(rows, cols);
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = r.get<double>();
    c.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const auto bytes = encode_checkpoint(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(bytes));
}

}  // namespace curvlink
