#pragma once

// Binary dataset container ("PCLW1"), JSON sidecar, and content hashing.
//
// Container layout, all integers and floats little-endian:
//   magic        5 bytes  "PCLW1"
//   d            u32
//   p_overridden u8       0 when p is the critical default
//   p            f64      resolved occupation probability
//   min_size     u64
//   max_size     u64
//   n_clusters   u32
//   walk_std     f64
//   seed         u64
//   n_rejected_small, n_rejected_large, n_attempts   u64 each
//   n_clusters blocks, in rank order:
//     size s     u64
//     degenerate u8
//     parent     u32 x s  (root = 0xFFFFFFFF)
//     depth      u32 x s
//     value      f64 x s

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>
#include "perclaw/bethe.hpp"
#include "perclaw/errors.hpp"

namespace perclaw {

inline constexpr char kDatasetMagic[5] = {'P', 'C', 'L', 'W', '1'};

/// Incremental SHA-1 (OpenSSL EVP).
class Sha1 {
 public:
  Sha1() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha1(), nullptr) != 1)
      throw std::runtime_error("sha1: OpenSSL initialisation failed");
  }
  void update(const void* data, std::size_t n) {
    if (n && EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("sha1: update failed");
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw std::runtime_error("sha1: final failed");
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 15]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

inline std::string sha1_hex(std::string_view content) {
  Sha1 h;
  h.update(content);
  return h.hex();
}

/// Hash git assigns to a blob with this content.
inline std::string git_blob_hash(std::string_view content) {
  Sha1 h;
  const std::string header = "blob " + std::to_string(content.size());
  h.update(header.data(), header.size() + 1);  // includes the NUL terminator
  h.update(content);
  return h.hex();
}

namespace detail {

template <class T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  std::memcpy(&v, b, sizeof(T));
  return v;
}

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  else return byteswap_value(v);
}

template <class Put, class T>
void put_scalar(Put& put, T v) {
  v = to_little(v);
  put(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class Put, class T>
void put_array(Put& put, const std::vector<T>& xs) {
  if constexpr (std::endian::native == std::endian::little) {
    put(reinterpret_cast<const char*>(xs.data()), xs.size() * sizeof(T));
  } else {
    std::vector<T> tmp(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) tmp[i] = byteswap_value(xs[i]);
    put(reinterpret_cast<const char*>(tmp.data()), tmp.size() * sizeof(T));
  }
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("dataset: truncated file");
  }
  template <class T>
  T scalar() {
    T v;
    bytes(reinterpret_cast<char*>(&v), sizeof(T));
    return to_little(v);
  }
  template <class T>
  std::vector<T> array(std::uint64_t n) {
    std::vector<T> xs(n);
    bytes(reinterpret_cast<char*>(xs.data()), n * sizeof(T));
    if constexpr (std::endian::native != std::endian::little)
      for (auto& x : xs) x = byteswap_value(x);
    return xs;
  }

 private:
  std::istream& in_;
};

}  // namespace detail

/// Streams the container bytes of `ds` through put(const char*, size_t).
template <class Put>
void write_dataset_bytes(const Dataset& ds, Put&& put) {
  using namespace detail;
  const SimConfig& c = ds.config;
  put(kDatasetMagic, sizeof kDatasetMagic);
  put_scalar(put, c.d);
  put_scalar(put, static_cast<std::uint8_t>(c.p.has_value() ? 1 : 0));
  put_scalar(put, c.occupation());
  put_scalar(put, c.min_size);
  put_scalar(put, c.max_size);
  put_scalar(put, c.n_clusters);
  put_scalar(put, c.walk_std);
  put_scalar(put, c.seed);
  put_scalar(put, ds.n_rejected_small);
  put_scalar(put, ds.n_rejected_large);
  put_scalar(put, ds.n_attempts);
  for (const Cluster& cl : ds.clusters) {
    put_scalar(put, static_cast<std::uint64_t>(cl.size()));
    put_scalar(put, static_cast<std::uint8_t>(cl.degenerate ? 1 : 0));
    put_array(put, cl.parent);
    put_array(put, cl.depth);
    put_array(put, cl.value);
  }
}

/// SHA-1 of the container bytes; equal for a dataset and its file on disk.
inline std::string dataset_hash(const Dataset& ds) {
  Sha1 h;
  write_dataset_bytes(ds, [&](const char* p, std::size_t n) { h.update(p, n); });
  return h.hex();
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset_bytes(ds, [&](const char* p, std::size_t n) { out.write(p, static_cast<std::streamsize>(n)); });
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline Dataset read_dataset(std::istream& in) {
  detail::Reader r(in);
  char magic[5];
  r.bytes(magic, 5);
  if (std::memcmp(magic, kDatasetMagic, 5) != 0) throw FormatError("dataset: bad magic (expected PCLW1)");
  Dataset ds;
  SimConfig& c = ds.config;
  c.d = r.scalar<std::uint32_t>();
  const auto overridden = r.scalar<std::uint8_t>();
  const auto p = r.scalar<double>();
  if (overridden) c.p = p;
  c.min_size = r.scalar<std::uint64_t>();
  c.max_size = r.scalar<std::uint64_t>();
  c.n_clusters = r.scalar<std::uint32_t>();
  c.walk_std = r.scalar<double>();
  c.seed = r.scalar<std::uint64_t>();
  ds.n_rejected_small = r.scalar<std::uint64_t>();
  ds.n_rejected_large = r.scalar<std::uint64_t>();
  ds.n_attempts = r.scalar<std::uint64_t>();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("dataset: invalid config: ") + e.what());
  }
  if (!overridden && c.occupation() != p) throw FormatError("dataset: p does not match the critical default");
  ds.clusters.reserve(c.n_clusters);
  for (std::uint32_t k = 0; k < c.n_clusters; ++k) {
    const auto s = r.scalar<std::uint64_t>();
    if (s == 0 || s > c.max_size) throw FormatError("dataset: cluster size out of range");
    Cluster cl;
    cl.degenerate = r.scalar<std::uint8_t>() != 0;
    cl.parent = r.array<std::uint32_t>(s);
    cl.depth = r.array<std::uint32_t>(s);
    cl.value = r.array<double>(s);
    cl.rank = k + 1;
    cl.validate();
    if (k > 0 && cl.size() > ds.clusters.back().size()) throw FormatError("dataset: clusters not sorted by size");
    ds.clusters.push_back(std::move(cl));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("dataset: trailing bytes");
  return ds;
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read_dataset(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline nlohmann::ordered_json to_json(const SimConfig& c) {
  nlohmann::ordered_json j;
  j["d"] = c.d;
  j["z"] = c.z();
  j["p"] = c.occupation();
  j["p_is_critical"] = !c.p.has_value();
  j["min_size"] = c.min_size;
  j["max_size"] = c.max_size;
  j["n_clusters"] = c.n_clusters;
  j["walk_std"] = c.walk_std;
  j["seed"] = c.seed;
  return j;
}

/// Metadata sidecar written next to the container.
inline nlohmann::ordered_json dataset_sidecar(const Dataset& ds, const std::string& hash) {
  nlohmann::ordered_json j;
  j["format"] = "PCLW1";
  j["config"] = to_json(ds.config);
  j["n_rejected_small"] = ds.n_rejected_small;
  j["n_rejected_large"] = ds.n_rejected_large;
  j["n_attempts"] = ds.n_attempts;
  j["total_sites"] = ds.total_sites();
  std::vector<std::uint64_t> sizes;
  for (const auto& c : ds.clusters) sizes.push_back(c.size());
  j["sizes"] = sizes;
  std::size_t degenerate = 0;
  for (const auto& c : ds.clusters) degenerate += c.degenerate ? 1 : 0;
  j["n_degenerate"] = degenerate;
  j["sha1"] = hash;
  return j;
}

}  // namespace perclaw
