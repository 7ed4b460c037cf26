#ifndef GAITSET_PARAMS_HPP_
#define GAITSET_PARAMS_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gaitset/errors.hpp"
#include "gaitset/rng.hpp"
#include "gaitset/tensor.hpp"

namespace gaitset {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

// Named trainable leaves. Each parameter is seeded from (run seed, name), so
// initial values do not depend on registration order.
template <typename T>
class BasicParameterStore {
 public:
  BasicTensor<T>& create(const std::string& name, Shape shape, int64_t fan_in, uint64_t seed) {
    if (items_.count(name)) throw ConfigError("parameter already registered: " + name);
    if (fan_in <= 0) throw ConfigError("parameter " + name + ": fan_in must be positive");
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
    Rng rng(derive_seed(seed, name));
    auto [it, ok] =
        items_.emplace(name, BasicTensor<T>::uniform(std::move(shape), bound, rng, true));
    (void)ok;
    return it->second;
  }

  BasicTensor<T>& insert(const std::string& name, BasicTensor<T> t) {
    if (items_.count(name)) throw ConfigError("parameter already registered: " + name);
    return items_.emplace(name, std::move(t)).first->second;
  }

  bool has(const std::string& name) const { return items_.count(name) != 0; }

  BasicTensor<T>& get(const std::string& name) {
    auto it = items_.find(name);
    if (it == items_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  const BasicTensor<T>& get(const std::string& name) const {
    auto it = items_.find(name);
    if (it == items_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  // sorted by name, which fixes iteration order everywhere
  std::map<std::string, BasicTensor<T>>& items() { return items_; }
  const std::map<std::string, BasicTensor<T>>& items() const { return items_; }

  size_t size() const { return items_.size(); }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [k, v] : items_) n += v.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [k, v] : items_) v.clear_grad();
  }

  template <typename U>
  BasicParameterStore<U> cast() const {
    BasicParameterStore<U> out;
    for (const auto& [k, v] : items_) {
      Storage<U> s(v.shape());
      const auto d = v.data();
      for (int64_t i = 0; i < s.numel(); ++i) s.data[i] = static_cast<U>(d[i]);
      out.insert(k, BasicTensor<U>::leaf(std::move(s), true));
    }
    return out;
  }

 private:
  std::map<std::string, BasicTensor<T>> items_;
};

using ParameterStore = BasicParameterStore<float>;

// ---------------------------------------------------------------------------
// checkpoint file format (little-endian)
//
//   bytes 0..7   magic "GSETCKPT"
//   u32          format version (1)
//   u32          metadata entry count, then per entry: str key, str value
//   u32          tensor count, then per tensor:
//                  str name, u32 rank, i64 dims[rank], f32 payload[numel]
//   str = u32 byte length + raw bytes
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_i64(std::ostream& os, int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline uint32_t read_u32(std::istream& is, const std::string& what) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DataError("checkpoint: truncated while reading " + what);
  return v;
}
inline int64_t read_i64(std::istream& is, const std::string& what) {
  int64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DataError("checkpoint: truncated while reading " + what);
  return v;
}
inline std::string read_str(std::istream& is, const std::string& what) {
  uint32_t len = read_u32(is, what + " length");
  if (len > (1u << 20)) throw DataError("checkpoint: implausible string length in " + what);
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw DataError("checkpoint: truncated while reading " + what);
  return s;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'G', 'S', 'E', 'T', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ParameterStore& store,
                            const std::map<std::string, std::string>& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_u32(os, kCheckpointVersion);
  detail::write_u32(os, static_cast<uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    detail::write_str(os, k);
    detail::write_str(os, v);
  }
  detail::write_u32(os, static_cast<uint32_t>(store.size()));
  for (const auto& [name, t] : store.items()) {
    detail::write_str(os, name);
    detail::write_u32(os, static_cast<uint32_t>(t.rank()));
    for (int64_t e : t.shape()) detail::write_i64(os, e);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!os) throw DataError("checkpoint write failed: " + path);
}

// Replaces the contents of store. Returns the metadata block.
inline std::map<std::string, std::string> load_checkpoint(const std::string& path,
                                                          ParameterStore& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw DataError("not a checkpoint file: " + path);
  const uint32_t version = detail::read_u32(is, "version");
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  std::map<std::string, std::string> meta;
  const uint32_t n_meta = detail::read_u32(is, "metadata count");
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string k = detail::read_str(is, "metadata key");
    meta[k] = detail::read_str(is, "metadata value");
  }
  store = ParameterStore();
  const uint32_t n_tensors = detail::read_u32(is, "tensor count");
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = detail::read_str(is, "tensor name");
    const uint32_t rank = detail::read_u32(is, "tensor rank");
    if (rank == 0 || rank > 8) throw DataError("checkpoint: bad rank for tensor " + name);
    Shape shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = detail::read_i64(is, "tensor dim");
    Storage<float> s(shape);
    if (!is.read(reinterpret_cast<char*>(s.data.data()),
                 static_cast<std::streamsize>(s.numel() * sizeof(float))))
      throw DataError("checkpoint: truncated payload for tensor " + name);
    require_finite(s, "checkpoint tensor " + name);
    store.insert(name, Tensor::leaf(std::move(s), true));
  }
  return meta;
}

}  // namespace gaitset

#endif  // GAITSET_PARAMS_HPP_
