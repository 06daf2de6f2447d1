// SLCK container: "SLCK", u32 version, u32 section count, then per section
// u32 name length, UTF-8 name, u64 value count, f64 values. Little-endian.
#pragma once

#include "simlauncher/buffers.hpp"

#include <map>
#include <sstream>
#include <span>

namespace simlauncher {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

namespace detail {

inline bool valid_utf8(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    if (c < 0x80) len = 1;
    else if ((c >> 5) == 0x6) len = 2;
    else if ((c >> 4) == 0xe) len = 3;
    else if ((c >> 3) == 0x1e) len = 4;
    else return false;
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    i += len;
  }
  return true;
}

inline bool valid_section_name(const std::string& s) {
  if (s.empty() || !valid_utf8(s)) return false;
  for (unsigned char c : s)
    if (c < 0x20 || c == 0x7f) return false;
  return true;
}

}  // namespace detail

/// Ordered set of named f64 arrays.
class Checkpoint {
 public:
  void put(const std::string& name, std::vector<double> values) {
    if (!detail::valid_section_name(name)) throw std::invalid_argument("checkpoint: invalid section name");
    if (index_.contains(name)) throw std::invalid_argument("checkpoint: duplicate section '" + name + "'");
    index_[name] = sections_.size();
    sections_.emplace_back(name, std::move(values));
  }
  void put(const std::string& name, const Vec& v) { put(name, std::vector<double>(v.data(), v.data() + v.size())); }

  bool has(const std::string& name) const { return index_.contains(name); }

  const std::vector<double>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw FormatError("checkpoint: missing section '" + name + "'");
    return sections_[it->second].second;
  }

  Vec get_vec(const std::string& name) const {
    const auto& v = get(name);
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  const std::vector<double>& get_sized(const std::string& name, std::size_t n) const {
    const auto& v = get(name);
    if (v.size() != n) throw FormatError("checkpoint: section '" + name + "' has wrong length");
    return v;
  }

  const std::vector<std::pair<std::string, std::vector<double>>>& sections() const { return sections_; }

  std::string encode() const {
    std::string out = "SLCK";
    detail::put_u32(out, kCheckpointFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(sections_.size()));
    for (const auto& [name, values] : sections_) {
      detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
      out += name;
      detail::put_u64(out, values.size());
      for (double d : values) detail::put_f64(out, d);
    }
    return out;
  }

  static Checkpoint decode(std::string bytes) {
    detail::ByteReader rd(std::move(bytes));
    if (rd.bytes(4) != "SLCK") throw FormatError("bad magic: not an SLCK checkpoint");
    const auto version = rd.u32();
    if (version != kCheckpointFormatVersion) throw FormatError("unsupported SLCK version " + std::to_string(version));
    const auto count = rd.u32();
    Checkpoint ck;
    for (std::uint32_t s = 0; s < count; ++s) {
      const auto len = rd.u32();
      std::string name = rd.bytes(len);
      if (!detail::valid_section_name(name)) throw FormatError("checkpoint: corrupt section name");
      const auto n = rd.u64();
      if (n > rd.remaining() / 8) throw FormatError("truncated file");
      std::vector<double> values(static_cast<std::size_t>(n));
      for (auto& d : values) d = rd.f64();
      if (ck.has(name)) throw FormatError("checkpoint: duplicate section '" + name + "'");
      ck.put(name, std::move(values));
    }
    if (rd.remaining() != 0) throw FormatError("trailing bytes after SLCK sections");
    return ck;
  }

  void save(const std::string& path) const { detail::write_file(path, encode()); }
  static Checkpoint load(const std::string& path) { return decode(detail::read_file(path)); }

 private:
  std::vector<std::pair<std::string, std::vector<double>>> sections_;
  std::map<std::string, std::size_t> index_;
};

// Helpers for structures that appear in several checkpoints.

inline void put_spec(Checkpoint& ck, const std::string& name, const MlpSpec& s) {
  std::vector<double> v{static_cast<double>(s.input_dim), static_cast<double>(s.output_dim),
                        static_cast<double>(static_cast<int>(s.activation))};
  for (auto h : s.hidden_dims) v.push_back(static_cast<double>(h));
  ck.put(name, std::move(v));
}

inline MlpSpec get_spec(const Checkpoint& ck, const std::string& name) {
  const auto& v = ck.get(name);
  if (v.size() < 4) throw FormatError("checkpoint: malformed spec '" + name + "'");
  MlpSpec s;
  s.input_dim = static_cast<std::size_t>(v[0]);
  s.output_dim = static_cast<std::size_t>(v[1]);
  const int act = static_cast<int>(v[2]);
  if (act < 0 || act > 2) throw FormatError("checkpoint: bad activation in '" + name + "'");
  s.activation = static_cast<Activation>(act);
  s.hidden_dims.clear();
  for (std::size_t i = 3; i < v.size(); ++i) s.hidden_dims.push_back(static_cast<std::size_t>(v[i]));
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return s;
}

inline void put_adam(Checkpoint& ck, const std::string& prefix, const AdamState& a) {
  ck.put(prefix + ".m", a.first_moment);
  ck.put(prefix + ".v", a.second_moment);
  ck.put(prefix + ".meta", std::vector<double>{static_cast<double>(a.step), a.learning_rate, a.beta1, a.beta2,
                                               a.epsilon});
}

inline AdamState get_adam(const Checkpoint& ck, const std::string& prefix, std::size_t n) {
  AdamState a;
  a.first_moment = Eigen::Map<const Vec>(ck.get_sized(prefix + ".m", n).data(), static_cast<Eigen::Index>(n));
  a.second_moment = Eigen::Map<const Vec>(ck.get_sized(prefix + ".v", n).data(), static_cast<Eigen::Index>(n));
  const auto& meta = ck.get_sized(prefix + ".meta", 5);
  a.step = static_cast<std::int64_t>(meta[0]);
  a.learning_rate = meta[1];
  a.beta1 = meta[2];
  a.beta2 = meta[3];
  a.epsilon = meta[4];
  return a;
}

/// mt19937_64 state as 32-bit halves, each exactly representable in f64.
inline std::vector<double> encode_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  std::istringstream is(os.str());
  std::vector<double> out;
  std::uint64_t w = 0;
  while (is >> w) {
    out.push_back(static_cast<double>(w & 0xffffffffULL));
    out.push_back(static_cast<double>(w >> 32));
  }
  return out;
}

inline Rng decode_rng(std::span<const double> v) {
  if (v.size() % 2 != 0) throw FormatError("checkpoint: malformed rng state");
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); i += 2) {
    const auto lo = static_cast<std::uint64_t>(v[i]);
    const auto hi = static_cast<std::uint64_t>(v[i + 1]);
    if (i) os << ' ';
    os << (lo | (hi << 32));
  }
  Rng rng;
  std::istringstream is(os.str());
  is >> rng;
  if (is.fail()) throw FormatError("checkpoint: malformed rng state");
  return rng;
}

}  // namespace simlauncher
