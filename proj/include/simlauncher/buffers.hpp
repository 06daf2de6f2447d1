// Replay and demonstration buffers, stratified minibatch assembly and the
// SLDM demo file format.
#pragma once

#include "simlauncher/approximator.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace simlauncher {

enum class SourceTag : std::uint8_t { replay = 0, sim_demo = 1, real_demo = 2 };

inline const char* to_string(SourceTag s) {
  switch (s) {
    case SourceTag::replay: return "replay";
    case SourceTag::sim_demo: return "sim_demo";
    case SourceTag::real_demo: return "real_demo";
  }
  return "?";
}

/// Observations and actions are stored as f32, the precision of the on-disk format,
/// so a save/load round trip is exact.
struct Transition {
  std::vector<float> obs;
  std::vector<float> action;
  std::uint8_t reward = 0;
  std::vector<float> next_obs;
  bool terminated = false;
  bool truncated = false;
  SourceTag source = SourceTag::replay;

  static Transition make(const Vec& obs, const Vec& action, double reward, const Vec& next_obs, bool terminated,
                         bool truncated, SourceTag source) {
    if (reward != 0.0 && reward != 1.0) throw std::invalid_argument("Transition: reward must be 0 or 1");
    if (obs.size() != next_obs.size()) throw std::invalid_argument("Transition: obs/next_obs length mismatch");
    auto to_f = [](const Vec& v) {
      std::vector<float> out(static_cast<std::size_t>(v.size()));
      for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
      return out;
    };
    return {to_f(obs), to_f(action), static_cast<std::uint8_t>(reward), to_f(next_obs), terminated, truncated, source};
  }

  bool operator==(const Transition&) const = default;
};

struct Trajectory {
  std::vector<Transition> transitions;
  bool success = false;
  int episode_return = 0;

  /// success requires the final transition to carry reward 1 and terminate.
  bool consistent() const {
    const bool ends_in_success =
        !transitions.empty() && transitions.back().reward == 1 && transitions.back().terminated;
    return success == ends_in_success;
  }
};

/// Fixed-capacity FIFO ring of transitions.
class BufferStore {
 public:
  explicit BufferStore(std::size_t capacity = 50'000) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("BufferStore: capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return ring_.size(); }
  bool empty() const { return ring_.empty(); }
  std::uint64_t insertions() const { return insertions_; }
  std::size_t obs_dim() const { return ring_.empty() ? 0 : ring_.front().obs.size(); }
  std::size_t act_dim() const { return ring_.empty() ? 0 : ring_.front().action.size(); }

  void push(Transition t) {
    if (t.obs.size() != t.next_obs.size()) throw std::invalid_argument("push: obs/next_obs length mismatch");
    if (t.reward > 1) throw std::invalid_argument("push: reward must be 0 or 1");
    if (!ring_.empty() && (t.obs.size() != obs_dim() || t.action.size() != act_dim()))
      throw std::invalid_argument("push: transition dimensions do not match buffer");
    if (ring_.size() < capacity_) {
      ring_.push_back(std::move(t));
    } else {
      ring_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
    ++insertions_;
  }

  /// Logical index: 0 is the oldest retained transition.
  const Transition& at(std::size_t i) const { return ring_[(head_ + i) % ring_.size()]; }

 private:
  std::size_t capacity_;
  std::vector<Transition> ring_;
  std::size_t head_ = 0;  // position of the oldest element once full
  std::uint64_t insertions_ = 0;
};

inline constexpr std::size_t kReplayCapacity = 200'000;
inline constexpr std::size_t kDemoCapacity = 50'000;

/// Appends every transition (re-tagged real_demo) iff the trajectory succeeded.
inline bool append_success_trajectory(BufferStore& d_real, const Trajectory& traj) {
  if (!traj.success || !traj.consistent()) return false;
  for (Transition t : traj.transitions) {
    t.source = SourceTag::real_demo;
    d_real.push(std::move(t));
  }
  return true;
}

/// Minibatch in column-per-sample layout.
struct Batch {
  Mat obs;
  Mat action;
  Vec reward;
  Mat next_obs;
  Vec terminated;
  Vec truncated;
  std::vector<SourceTag> source;
  std::array<int, 3> counts{0, 0, 0};  // replay, sim_demo, real_demo

  Eigen::Index size() const { return obs.cols(); }
};

namespace detail {

inline void write_column(Mat& m, Eigen::Index col, const std::vector<float>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), col) = v[i];
}

inline Batch gather(const std::vector<const Transition*>& rows) {
  Batch b;
  if (rows.empty()) return b;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto od = static_cast<Eigen::Index>(rows.front()->obs.size());
  const auto ad = static_cast<Eigen::Index>(rows.front()->action.size());
  b.obs.resize(od, n);
  b.next_obs.resize(od, n);
  b.action.resize(ad, n);
  b.reward.resize(n);
  b.terminated.resize(n);
  b.truncated.resize(n);
  b.source.resize(rows.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const Transition& t = *rows[static_cast<std::size_t>(j)];
    if (static_cast<Eigen::Index>(t.obs.size()) != od || static_cast<Eigen::Index>(t.action.size()) != ad)
      throw std::invalid_argument("batch: sources disagree on dimensions");
    write_column(b.obs, j, t.obs);
    write_column(b.next_obs, j, t.next_obs);
    write_column(b.action, j, t.action);
    b.reward[j] = t.reward;
    b.terminated[j] = t.terminated ? 1.0 : 0.0;
    b.truncated[j] = t.truncated ? 1.0 : 0.0;
    b.source[static_cast<std::size_t>(j)] = t.source;
    b.counts[static_cast<std::size_t>(t.source)] += 1;
  }
  return b;
}

}  // namespace detail

/// Per-source counts for a stratified draw. Empty sources (or zero fractions) have their mass
/// redistributed proportionally over the rest; floors go to the demo strata and the remainder
/// to replay, or to the largest remaining stratum when replay is unavailable.
inline std::array<int, 3> stratified_counts(int n, std::array<double, 3> fractions, std::array<bool, 3> nonempty) {
  if (n < 4) throw std::invalid_argument("sample_stratified: n must be >= 4");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("sample_stratified: fractions must be nonnegative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("sample_stratified: fractions must sum to 1");
  double live = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!nonempty[i]) fractions[i] = 0.0;
    live += fractions[i];
  }
  if (live <= 0.0) throw std::invalid_argument("sample_stratified: all sources with positive fraction are empty");
  std::array<int, 3> counts{0, 0, 0};
  int assigned = 0;
  for (std::size_t i = 1; i < 3; ++i) {
    counts[i] = static_cast<int>(std::floor(n * (fractions[i] / live) + 1e-9));
    assigned += counts[i];
  }
  std::size_t rest = 0;
  if (fractions[0] <= 0.0) rest = fractions[1] >= fractions[2] ? 1 : 2;
  counts[rest] += n - assigned;
  return counts;
}

inline Batch sample_stratified(const BufferStore& r, const BufferStore& d_sim, const BufferStore& d_real, int n,
                               std::array<double, 3> fractions, Rng& rng) {
  const std::array<const BufferStore*, 3> src{&r, &d_sim, &d_real};
  const auto counts = stratified_counts(n, fractions, {!r.empty(), !d_sim.empty(), !d_real.empty()});
  std::vector<const Transition*> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (std::size_t s = 0; s < 3; ++s) {
    if (counts[s] == 0) continue;
    std::uniform_int_distribution<std::size_t> pick(0, src[s]->size() - 1);
    for (int k = 0; k < counts[s]; ++k) rows.push_back(&src[s]->at(pick(rng)));
  }
  Batch b = detail::gather(rows);
  b.counts = counts;  // by stratum of origin, not by tag
  return b;
}

inline Batch sample_uniform(const BufferStore& buffer, int n, Rng& rng) {
  if (buffer.empty()) throw std::invalid_argument("sample_uniform: empty buffer");
  if (n < 1) throw std::invalid_argument("sample_uniform: n must be >= 1");
  std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
  std::vector<const Transition*> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) rows.push_back(&buffer.at(pick(rng)));
  return detail::gather(rows);
}

// ---------------------------------------------------------------------------
// SLDM: "SLDM", u32 version, u32 count, u32 obs_dim, u32 act_dim, then per record
// f32 obs[obs_dim], f32 action[act_dim], u8 reward, f32 next_obs[obs_dim],
// u8 terminated, u8 truncated, u8 source. Little-endian throughout.

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kDemoFormatVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}
inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }
inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}
  bool has(std::size_t n) const { return pos_ + n <= data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }
  void need(std::size_t n) const {
    if (!has(n)) throw FormatError("truncated file");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace detail

inline std::string encode_demos(const BufferStore& buffer) {
  std::string out = "SLDM";
  detail::put_u32(out, kDemoFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(buffer.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(buffer.obs_dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(buffer.act_dim()));
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const Transition& t = buffer.at(i);
    for (float f : t.obs) detail::put_f32(out, f);
    for (float f : t.action) detail::put_f32(out, f);
    out.push_back(static_cast<char>(t.reward));
    for (float f : t.next_obs) detail::put_f32(out, f);
    out.push_back(static_cast<char>(t.terminated ? 1 : 0));
    out.push_back(static_cast<char>(t.truncated ? 1 : 0));
    out.push_back(static_cast<char>(t.source));
  }
  return out;
}

inline BufferStore decode_demos(std::string bytes, std::size_t capacity = kDemoCapacity) {
  detail::ByteReader rd(std::move(bytes));
  if (rd.bytes(4) != "SLDM") throw FormatError("bad magic: not an SLDM demo file");
  const auto version = rd.u32();
  if (version != kDemoFormatVersion) throw FormatError("unsupported SLDM version " + std::to_string(version));
  const auto count = rd.u32();
  const auto od = rd.u32();
  const auto ad = rd.u32();
  BufferStore buf(std::max<std::size_t>(capacity, count));
  for (std::uint32_t k = 0; k < count; ++k) {
    Transition t;
    t.obs.resize(od);
    t.action.resize(ad);
    t.next_obs.resize(od);
    for (auto& f : t.obs) f = rd.f32();
    for (auto& f : t.action) f = rd.f32();
    t.reward = rd.u8();
    for (auto& f : t.next_obs) f = rd.f32();
    const auto term = rd.u8();
    const auto trunc = rd.u8();
    const auto src = rd.u8();
    if (t.reward > 1 || term > 1 || trunc > 1 || src > 2) throw FormatError("corrupt SLDM record");
    t.terminated = term == 1;
    t.truncated = trunc == 1;
    t.source = static_cast<SourceTag>(src);
    buf.push(std::move(t));
  }
  if (rd.remaining() != 0) throw FormatError("trailing bytes after SLDM records");
  return buf;
}

inline void save_demos(const BufferStore& buffer, const std::string& path) {
  detail::write_file(path, encode_demos(buffer));
}

inline BufferStore load_demos(const std::string& path, std::size_t capacity = kDemoCapacity) {
  return decode_demos(detail::read_file(path), capacity);
}

}  // namespace simlauncher
