#include "simlauncher/buffers.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

using namespace simlauncher;

namespace {

Transition make_t(float x, SourceTag tag = SourceTag::replay, int od = 3, int ad = 2) {
  Transition t;
  t.obs.assign(static_cast<std::size_t>(od), x);
  t.action.assign(static_cast<std::size_t>(ad), -x);
  t.next_obs.assign(static_cast<std::size_t>(od), x + 0.5f);
  t.source = tag;
  return t;
}

Trajectory make_traj(int len, bool success) {
  Trajectory tr;
  for (int i = 0; i < len; ++i) {
    Transition t = make_t(static_cast<float>(i));
    const bool last = i + 1 == len;
    t.reward = last && success ? 1 : 0;
    t.terminated = last && success;
    t.truncated = last && !success;
    tr.transitions.push_back(t);
  }
  tr.success = success;
  tr.episode_return = success ? 1 : 0;
  return tr;
}

BufferStore filled(int n, SourceTag tag, float base = 0.0f) {
  BufferStore b(1000);
  for (int i = 0; i < n; ++i) b.push(make_t(base + static_cast<float>(i), tag));
  return b;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("simlauncher_" + name)).string();
}

// Byte-by-byte little-endian encoding, written independently of the library.
void le32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void lef(std::string& s, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  le32(s, u);
}

}  // namespace

TEST(BufferStore, PushGrowsAndEvictsFifo) {
  BufferStore b(2);
  b.push(make_t(1));
  EXPECT_EQ(b.size(), 1u);
  b.push(make_t(2));
  b.push(make_t(3));
  EXPECT_EQ(b.size(), 2u);
  EXPECT_EQ(b.at(0).obs[0], 2.0f);
  EXPECT_EQ(b.at(1).obs[0], 3.0f);
  EXPECT_EQ(b.insertions(), 3u);
}

TEST(BufferStore, RejectsMismatchedShapes) {
  BufferStore b(4);
  b.push(make_t(1));
  EXPECT_THROW(b.push(make_t(1, SourceTag::replay, 4, 2)), std::invalid_argument);
  Transition bad = make_t(1);
  bad.next_obs.pop_back();
  EXPECT_THROW(b.push(bad), std::invalid_argument);
  EXPECT_THROW(BufferStore(0), std::invalid_argument);
}

TEST(BufferStore, TransitionMakeValidatesReward) {
  EXPECT_THROW(Transition::make(Vec::Zero(2), Vec::Zero(1), 0.5, Vec::Zero(2), false, false, SourceTag::replay),
               std::invalid_argument);
}

TEST(AppendSuccess, FailedTrajectoryIsIgnored) {
  BufferStore d(100);
  EXPECT_FALSE(append_success_trajectory(d, make_traj(30, false)));
  EXPECT_EQ(d.size(), 0u);
}

TEST(AppendSuccess, SuccessfulTrajectoryAppendsAllTransitions) {
  BufferStore d(100);
  EXPECT_TRUE(append_success_trajectory(d, make_traj(12, true)));
  EXPECT_EQ(d.size(), 12u);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.at(i).source, SourceTag::real_demo);
}

TEST(AppendSuccess, InconsistentFlagIsIgnored) {
  BufferStore d(100);
  Trajectory t = make_traj(5, false);
  t.success = true;
  EXPECT_FALSE(append_success_trajectory(d, t));
}

TEST(AppendSuccess, OverCapacityEvictsOldest) {
  BufferStore d(20);
  append_success_trajectory(d, make_traj(12, true));
  Trajectory second = make_traj(12, true);
  for (auto& t : second.transitions) t.obs[0] += 100.0f;
  append_success_trajectory(d, second);
  EXPECT_EQ(d.size(), 20u);
  EXPECT_EQ(d.at(0).obs[0], 4.0f);
  EXPECT_EQ(d.at(19).obs[0], 111.0f);
}

TEST(StratifiedCounts, SpecRules) {
  using A = std::array<int, 3>;
  EXPECT_EQ(stratified_counts(256, {0.5, 0.25, 0.25}, {true, true, true}), (A{128, 64, 64}));
  EXPECT_EQ(stratified_counts(240, {0.5, 0.25, 0.25}, {true, true, false}), (A{160, 80, 0}));
  EXPECT_EQ(stratified_counts(4, {0.5, 0.25, 0.25}, {true, true, true}), (A{2, 1, 1}));
  EXPECT_EQ(stratified_counts(256, {0.5, 0.25, 0.25}, {true, false, true}), (A{171, 0, 85}));
  EXPECT_EQ(stratified_counts(256, {0.5, 0.25, 0.25}, {false, true, true}), (A{0, 128, 128}));
  EXPECT_EQ(stratified_counts(256, {0.5, 0.5, 0.0}, {true, true, true}), (A{128, 128, 0}));
  EXPECT_THROW(stratified_counts(256, {0.5, 0.25, 0.2}, {true, true, true}), std::invalid_argument);
  EXPECT_THROW(stratified_counts(256, {0.5, 0.25, 0.25}, {false, false, false}), std::invalid_argument);
  EXPECT_THROW(stratified_counts(2, {0.5, 0.25, 0.25}, {true, true, true}), std::invalid_argument);
}

TEST(SampleStratified, DrawsExactCompositionFromEachStratum) {
  const BufferStore r = filled(50, SourceTag::replay), s = filled(40, SourceTag::sim_demo, 100),
                    d = filled(30, SourceTag::real_demo, 200);
  const BufferStore empty(10);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Batch b = sample_stratified(r, s, d, 256, {0.5, 0.25, 0.25}, rng);
    std::array<int, 3> tags{0, 0, 0};
    for (SourceTag t : b.source) ++tags[static_cast<int>(t)];
    ASSERT_EQ(tags, (std::array<int, 3>{128, 64, 64}));
    ASSERT_EQ(b.counts, (std::array<int, 3>{128, 64, 64}));
    ASSERT_EQ(b.size(), 256);
  }
  for (int i = 0; i < 1000; ++i) {
    const Batch b = sample_stratified(r, s, empty, 240, {0.5, 0.25, 0.25}, rng);
    std::array<int, 3> tags{0, 0, 0};
    for (SourceTag t : b.source) ++tags[static_cast<int>(t)];
    ASSERT_EQ(tags, (std::array<int, 3>{160, 80, 0}));
  }
}

TEST(SampleStratified, BatchLayoutMatchesTransitions) {
  const BufferStore r = filled(1, SourceTag::replay, 3), s = filled(1, SourceTag::sim_demo, 7),
                    d = filled(1, SourceTag::real_demo, 9);
  Rng rng(2);
  const Batch b = sample_stratified(r, s, d, 4, {0.5, 0.25, 0.25}, rng);
  EXPECT_EQ(b.obs(0, 0), 3.0);
  EXPECT_EQ(b.action(1, 2), -7.0);
  EXPECT_EQ(b.next_obs(2, 3), 9.5);
}

TEST(SampleUniform, SingleElement) {
  const BufferStore b = filled(1, SourceTag::replay, 42);
  Rng rng(3);
  const Batch s = sample_uniform(b, 1, rng);
  EXPECT_EQ(s.obs(0, 0), 42.0);
}

TEST(SampleUniform, FrequenciesAreUniform) {
  const BufferStore b = filled(3, SourceTag::replay);
  Rng rng(4);
  const int n = 30000;
  const Batch s = sample_uniform(b, n, rng);
  std::array<int, 3> hits{0, 0, 0};
  for (int j = 0; j < n; ++j) ++hits[static_cast<int>(s.obs(0, j))];
  const double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
  for (int h : hits) EXPECT_LT(std::abs(h - n / 3.0), 3.0 * sigma);
}

TEST(SampleUniform, EmptyBufferIsAnError) {
  BufferStore b(4);
  Rng rng(5);
  EXPECT_THROW(sample_uniform(b, 1, rng), std::invalid_argument);
}

TEST(DemoFile, RoundTripIsBitwiseExact) {
  BufferStore b(200);
  Rng rng(6);
  std::normal_distribution<float> n01;
  for (int i = 0; i < 100; ++i) {
    Transition t = make_t(0.0f, static_cast<SourceTag>(i % 3));
    for (auto& v : t.obs) v = n01(rng);
    for (auto& v : t.action) v = n01(rng);
    for (auto& v : t.next_obs) v = n01(rng);
    t.reward = i % 7 == 0 ? 1 : 0;
    t.terminated = t.reward == 1;
    t.truncated = i % 11 == 0;
    b.push(t);
  }
  const std::string path = temp_path("roundtrip.sldm");
  save_demos(b, path);
  const BufferStore c = load_demos(path);
  ASSERT_EQ(c.size(), b.size());
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.at(i), c.at(i));
  EXPECT_EQ(encode_demos(c), encode_demos(b));
  std::remove(path.c_str());
}

TEST(DemoFile, EncodingMatchesByteLayout) {
  BufferStore b(4);
  Transition t;
  t.obs = {1.5f, -2.0f};
  t.action = {0.25f};
  t.reward = 1;
  t.next_obs = {3.0f, 4.0f};
  t.terminated = true;
  t.truncated = false;
  t.source = SourceTag::real_demo;
  b.push(t);
  std::string want = "SLDM";
  le32(want, 1);
  le32(want, 1);
  le32(want, 2);
  le32(want, 1);
  lef(want, 1.5f);
  lef(want, -2.0f);
  lef(want, 0.25f);
  want.push_back('\x01');
  lef(want, 3.0f);
  lef(want, 4.0f);
  want.push_back('\x01');
  want.push_back('\x00');
  want.push_back('\x02');
  EXPECT_EQ(encode_demos(b), want);
}

TEST(DemoFile, CorruptMagicIsRejected) {
  std::string bytes = encode_demos(filled(5, SourceTag::sim_demo));
  bytes[0] = 'X';
  EXPECT_THROW(decode_demos(bytes), FormatError);
}

TEST(DemoFile, BadVersionAndTruncationAreRejected) {
  std::string bytes = encode_demos(filled(5, SourceTag::sim_demo));
  std::string v = bytes;
  v[4] = 2;
  EXPECT_THROW(decode_demos(v), FormatError);
  EXPECT_THROW(decode_demos(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(decode_demos(bytes + "x"), FormatError);
}

TEST(DemoFile, EmptyBufferRoundTrips) {
  const BufferStore c = decode_demos(encode_demos(BufferStore(8)));
  EXPECT_TRUE(c.empty());
}
