#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "roteq/descriptor.hpp"
#include "roteq/equivariant.hpp"
#include "roteq/rng.hpp"
#include "roteq/tensor.hpp"
#include "roteq/textures.hpp"

using namespace roteq;

namespace {

KeypointFeature make_kf(int C, int G, std::vector<float> p) {
  KeypointFeature kf;
  kf.C = C;
  kf.G = G;
  kf.keypoint_id = 0;
  kf.p = std::move(p);
  REQUIRE(kf.p.size() == size_t(C) * G);
  return kf;
}

KeypointFeature shift_kf(const KeypointFeature& kf, int delta) {
  KeypointFeature out = kf;
  for (int c = 0; c < kf.C; ++c)
    for (int i = 0; i < kf.G; ++i)
      out.p[size_t(c) * kf.G + i] = kf.p[size_t(c) * kf.G + mod(i + delta, kf.G)];
  return out;
}

float max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  REQUIRE(a.size() == b.size());
  float m = 0.f;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("group_align shifts each channel block and normalizes", "[invmap]") {
  // C=1, |G|=4, p=[1,2,3,4], delta=1 -> d' = [2,3,4,1], d = d'/sqrt(30).
  KeypointFeature kf = make_kf(1, 4, {1, 2, 3, 4});
  Descriptor d = group_align(kf, 1);
  const double inv = 1.0 / std::sqrt(30.0);
  REQUIRE(d.d.size() == 4);
  CHECK_THAT(d.d[0], Catch::Matchers::WithinAbs(2 * inv, 1e-6));
  CHECK_THAT(d.d[1], Catch::Matchers::WithinAbs(3 * inv, 1e-6));
  CHECK_THAT(d.d[2], Catch::Matchers::WithinAbs(4 * inv, 1e-6));
  CHECK_THAT(d.d[3], Catch::Matchers::WithinAbs(1 * inv, 1e-6));
  CHECK(d.delta == 1);

  // delta=0 is flatten + normalize only.
  Descriptor d0 = group_align(kf, 0);
  const double inv0 = 1.0 / std::sqrt(30.0);
  for (int i = 0; i < 4; ++i)
    CHECK_THAT(d0.d[size_t(i)], Catch::Matchers::WithinAbs((i + 1) * inv0, 1e-6));

  CHECK_THROWS_AS(group_align(kf, 4), OutOfBounds);
  CHECK_THROWS_AS(group_align(kf, -1), OutOfBounds);
}

TEST_CASE("group_pool reduces the group axis", "[invmap]") {
  // C=2 keeps the pre-normalization ratios visible after normalization.
  KeypointFeature kf = make_kf(2, 4, {1, 2, 3, 4, 2, 2, 2, 2});

  // avg pre-norm = [2.5, 2], max pre-norm = [4, 2].
  Descriptor avg = group_pool(kf, DescMethod::avg);
  REQUIRE(avg.d.size() == 2);
  const double na = std::sqrt(2.5 * 2.5 + 2.0 * 2.0);
  CHECK_THAT(avg.d[0], Catch::Matchers::WithinAbs(2.5 / na, 1e-6));
  CHECK_THAT(avg.d[1], Catch::Matchers::WithinAbs(2.0 / na, 1e-6));

  Descriptor mx = group_pool(kf, DescMethod::max);
  REQUIRE(mx.d.size() == 2);
  const double nm = std::sqrt(16.0 + 4.0);
  CHECK_THAT(mx.d[0], Catch::Matchers::WithinAbs(4.0 / nm, 1e-6));
  CHECK_THAT(mx.d[1], Catch::Matchers::WithinAbs(2.0 / nm, 1e-6));

  // none equals group_align with delta 0.
  Descriptor none = group_pool(kf, DescMethod::none);
  Descriptor a0 = group_align(kf, 0);
  REQUIRE(none.d.size() == a0.d.size());
  CHECK(max_abs_diff(none.d, a0.d) == 0.f);

  CHECK_THROWS_AS(group_pool(kf, DescMethod::align), ConfigError);
}

TEST_CASE("constant group fibers make avg and max agree", "[invmap]") {
  KeypointFeature kf = make_kf(3, 4, {2, 2, 2, 2, 5, 5, 5, 5, 1, 1, 1, 1});
  Descriptor avg = group_pool(kf, DescMethod::avg);
  Descriptor mx = group_pool(kf, DescMethod::max);
  CHECK(max_abs_diff(avg.d, mx.d) == 0.f);
}

TEST_CASE("zero features are rejected rather than divided", "[invmap]") {
  KeypointFeature kf = make_kf(1, 4, {0, 0, 0, 0});
  CHECK_THROWS_AS(group_align(kf, 0), ZeroVector);
  CHECK_THROWS_AS(group_pool(kf, DescMethod::avg), ZeroVector);
}

TEST_CASE("alignment cancels an opposite group shift", "[invmap]") {
  // group_align(shift(p, -delta), (D + delta) mod G) == group_align(p, D).
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int C = 1 + rng.index(4), G = 2 + rng.index(11);
    KeypointFeature kf;
    kf.C = C;
    kf.G = G;
    kf.p.resize(size_t(C) * G);
    for (auto& v : kf.p) v = float(rng.uniform(-1.0, 1.0));
    const int D = rng.index(G), delta = rng.index(G);
    Descriptor base = group_align(kf, D);
    Descriptor moved = group_align(shift_kf(kf, -delta), mod(D + delta, G));
    CHECK(max_abs_diff(base.d, moved.d) <= 1e-6f);
  }
}

TEST_CASE("pooled descriptors are invariant under any group shift", "[invmap]") {
  Rng rng(32);
  KeypointFeature kf;
  kf.C = 3;
  kf.G = 8;
  kf.p.resize(24);
  for (auto& v : kf.p) v = float(rng.uniform(0.0, 1.0));
  Descriptor avg = group_pool(kf, DescMethod::avg);
  Descriptor mx = group_pool(kf, DescMethod::max);
  for (int delta = 1; delta < 8; ++delta) {
    KeypointFeature s = shift_kf(kf, delta);
    CHECK(max_abs_diff(group_pool(s, DescMethod::avg).d, avg.d) <= 1e-6f);
    CHECK(max_abs_diff(group_pool(s, DescMethod::max).d, mx.d) <= 1e-6f);
  }
}

TEST_CASE("pooling collides where aligning separates", "[invmap]") {
  // Same per-channel mean and max, different group profiles.
  KeypointFeature p1 = make_kf(2, 4, {4, 1, 3, 2, 1, 1, 1, 1});
  KeypointFeature p2 = make_kf(2, 4, {4, 2, 3, 1, 1, 1, 1, 1});

  CHECK(max_abs_diff(group_pool(p1, DescMethod::avg).d,
                     group_pool(p2, DescMethod::avg).d) == 0.f);
  CHECK(max_abs_diff(group_pool(p1, DescMethod::max).d,
                     group_pool(p2, DescMethod::max).d) == 0.f);
  CHECK(max_abs_diff(group_align(p1, 0).d, group_align(p2, 0).d) > 0.01f);
}

TEST_CASE("descriptors always have unit norm", "[invmap]") {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    KeypointFeature kf;
    kf.C = 2;
    kf.G = 4;
    kf.p.resize(8);
    for (auto& v : kf.p) v = float(rng.uniform(-2.0, 2.0));
    for (auto method : {DescMethod::avg, DescMethod::max, DescMethod::none}) {
      const auto d = group_pool(kf, method).d;
      double n = 0;
      for (float x : d) n += double(x) * x;
      CHECK_THAT(n, Catch::Matchers::WithinAbs(1.0, 1e-6));
    }
    double n = 0;
    for (float x : group_align(kf, rng.index(4)).d) n += double(x) * x;
    CHECK_THAT(n, Catch::Matchers::WithinAbs(1.0, 1e-6));
  }
}

TEST_CASE("extract_descriptors emits one row per candidate", "[invmap]") {
  // Constant planes make the histogram the same at every sample point.
  GroupTensor F(2, 4, 6, 6);
  const float chan0[4] = {1.0f, 0.7f, 0.3f, 0.1f};
  for (int g = 0; g < 4; ++g)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        F.at(0, g, y, x) = chan0[g];
        F.at(1, g, y, x) = 0.5f;
      }
  std::vector<Keypoint> kps = {{5.0, 5.0, 1.f}};

  ExtractConfig one;
  one.method = DescMethod::align;
  one.candidate_ratio = 1.0;
  one.candidate_k = 1;
  auto r1 = extract_descriptors(F, kps, one);
  REQUIRE(r1.descriptors.size() == 1);
  CHECK(r1.descriptors[0].delta == 0);
  CHECK(r1.descriptors[0].keypoint_id == 0);

  ExtractConfig multi = one;
  multi.candidate_ratio = 0.6;
  multi.candidate_k = 4;
  auto r2 = extract_descriptors(F, kps, multi);
  REQUIRE(r2.descriptors.size() == 2);  // 1.0 and 0.7 qualify at ratio 0.6
  CHECK(r2.descriptors[0].keypoint_id == 0);
  CHECK(r2.descriptors[1].keypoint_id == 0);
  CHECK(r2.descriptors[0].delta == 0);
  CHECK(r2.descriptors[1].delta == 1);
}

TEST_CASE("extract_descriptors skips out-of-bounds keypoints", "[invmap]") {
  GroupTensor F(1, 4, 4, 4, 1.f);
  std::vector<Keypoint> kps = {{3.0, 3.0, 1.f}, {200.0, 3.0, 1.f}, {3.0, -50.0, 1.f}};
  ExtractConfig cfg;
  cfg.method = DescMethod::avg;
  auto res = extract_descriptors(F, kps, cfg);
  CHECK(res.descriptors.size() == 1);
  CHECK(res.skipped == 2);
}

TEST_CASE("paper-scale aligned descriptors have length 1024", "[invmap]") {
  // C=64, |G|=16 -> 64 * 16 = 1024.
  GroupTensor F(64, 16, 4, 4);
  Rng rng(34);
  for (auto& v : F.data) v = float(rng.uniform(0.1, 1.0));
  std::vector<Keypoint> kps = {{3.0, 3.0, 1.f}};
  ExtractConfig cfg;
  cfg.method = DescMethod::align;
  auto res = extract_descriptors(F, kps, cfg);
  REQUIRE(res.descriptors.size() == 1);
  CHECK(res.descriptors[0].d.size() == 1024);
}

TEST_CASE("GT-aligned descriptors match across a quarter rotation", "[invmap]") {
  // Corresponding keypoints of an image and its rot90, each aligned by
  // its own GT shift, produce identical descriptors up to float noise.
  eq::Backbone<double> net(eq::BackboneConfig{}, 17);
  const int S = 24;
  ScalarImage img = tex::make_texture(0, S, S, 55);
  ScalarImage rot(S, S);
  detail::rotate_plane_quarter(img.data.data(), rot.data.data(), S, S, 1);

  GroupTensor FA = net.features(img);
  GroupTensor FB = net.features(rot);

  // Pixel (y, x) of A lands at (W-1-x, y) in B for q=1.
  std::vector<Keypoint> ka, kb;
  for (double y : {6.0, 11.0, 15.0})
    for (double x : {7.0, 12.0, 16.0}) {
      ka.push_back({x, y, 1.f});
      kb.push_back({y, double(S - 1) - x, 1.f});
    }

  // B = rot_q1(A) corresponds to theta_GT = 270 degrees: Delta_GT = 3.
  ExtractConfig ea, eb;
  ea.method = eb.method = DescMethod::align;
  ea.delta_override = 0;
  eb.delta_override = 3;
  auto da = extract_descriptors(FA, ka, ea);
  auto db = extract_descriptors(FB, kb, eb);
  REQUIRE(da.descriptors.size() == ka.size());
  REQUIRE(db.descriptors.size() == kb.size());
  for (size_t i = 0; i < ka.size(); ++i) {
    INFO("keypoint " << i);
    CHECK(max_abs_diff(da.descriptors[i].d, db.descriptors[i].d) <= 1e-3f);
  }
}

TEST_CASE("descriptor files round-trip byte-identically", "[invmap]") {
  Rng rng(35);
  std::vector<Descriptor> ds(3);
  for (size_t i = 0; i < ds.size(); ++i) {
    ds[i].keypoint_id = int(i);
    ds[i].x = rng.uniform(0, 100);
    ds[i].y = rng.uniform(0, 100);
    ds[i].delta = int(i) % 4;
    ds[i].d.resize(8);
    for (auto& v : ds[i].d) v = float(rng.uniform(-1.0, 1.0));
  }
  const std::string path = "invmap_dsc_roundtrip.bin";
  save_descriptors(path, ds);
  auto back = load_descriptors(path);
  REQUIRE(back.size() == ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    CHECK(back[i].keypoint_id == ds[i].keypoint_id);
    CHECK(back[i].delta == ds[i].delta);
    CHECK(float(back[i].x) == float(ds[i].x));
    CHECK(float(back[i].y) == float(ds[i].y));
    CHECK(back[i].d == ds[i].d);
  }

  const std::string path2 = "invmap_dsc_roundtrip2.bin";
  save_descriptors(path2, back);
  std::FILE* f1 = std::fopen(path.c_str(), "rb");
  std::FILE* f2 = std::fopen(path2.c_str(), "rb");
  REQUIRE(f1);
  REQUIRE(f2);
  std::string b1, b2;
  char buf[4096];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f1)) > 0) b1.append(buf, n);
  while ((n = std::fread(buf, 1, sizeof buf, f2)) > 0) b2.append(buf, n);
  std::fclose(f1);
  std::fclose(f2);
  CHECK(b1 == b2);
  std::remove(path.c_str());
  std::remove(path2.c_str());

  CHECK_THROWS_AS(load_descriptors("does_not_exist.dsc"), IoError);
}

TEST_CASE("descriptor method names parse and print", "[invmap]") {
  CHECK(desc_method_from_string("align") == DescMethod::align);
  CHECK(desc_method_from_string("avg") == DescMethod::avg);
  CHECK(desc_method_from_string("max") == DescMethod::max);
  CHECK(desc_method_from_string("none") == DescMethod::none);
  CHECK_THROWS_AS(desc_method_from_string("mean"), ConfigError);
  CHECK(std::string(to_string(DescMethod::align)) == "align");
}
