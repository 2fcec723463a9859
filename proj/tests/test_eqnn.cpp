#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "roteq/equivariant.hpp"
#include "roteq/rng.hpp"
#include "roteq/tensor.hpp"
#include "roteq/textures.hpp"

using namespace roteq;
using ad::Buf;
using ad::Node;
using ad::Tape;

namespace {

ScalarImage rot90_image(const ScalarImage& img, int q) {
  REQUIRE(img.H == img.W);
  ScalarImage out(img.H, img.W);
  detail::rotate_plane_quarter(img.data.data(), out.data.data(), img.H, img.W,
                               mod(q, 4));
  return out;
}

GroupTensor to_group(const Buf<double>& b) {
  REQUIRE(b.rank() == 4);
  GroupTensor t(b.dim(0), b.dim(1), b.dim(2), b.dim(3));
  for (size_t i = 0; i < b.size(); ++i) t.data[i] = float(b.v[i]);
  return t;
}

float max_abs_diff(const GroupTensor& a, const GroupTensor& b) {
  REQUIRE(a.same_dims(b));
  float m = 0.f;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

Buf<double> image_buf(const ScalarImage& img) {
  Buf<double> b({img.H, img.W});
  for (size_t i = 0; i < b.size(); ++i) b.v[i] = img.data[i];
  return b;
}

Buf<double> random_buf(std::vector<int> dims, uint64_t seed, double lo = -0.5,
                       double hi = 0.5) {
  Buf<double> b(std::move(dims));
  Rng rng(seed);
  for (auto& v : b.v) v = rng.uniform(lo, hi);
  return b;
}

}  // namespace

TEST_CASE("rotate_angle is identity at 0 and exact at quarter turns", "[eqnn]") {
  std::vector<double> k3 = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(eq::rotate_angle(k3, 3, 0.0) == k3);

  // rotate_angle realizes R(90m + r) = Q^(-m) o R(r), so +90 degrees is
  // the exact array rotation out(y, x) = in(H-1-x, y).
  std::vector<double> r = eq::rotate_angle(k3, 3, 90.0);
  std::vector<double> expect = {7, 4, 1, 8, 5, 2, 9, 6, 3};
  CHECK(r == expect);

  std::vector<double> r4 = eq::rotate_angle(eq::rotate_angle(r, 3, 90.0), 3, 180.0);
  CHECK(r4 == k3);
}

TEST_CASE("rotate_angle at 45 degrees preserves symmetric kernels", "[eqnn]") {
  // 1x1 kernels are exactly invariant at any angle.
  std::vector<double> k1 = {0.7};
  CHECK(eq::rotate_angle(k1, 1, 45.0) == k1);
  CHECK(eq::rotate_angle(k1, 1, 17.0) == k1);

  // A radial 3x3 kernel is invariant up to interpolation loss at the
  // corners (zeros outside support bound the deviation).
  std::vector<double> radial = {0.0625, 0.125, 0.0625, 0.125, 0.25,
                                0.125,  0.0625, 0.125, 0.0625};
  std::vector<double> r = eq::rotate_angle(radial, 3, 45.0);
  for (size_t i = 0; i < 9; ++i)
    CHECK_THAT(r[i], Catch::Matchers::WithinAbs(radial[i], 0.07));
  CHECK_THAT(r[4], Catch::Matchers::WithinAbs(radial[4], 1e-9));
}

TEST_CASE("rotate_angle satisfies the quarter-decomposition law", "[eqnn]") {
  // R(theta + 90) == Q^(-1) o R(theta) bit-for-bit: the quarter part is
  // an exact array rotation regardless of the residual.
  Rng rng(77);
  std::vector<double> k(25);
  for (auto& v : k) v = rng.uniform(-1.0, 1.0);
  for (double theta : {0.0, 13.0, 45.0, 71.5}) {
    std::vector<double> lhs = eq::rotate_angle(k, 5, theta + 90.0);
    std::vector<double> mid = eq::rotate_angle(k, 5, theta);
    std::vector<double> rhs(25);
    detail::rotate_plane_quarter(mid.data(), rhs.data(), 5, 5, 3);
    CHECK(lhs == rhs);
  }
}

TEST_CASE("lift_conv on a constant image is constant along the group axis",
          "[eqnn]") {
  // N=4 kernel rotations are exact, so interior responses match exactly;
  // borders clip differently per rotation and are excluded.
  Tape<double> t;
  Node img = t.constant(Buf<double>({12, 12}, 0.6));
  Node w = t.constant(random_buf({2, 1, 3, 3}, 5));
  Node b = t.constant(Buf<double>({2}));
  Node out = t.lift_conv(img, w, b, 4);
  const Buf<double>& o = t.val(out);
  REQUIRE(o.dims == std::vector<int>{2, 4, 12, 12});
  for (int c = 0; c < 2; ++c)
    for (int g = 1; g < 4; ++g)
      for (int y = 1; y < 11; ++y)
        for (int x = 1; x < 11; ++x) {
          const double v0 = o.v[((size_t(c) * 4 + 0) * 12 + y) * 12 + x];
          const double vg = o.v[((size_t(c) * 4 + g) * 12 + y) * 12 + x];
          REQUIRE_THAT(vg, Catch::Matchers::WithinAbs(v0, 1e-9));
        }
}

TEST_CASE("lift_conv with a 1x1 kernel scales the image in every slot", "[eqnn]") {
  Tape<double> t;
  Buf<double> ib = random_buf({6, 6}, 15, 0.0, 1.0);
  Node img = t.constant(ib);
  Buf<double> wb({1, 1, 1, 1});
  wb.v[0] = 2.5;
  Node w = t.constant(wb);
  Buf<double> bb({1});
  bb.v[0] = 0.25;
  Node out = t.lift_conv(img, w, t.constant(bb), 4);
  const Buf<double>& o = t.val(out);
  for (int g = 0; g < 4; ++g)
    for (size_t i = 0; i < 36; ++i)
      CHECK_THAT(o.v[size_t(g) * 36 + i],
                 Catch::Matchers::WithinAbs(2.5 * ib.v[i] + 0.25, 1e-12));
}

TEST_CASE("lift_conv satisfies the N=4 equivariance law", "[eqnn]") {
  ScalarImage img = tex::make_texture(0, 16, 16, 33);
  Tape<double> t;
  Node w = t.constant(random_buf({3, 1, 3, 3}, 44));
  Node b = t.constant(random_buf({3}, 45));

  Node f_img = t.lift_conv(t.constant(image_buf(img)), w, b, 4);
  Node f_rot = t.lift_conv(t.constant(image_buf(rot90_image(img, 1))), w, b, 4);

  GroupTensor lhs = to_group(t.val(f_rot));
  GroupTensor rhs = rotate_spatial_quarter(cyclic_shift(to_group(t.val(f_img)), 1), 1);
  CHECK(max_abs_diff(lhs, rhs) <= 1e-4f);
}

TEST_CASE("group_conv identity filter at group offset 0 passes input through",
          "[eqnn]") {
  const int C = 3, N = 4, k = 3;
  Tape<double> t;
  Buf<double> xb = random_buf({C, N, 6, 6}, 51);
  Buf<double> wb({C, C, N, k, k});
  for (int c = 0; c < C; ++c) wb.v[(((size_t(c) * C + c) * N + 0) * k + 1) * k + 1] = 1.0;
  Node out = t.group_conv(t.constant(xb), t.constant(wb), t.constant(Buf<double>({C})));
  const Buf<double>& o = t.val(out);
  REQUIRE(o.dims == xb.dims);
  for (size_t i = 0; i < o.size(); ++i)
    REQUIRE_THAT(o.v[i], Catch::Matchers::WithinAbs(xb.v[i], 1e-12));
}

TEST_CASE("group_conv with zero kernels broadcasts the bias", "[eqnn]") {
  Tape<double> t;
  Buf<double> bb({2});
  bb.v = {0.5, -1.5};
  Node out = t.group_conv(t.constant(random_buf({3, 4, 5, 5}, 52)),
                          t.constant(Buf<double>({2, 3, 4, 3, 3})), t.constant(bb));
  const Buf<double>& o = t.val(out);
  REQUIRE(o.dims == std::vector<int>{2, 4, 5, 5});
  for (int co = 0; co < 2; ++co)
    for (size_t i = 0; i < size_t(4) * 25; ++i)
      CHECK(o.v[size_t(co) * 4 * 25 + i] == bb.v[size_t(co)]);
}

TEST_CASE("two stacked group convs satisfy the N=4 equivariance law", "[eqnn]") {
  ScalarImage img = tex::make_texture(1, 16, 16, 63);
  Tape<double> t;
  Node lw = t.constant(random_buf({2, 1, 3, 3}, 71));
  Node lb = t.constant(random_buf({2}, 72));
  Node g1w = t.constant(random_buf({3, 2, 4, 3, 3}, 73));
  Node g1b = t.constant(random_buf({3}, 74));
  Node g2w = t.constant(random_buf({2, 3, 4, 3, 3}, 75));
  Node g2b = t.constant(random_buf({2}, 76));

  auto run = [&](const ScalarImage& im) {
    Node x = t.lift_conv(t.constant(image_buf(im)), lw, lb, 4);
    x = t.relu(x);
    x = t.group_conv(x, g1w, g1b);
    x = t.relu(x);
    x = t.group_conv(x, g2w, g2b);
    return to_group(t.val(x));
  };

  GroupTensor f = run(img);
  GroupTensor f_rot = run(rot90_image(img, 1));
  GroupTensor expect = rotate_spatial_quarter(cyclic_shift(f, 1), 1);
  CHECK(max_abs_diff(f_rot, expect) <= 1e-4f);
}

TEST_CASE("backbone with a single-stage pyramid returns that stage", "[eqnn]") {
  eq::BackboneConfig cfg;
  cfg.group_order = 4;
  cfg.widths = {5};
  cfg.strides = {2};
  cfg.pyramid = {1};
  eq::Backbone<double> net(cfg, 7);
  ScalarImage img = tex::make_texture(2, 12, 12, 81);

  Tape<double> t;
  auto bd = net.bind(t, false);
  auto f = net.forward(t, bd, t.constant(image_buf(img)));
  const Buf<double>& feat = t.val(f.features);
  const Buf<double>& stage = t.val(f.stage_out[0]);
  REQUIRE(feat.dims == std::vector<int>{5, 4, 6, 6});
  CHECK(feat.v == stage.v);
}

TEST_CASE("backbone concatenates pyramid stages along channels", "[eqnn]") {
  eq::BackboneConfig cfg;
  cfg.group_order = 4;
  cfg.widths = {3, 6};
  cfg.strides = {2, 1};
  cfg.pyramid = {1, 2};
  CHECK(cfg.fused_channels() == 9);
  CHECK(cfg.descriptor_dim() == 36);

  eq::Backbone<double> net(cfg, 9);
  ScalarImage img = tex::make_texture(0, 12, 12, 82);
  GroupTensor F = net.features(img);
  REQUIRE(F.C == 9);
  REQUIRE(F.G == 4);
  REQUIRE(F.H == 6);
  REQUIRE(F.W == 6);

  // Both stages live at 6x6 already, so fused channels equal them directly.
  Tape<double> t;
  auto bd = net.bind(t, false);
  auto f = net.forward(t, bd, t.constant(image_buf(img)));
  const Buf<double>& s1 = t.val(f.stage_out[0]);
  const Buf<double>& s2 = t.val(f.stage_out[1]);
  const Buf<double>& fused = t.val(f.features);
  for (size_t i = 0; i < s1.size(); ++i)
    CHECK(fused.v[i] == s1.v[i]);
  for (size_t i = 0; i < s2.size(); ++i)
    CHECK(fused.v[s1.size() + i] == s2.v[i]);
}

TEST_CASE("full backbone is C4-equivariant under quarter turns", "[eqnn]") {
  eq::Backbone<double> net(eq::BackboneConfig{}, 17);
  ScalarImage img = tex::make_texture(0, 24, 24, 91);
  GroupTensor F = net.features(img);
  for (int q = 1; q < 4; ++q) {
    GroupTensor lhs = net.features(rot90_image(img, q));
    GroupTensor rhs = rotate_spatial_quarter(cyclic_shift(F, q), q);
    INFO("q=" << q);
    CHECK(max_abs_diff(lhs, rhs) <= 1e-4f);
  }
}

TEST_CASE("|G|=8 and |G|=16 backbones stay equivariant at 90 degrees", "[eqnn]") {
  for (int N : {8, 16}) {
    eq::BackboneConfig cfg;
    cfg.group_order = N;
    cfg.widths = {3, 4};
    cfg.strides = {2, 1};
    cfg.pyramid = {1, 2};
    eq::Backbone<double> net(cfg, 23);
    ScalarImage img = tex::make_texture(1, 16, 16, 92);
    GroupTensor F = net.features(img);
    GroupTensor lhs = net.features(rot90_image(img, 1));
    GroupTensor rhs = rotate_spatial_quarter(cyclic_shift(F, N / 4), 1);
    INFO("N=" << N);
    CHECK(max_abs_diff(lhs, rhs) <= 1e-3f);
  }
}

TEST_CASE("parameter counts follow the weight-tied formula", "[eqnn]") {
  eq::BackboneConfig cfg;  // widths {8,16,16,32}, k=3, N=4
  eq::Backbone<double> net(cfg, 3);
  // lift: 8*1*3*3 + 8; gconvs: Co*Ci*N*k^2 + Co
  size_t expect = 8 * 1 * 3 * 3 + 8;
  expect += size_t(16) * 8 * 4 * 9 + 16;
  expect += size_t(16) * 16 * 4 * 9 + 16;
  expect += size_t(32) * 16 * 4 * 9 + 32;
  CHECK(net.param_count() == expect);
  CHECK(net.gconvs[0].param_count() == size_t(16) * 8 * 4 * 9 + 16);
}

TEST_CASE("feature coordinate mapping round-trips", "[eqnn]") {
  for (double x : {0.0, 1.0, 7.5, 31.0}) {
    CHECK_THAT(eq::to_image_coord(eq::to_feature_coord(x)),
               Catch::Matchers::WithinAbs(x, 1e-12));
  }
  // stride-2 cell i covers image pixels {2i, 2i+1}; its center is 2i+0.5.
  CHECK_THAT(eq::to_feature_coord(2.0 * 3 + 0.5), Catch::Matchers::WithinAbs(3.0, 1e-12));
}

TEST_CASE("backbone config validation rejects bad settings", "[eqnn]") {
  eq::BackboneConfig cfg;
  cfg.group_order = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.kernel_size = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.pyramid = {9};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.strides = {2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(eq::BackboneConfig{}.validate());
}

TEST_CASE("backbone rejects odd image dims", "[eqnn]") {
  eq::Backbone<double> net(eq::BackboneConfig{}, 3);
  ScalarImage img(15, 15, 0.5f);
  CHECK_THROWS_AS(net.features(img), ShapeMismatch);
}
