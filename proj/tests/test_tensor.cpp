#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "roteq/rng.hpp"
#include "roteq/tensor.hpp"

using namespace roteq;

namespace {

GroupTensor random_tensor(int C, int G, int H, int W, uint64_t seed) {
  GroupTensor t(C, G, H, W);
  Rng rng(seed);
  for (auto& v : t.data) v = float(rng.uniform(-1.0, 1.0));
  return t;
}

float max_abs_diff(const GroupTensor& a, const GroupTensor& b) {
  REQUIRE(a.same_dims(b));
  float m = 0.f;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("cyclic_shift moves group fibers forward", "[tensor]") {
  GroupTensor t(1, 4, 1, 1);
  const float a = 1.f, b = 2.f, c = 3.f, d = 4.f;
  t.at(0, 0, 0, 0) = a;
  t.at(0, 1, 0, 0) = b;
  t.at(0, 2, 0, 0) = c;
  t.at(0, 3, 0, 0) = d;

  GroupTensor s = cyclic_shift(t, 1);
  CHECK(s.at(0, 0, 0, 0) == b);
  CHECK(s.at(0, 1, 0, 0) == c);
  CHECK(s.at(0, 2, 0, 0) == d);
  CHECK(s.at(0, 3, 0, 0) == a);
}

TEST_CASE("cyclic_shift handles negative and wrapped deltas", "[tensor]") {
  GroupTensor t = random_tensor(2, 6, 3, 3, 11);
  CHECK(max_abs_diff(cyclic_shift(t, -1), cyclic_shift(t, 5)) == 0.f);
  CHECK(max_abs_diff(cyclic_shift(t, 6), t) == 0.f);
  CHECK(max_abs_diff(cyclic_shift(t, 13), cyclic_shift(t, 1)) == 0.f);
}

TEST_CASE("cyclic_shift composes additively", "[tensor]") {
  GroupTensor t = random_tensor(3, 8, 4, 5, 21);
  GroupTensor lhs = cyclic_shift(cyclic_shift(t, 3), 4);
  GroupTensor rhs = cyclic_shift(t, 7);
  CHECK(max_abs_diff(lhs, rhs) == 0.f);
}

TEST_CASE("rotate_spatial_quarter matches the 2x2 example", "[tensor]") {
  // in = [[1,2],[3,4]], q=1 -> [[2,4],[1,3]].
  GroupTensor t(1, 1, 2, 2);
  t.at(0, 0, 0, 0) = 1.f;
  t.at(0, 0, 0, 1) = 2.f;
  t.at(0, 0, 1, 0) = 3.f;
  t.at(0, 0, 1, 1) = 4.f;

  GroupTensor r = rotate_spatial_quarter(t, 1);
  CHECK(r.at(0, 0, 0, 0) == 2.f);
  CHECK(r.at(0, 0, 0, 1) == 4.f);
  CHECK(r.at(0, 0, 1, 0) == 1.f);
  CHECK(r.at(0, 0, 1, 1) == 3.f);
}

TEST_CASE("rotate_spatial_quarter composes and inverts", "[tensor]") {
  GroupTensor t = random_tensor(2, 4, 7, 7, 31);
  GroupTensor q1 = rotate_spatial_quarter(t, 1);
  GroupTensor q2 = rotate_spatial_quarter(q1, 1);
  CHECK(max_abs_diff(q2, rotate_spatial_quarter(t, 2)) == 0.f);
  GroupTensor back = rotate_spatial_quarter(q1, 3);
  CHECK(max_abs_diff(back, t) == 0.f);
  GroupTensor full = rotate_spatial_quarter(rotate_spatial_quarter(t, 2), 2);
  CHECK(max_abs_diff(full, t) == 0.f);
}

TEST_CASE("rotate_spatial_quarter requires a square grid", "[tensor]") {
  GroupTensor t(1, 1, 2, 3);
  CHECK_THROWS_AS(rotate_spatial_quarter(t, 1), NonSquare);
}

TEST_CASE("rotation and shift commute as independent axes", "[tensor]") {
  GroupTensor t = random_tensor(2, 8, 6, 6, 41);
  GroupTensor a = rotate_spatial_quarter(cyclic_shift(t, 3), 1);
  GroupTensor b = cyclic_shift(rotate_spatial_quarter(t, 1), 3);
  CHECK(max_abs_diff(a, b) == 0.f);
}

TEST_CASE("bilinear_sample interpolates the unit cell midpoint", "[tensor]") {
  // plane [[0,0],[1,1]], sample at the cell center -> 0.5.
  GroupTensor t(1, 1, 2, 2);
  t.at(0, 0, 1, 0) = 1.f;
  t.at(0, 0, 1, 1) = 1.f;
  auto v = bilinear_sample(t, 0.5, 0.5);
  REQUIRE(v.size() == 1);
  CHECK_THAT(v[0], Catch::Matchers::WithinAbs(0.5, 1e-7));
}

TEST_CASE("bilinear_sample is exact on lattice points", "[tensor]") {
  GroupTensor t = random_tensor(3, 2, 5, 4, 51);
  for (int y = 0; y < t.H; ++y)
    for (int x = 0; x < t.W; ++x) {
      auto v = bilinear_sample(t, double(y), double(x));
      for (int c = 0; c < t.C; ++c)
        for (int g = 0; g < t.G; ++g)
          CHECK_THAT(v[size_t(c) * t.G + g],
                     Catch::Matchers::WithinAbs(t.at(c, g, y, x), 1e-6));
    }
}

TEST_CASE("bilinear_sample is linear in the tensor", "[tensor]") {
  GroupTensor a = random_tensor(2, 3, 4, 4, 61);
  GroupTensor b = random_tensor(2, 3, 4, 4, 62);
  GroupTensor sum(2, 3, 4, 4);
  for (size_t i = 0; i < sum.data.size(); ++i) sum.data[i] = 2.f * a.data[i] + b.data[i];
  auto va = bilinear_sample(a, 1.3, 2.7);
  auto vb = bilinear_sample(b, 1.3, 2.7);
  auto vs = bilinear_sample(sum, 1.3, 2.7);
  for (size_t i = 0; i < vs.size(); ++i)
    CHECK_THAT(vs[i], Catch::Matchers::WithinAbs(2.f * va[i] + vb[i], 1e-5));
}

TEST_CASE("bilinear_sample rejects out-of-grid coordinates", "[tensor]") {
  GroupTensor t(1, 1, 3, 3);
  CHECK_THROWS_AS(bilinear_sample(t, -0.1, 1.0), OutOfBounds);
  CHECK_THROWS_AS(bilinear_sample(t, 1.0, 2.1), OutOfBounds);
  CHECK_NOTHROW(bilinear_sample(t, 2.0, 2.0));
}

TEST_CASE("tensor dump round-trips byte-identically", "[tensor]") {
  GroupTensor t = random_tensor(2, 4, 3, 5, 71);
  std::stringstream s1;
  dump_tensor(s1, t);
  GroupTensor back = load_tensor(s1);
  REQUIRE(back.same_dims(t));
  CHECK(max_abs_diff(back, t) == 0.f);

  std::stringstream s2;
  dump_tensor(s2, back);
  CHECK(s1.str() == s2.str());
}

TEST_CASE("load_tensor rejects corrupt streams", "[tensor]") {
  std::stringstream bad_magic("XX01");
  CHECK_THROWS_AS(load_tensor(bad_magic), IoError);

  GroupTensor t(1, 2, 2, 2);
  std::stringstream s;
  dump_tensor(s, t);
  std::string buf = s.str();
  std::stringstream truncated(buf.substr(0, buf.size() - 4));
  CHECK_THROWS_AS(load_tensor(truncated), IoError);
}
