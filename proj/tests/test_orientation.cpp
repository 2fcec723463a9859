#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "roteq/orientation.hpp"
#include "roteq/rng.hpp"

using namespace roteq;

TEST_CASE("histogram_map selects the first channel", "[orientation]") {
  GroupTensor F(3, 4, 2, 2);
  Rng rng(7);
  for (auto& v : F.data) v = float(rng.uniform());
  GroupTensor O = histogram_map(F);
  REQUIRE(O.C == 1);
  REQUIRE(O.G == 4);
  for (int g = 0; g < 4; ++g)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) CHECK(O.at(0, g, y, x) == F.at(0, g, y, x));

  // C=1 tensor: O equals the whole tensor.
  GroupTensor F1(1, 4, 2, 2);
  for (auto& v : F1.data) v = float(rng.uniform());
  GroupTensor O1 = histogram_map(F1);
  CHECK(O1.data == F1.data);
}

TEST_CASE("dominant_orientation picks the argmax bin center", "[orientation]") {
  OrientationEstimate e = dominant_orientation({0.1f, 0.9f, 0.2f, 0.3f});
  CHECK(e.delta == 1);
  CHECK_THAT(e.theta_deg, Catch::Matchers::WithinAbs(90.0, 1e-12));
  CHECK(e.score == 0.9f);

  // Uniform histogram: tie goes to the lowest index.
  OrientationEstimate u = dominant_orientation({0.25f, 0.25f, 0.25f, 0.25f});
  CHECK(u.delta == 0);
  CHECK(u.theta_deg == 0.0);

  // |G|=16, peak at index 4 -> 4 * 360/16 = 90 degrees.
  std::vector<float> o16(16, 0.f);
  o16[4] = 1.f;
  CHECK_THAT(dominant_orientation(o16).theta_deg,
             Catch::Matchers::WithinAbs(90.0, 1e-12));

  CHECK_THROWS_AS(dominant_orientation({1.f}), ShapeMismatch);
}

TEST_CASE("candidate_orientations applies the ratio threshold", "[orientation]") {
  std::vector<float> o = {1.0f, 0.7f, 0.3f, 0.1f};
  auto cands = candidate_orientations(o, 0.6, 4);
  REQUIRE(cands.size() == 2);
  CHECK(cands[0].delta == 0);
  CHECK(cands[1].delta == 1);

  // ratio = 1.0 keeps exactly the argmax set.
  auto only = candidate_orientations(o, 1.0, 4);
  REQUIRE(only.size() == 1);
  CHECK(only[0].delta == 0);

  // ratio = 0 is the static top-k strategy.
  auto top3 = candidate_orientations(o, 0.0, 3);
  REQUIRE(top3.size() == 3);
  CHECK(top3[0].delta == 0);
  CHECK(top3[1].delta == 1);
  CHECK(top3[2].delta == 2);

  CHECK_THROWS_AS(candidate_orientations(o, -0.1, 4), ConfigError);
  CHECK_THROWS_AS(candidate_orientations(o, 0.6, 0), ConfigError);
}

TEST_CASE("k_max truncates the candidate list", "[orientation]") {
  std::vector<float> o = {1.0f, 0.9f, 0.8f, 0.7f};
  auto cands = candidate_orientations(o, 0.6, 2);
  REQUIRE(cands.size() == 2);
  CHECK(cands[0].delta == 0);
  CHECK(cands[1].delta == 1);
}

TEST_CASE("candidates always start with the dominant orientation", "[orientation]") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const int G = 2 + rng.index(15);
    std::vector<float> o(std::size_t(G), 0.0f);
    for (auto& v : o) v = float(rng.uniform(-1.0, 1.0));
    auto cands = candidate_orientations(o, 0.6, 4);
    REQUIRE_FALSE(cands.empty());
    CHECK(cands[0].delta == dominant_orientation(o).delta);
    CHECK(int(cands.size()) <= 4);
  }
}

TEST_CASE("argmax shifts opposite to a cyclic shift of the bins", "[orientation]") {
  // shifted[i] = o[(i + d) mod G] moves a peak at p to (p - d) mod G.
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const int G = 4 + rng.index(13);
    std::vector<float> o(std::size_t(G), 0.0f);
    for (auto& v : o) v = float(rng.uniform());
    o[size_t(rng.index(G))] += 2.f;  // unique max
    const int base = dominant_orientation(o).delta;
    const int d = rng.index(G);
    std::vector<float> shifted(std::size_t(G), 0.0f);
    for (int i = 0; i < G; ++i) shifted[size_t(i)] = o[size_t(mod(i + d, G))];
    CHECK(dominant_orientation(shifted).delta == mod(base - d, G));
  }
}

TEST_CASE("positive scaling leaves estimates unchanged", "[orientation]") {
  std::vector<float> o = {0.2f, 0.8f, 0.5f, 0.1f, 0.9f, 0.3f};
  auto base = candidate_orientations(o, 0.6, 4);
  std::vector<float> scaled = o;
  for (auto& v : scaled) v *= 7.5f;
  auto after = candidate_orientations(scaled, 0.6, 4);
  CHECK(dominant_orientation(scaled).delta == dominant_orientation(o).delta);
  REQUIRE(after.size() == base.size());
  for (size_t i = 0; i < base.size(); ++i) CHECK(after[i].delta == base[i].delta);
}

TEST_CASE("theta and delta stay locked to the bin grid", "[orientation]") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int G = 2 + rng.index(20);
    std::vector<float> o(std::size_t(G), 0.0f);
    for (auto& v : o) v = float(rng.uniform());
    OrientationEstimate e = dominant_orientation(o);
    CHECK(e.delta >= 0);
    CHECK(e.delta < G);
    CHECK_THAT(e.theta_deg, Catch::Matchers::WithinAbs(e.delta * 360.0 / G, 1e-12));
  }
}
