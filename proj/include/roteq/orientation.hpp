#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/tensor.hpp"

namespace roteq {

struct OrientationEstimate {
  double theta_deg = 0;  // bin center, multiple of 360/|G|
  int delta = 0;         // argmax index in [0, |G|)
  float score = 0;
};

/// O = F[0], the first channel of the equivariant tensor. It doubles as
/// part of the descriptor; no separate head exists.
inline GroupTensor histogram_map(const GroupTensor& F) {
  GroupTensor O(1, F.G, F.H, F.W);
  std::copy_n(F.data.begin(), size_t(F.G) * F.H * F.W, O.data.begin());
  return O;
}

/// Argmax bin of a |G|-vector of scores; ties go to the lowest index.
inline OrientationEstimate dominant_orientation(const std::vector<float>& o) {
  if (o.size() < 2) throw ShapeMismatch("dominant_orientation: |G| >= 2 required");
  int best = 0;
  for (int i = 1; i < int(o.size()); ++i)
    if (o[size_t(i)] > o[size_t(best)]) best = i;
  OrientationEstimate e;
  e.delta = best;
  e.theta_deg = 360.0 * best / double(o.size());
  e.score = o[size_t(best)];
  return e;
}

/// Bins whose raw score reaches ratio * max, in descending score order
/// (ties by lower index), truncated to k_max. ratio = 0 selects the
/// static top-k_max strategy. The dominant orientation is always first.
inline std::vector<OrientationEstimate> candidate_orientations(
    const std::vector<float>& o, double ratio, int k_max) {
  if (ratio < 0 || ratio > 1) throw ConfigError("candidate ratio must be in [0, 1]");
  if (k_max < 1) throw ConfigError("candidate k_max must be >= 1");
  const int G = int(o.size());
  OrientationEstimate top = dominant_orientation(o);

  std::vector<int> order(o.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (o[size_t(a)] != o[size_t(b)]) return o[size_t(a)] > o[size_t(b)];
    return a < b;
  });

  std::vector<OrientationEstimate> out;
  for (int idx : order) {
    if (int(out.size()) >= k_max) break;
    // The threshold never drops the dominant bin itself (relevant when
    // the maximum score is negative and ratio * max exceeds it).
    if (!out.empty() && ratio > 0 &&
        double(o[size_t(idx)]) < ratio * double(top.score))
      break;
    OrientationEstimate e;
    e.delta = idx;
    e.theta_deg = 360.0 * idx / double(G);
    e.score = o[size_t(idx)];
    out.push_back(e);
  }
  return out;
}

}  // namespace roteq
