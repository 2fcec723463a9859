#pragma once

#include <cmath>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/descriptor.hpp"
#include "roteq/homography.hpp"

namespace roteq {

/// Flat row-major descriptor matrix with per-row keypoint metadata.
/// Multi-candidate descriptors appear as independent rows that share a
/// keypoint id.
struct DescriptorSet {
  int dim = 0;
  std::vector<float> rows;       // count x dim
  std::vector<int> keypoint_id;  // per row
  std::vector<double> x, y;      // per row, source-image coordinates

  int count() const { return int(keypoint_id.size()); }
  const float* row(int i) const { return rows.data() + size_t(i) * dim; }

  static DescriptorSet from(const std::vector<Descriptor>& ds) {
    DescriptorSet s;
    if (ds.empty()) return s;
    s.dim = int(ds[0].d.size());
    for (const auto& d : ds) {
      if (int(d.d.size()) != s.dim)
        throw DimMismatch("descriptor rows have differing dims");
      s.rows.insert(s.rows.end(), d.d.begin(), d.d.end());
      s.keypoint_id.push_back(d.keypoint_id);
      s.x.push_back(d.x);
      s.y.push_back(d.y);
    }
    return s;
  }
};

struct Match {
  int a = 0, b = 0;   // row indices
  double sim = 0;
};

/// Mutual nearest neighbours under cosine similarity (rows are unit
/// norm, so the dot product serves): (i, j) survives iff j is i's best
/// column and i is j's best row. Argmax ties resolve to the lowest index.
inline std::vector<Match> mutual_nn_match(const DescriptorSet& A,
                                          const DescriptorSet& B) {
  if (A.count() == 0 || B.count() == 0)
    throw DimMismatch("mutual_nn_match: empty descriptor set");
  if (A.dim != B.dim) throw DimMismatch("mutual_nn_match: dims differ");
  const int na = A.count(), nb = B.count(), D = A.dim;

  std::vector<double> sim(size_t(na) * nb);
  for (int i = 0; i < na; ++i) {
    const float* ar = A.row(i);
    for (int j = 0; j < nb; ++j) {
      const float* br = B.row(j);
      double s = 0;
      for (int d = 0; d < D; ++d) s += double(ar[d]) * br[d];
      sim[size_t(i) * nb + j] = s;
    }
  }
  std::vector<int> best_b(size_t(na), 0), best_a(size_t(nb), 0);
  for (int i = 0; i < na; ++i) {
    int arg = 0;
    for (int j = 1; j < nb; ++j)
      if (sim[size_t(i) * nb + j] > sim[size_t(i) * nb + arg]) arg = j;
    best_b[size_t(i)] = arg;
  }
  for (int j = 0; j < nb; ++j) {
    int arg = 0;
    for (int i = 1; i < na; ++i)
      if (sim[size_t(i) * nb + j] > sim[size_t(arg) * nb + j]) arg = i;
    best_a[size_t(j)] = arg;
  }
  std::vector<Match> out;
  for (int i = 0; i < na; ++i) {
    const int j = best_b[size_t(i)];
    if (best_a[size_t(j)] == i) out.push_back({i, j, sim[size_t(i) * nb + j]});
  }
  return out;
}

struct MmaResult {
  std::vector<double> thresholds;
  std::vector<int> correct;   // per threshold
  int predicted = 0;
  std::vector<double> mma;    // correct / predicted; 0 when no predictions

  double at(double t) const {
    for (size_t i = 0; i < thresholds.size(); ++i)
      if (thresholds[i] == t) return mma[i];
    throw ConfigError("threshold not evaluated");
  }
};

/// A match is correct iff || project(H, kp_A) - kp_B ||_2 <= t. Zero
/// predicted matches score 0 at every threshold (the count is reported).
inline MmaResult mma(const std::vector<Match>& matches, const DescriptorSet& A,
                     const DescriptorSet& B, const Homography& H,
                     const std::vector<double>& thresholds) {
  MmaResult r;
  r.thresholds = thresholds;
  r.correct.assign(thresholds.size(), 0);
  r.predicted = int(matches.size());
  for (const auto& m : matches) {
    double px, py;
    project(H, A.x[size_t(m.a)], A.y[size_t(m.a)], px, py);
    const double dx = px - B.x[size_t(m.b)], dy = py - B.y[size_t(m.b)];
    const double err = std::sqrt(dx * dx + dy * dy);
    for (size_t t = 0; t < thresholds.size(); ++t)
      if (err <= thresholds[t]) ++r.correct[t];
  }
  for (size_t t = 0; t < thresholds.size(); ++t)
    r.mma.push_back(r.predicted ? double(r.correct[t]) / r.predicted : 0.0);
  return r;
}

}  // namespace roteq
