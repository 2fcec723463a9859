#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/homography.hpp"
#include "roteq/rng.hpp"

namespace roteq {

struct PointPair {
  double ax = 0, ay = 0, bx = 0, by = 0;
};

namespace detail {

/// Eigen-decomposition of a symmetric 9x9 via cyclic Jacobi; returns the
/// eigenvector of the smallest eigenvalue.
inline std::array<double, 9> smallest_eigenvector9(std::array<double, 81> a) {
  std::array<double, 81> v{};
  for (int i = 0; i < 9; ++i) v[size_t(i * 9 + i)] = 1.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (int p = 0; p < 9; ++p)
      for (int q = p + 1; q < 9; ++q) off += a[size_t(p * 9 + q)] * a[size_t(p * 9 + q)];
    if (off < 1e-24) break;
    for (int p = 0; p < 9; ++p)
      for (int q = p + 1; q < 9; ++q) {
        const double apq = a[size_t(p * 9 + q)];
        if (std::abs(apq) < 1e-30) continue;
        const double app = a[size_t(p * 9 + p)], aqq = a[size_t(q * 9 + q)];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < 9; ++k) {
          const double akp = a[size_t(k * 9 + p)], akq = a[size_t(k * 9 + q)];
          a[size_t(k * 9 + p)] = c * akp - s * akq;
          a[size_t(k * 9 + q)] = s * akp + c * akq;
        }
        for (int k = 0; k < 9; ++k) {
          const double apk = a[size_t(p * 9 + k)], aqk = a[size_t(q * 9 + k)];
          a[size_t(p * 9 + k)] = c * apk - s * aqk;
          a[size_t(q * 9 + k)] = s * apk + c * aqk;
        }
        for (int k = 0; k < 9; ++k) {
          const double vkp = v[size_t(k * 9 + p)], vkq = v[size_t(k * 9 + q)];
          v[size_t(k * 9 + p)] = c * vkp - s * vkq;
          v[size_t(k * 9 + q)] = s * vkp + c * vkq;
        }
      }
  }
  int best = 0;
  for (int i = 1; i < 9; ++i)
    if (a[size_t(i * 9 + i)] < a[size_t(best * 9 + best)]) best = i;
  std::array<double, 9> h;
  for (int k = 0; k < 9; ++k) h[size_t(k)] = v[size_t(k * 9 + best)];
  return h;
}

struct Normalization {
  double cx = 0, cy = 0, s = 1;

  void apply(double x, double y, double& ox, double& oy) const {
    ox = (x - cx) * s;
    oy = (y - cy) * s;
  }

  Homography matrix() const {
    Homography t;
    t.h = {s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1};
    return t;
  }
};

inline Normalization normalize_points(const std::vector<PointPair>& pts, bool side_a) {
  Normalization n;
  for (const auto& p : pts) {
    n.cx += side_a ? p.ax : p.bx;
    n.cy += side_a ? p.ay : p.by;
  }
  n.cx /= double(pts.size());
  n.cy /= double(pts.size());
  double mean_d = 0;
  for (const auto& p : pts) {
    const double dx = (side_a ? p.ax : p.bx) - n.cx;
    const double dy = (side_a ? p.ay : p.by) - n.cy;
    mean_d += std::sqrt(dx * dx + dy * dy);
  }
  mean_d /= double(pts.size());
  if (mean_d < 1e-9) throw Degenerate("coincident points");
  n.s = std::sqrt(2.0) / mean_d;
  return n;
}

}  // namespace detail

/// Hartley-normalized DLT over >= 4 correspondences.
inline Homography fit_homography_dlt(const std::vector<PointPair>& pts) {
  if (pts.size() < 4) throw TooFewMatches("DLT needs >= 4 correspondences");
  const auto na = detail::normalize_points(pts, true);
  const auto nb = detail::normalize_points(pts, false);

  // Accumulate A^T A of the 2n x 9 DLT system directly.
  std::array<double, 81> ata{};
  for (const auto& p : pts) {
    double x, y, u, v;
    na.apply(p.ax, p.ay, x, y);
    nb.apply(p.bx, p.by, u, v);
    const double r1[9] = {-x, -y, -1, 0, 0, 0, u * x, u * y, u};
    const double r2[9] = {0, 0, 0, -x, -y, -1, v * x, v * y, v};
    for (int i = 0; i < 9; ++i)
      for (int j = 0; j < 9; ++j)
        ata[size_t(i * 9 + j)] += r1[i] * r1[j] + r2[i] * r2[j];
  }
  const auto h = detail::smallest_eigenvector9(ata);
  Homography Hn;
  for (int i = 0; i < 9; ++i) Hn.h[size_t(i)] = h[size_t(i)];
  if (std::abs(Hn.det()) < 1e-12) throw Degenerate("DLT produced a singular matrix");
  // Denormalize: H = Tb^-1 * Hn * Ta.
  Homography H = matmul(inverse(nb.matrix()), matmul(Hn, na.matrix()));
  H.normalize();
  return H;
}

struct RansacConfig {
  int iterations = 1000;
  double inlier_radius = 3.0;
  uint64_t seed = 7;
};

struct RansacResult {
  Homography H;
  std::vector<int> inliers;
  bool ok = false;
};

inline int count_inliers(const Homography& H, const std::vector<PointPair>& pts,
                         double radius, std::vector<int>* idx = nullptr) {
  int n = 0;
  for (int i = 0; i < int(pts.size()); ++i) {
    double px, py;
    try {
      project(H, pts[size_t(i)].ax, pts[size_t(i)].ay, px, py);
    } catch (const Degenerate&) {
      continue;
    }
    const double dx = px - pts[size_t(i)].bx, dy = py - pts[size_t(i)].by;
    if (dx * dx + dy * dy <= radius * radius) {
      ++n;
      if (idx) idx->push_back(i);
    }
  }
  return n;
}

/// Classic 4-point RANSAC with a final refit on the best inlier set.
inline RansacResult ransac_homography(const std::vector<PointPair>& pts,
                                      const RansacConfig& cfg = {}) {
  RansacResult res;
  if (pts.size() < 4) return res;
  Rng rng(cfg.seed);
  int best = -1;
  Homography best_h;
  for (int it = 0; it < cfg.iterations; ++it) {
    int idx[4];
    idx[0] = rng.index(int(pts.size()));
    for (int k = 1; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = rng.index(int(pts.size()));
        fresh = true;
        for (int j = 0; j < k; ++j) fresh &= idx[k] != idx[j];
      }
    }
    std::vector<PointPair> minimal = {pts[size_t(idx[0])], pts[size_t(idx[1])],
                                      pts[size_t(idx[2])], pts[size_t(idx[3])]};
    Homography h;
    try {
      h = fit_homography_dlt(minimal);
    } catch (const Error&) {
      continue;
    }
    const int n = count_inliers(h, pts, cfg.inlier_radius);
    if (n > best) {
      best = n;
      best_h = h;
    }
  }
  if (best < 4) return res;
  std::vector<int> inl;
  count_inliers(best_h, pts, cfg.inlier_radius, &inl);
  std::vector<PointPair> support;
  for (int i : inl) support.push_back(pts[size_t(i)]);
  try {
    res.H = support.size() >= 4 ? fit_homography_dlt(support) : best_h;
  } catch (const Error&) {
    res.H = best_h;
  }
  res.inliers.clear();
  count_inliers(res.H, pts, cfg.inlier_radius, &res.inliers);
  res.ok = int(res.inliers.size()) >= 4;
  return res;
}

struct HEstimation {
  bool pass = false;
  double corner_error = std::numeric_limits<double>::infinity();
  int inliers = 0;
};

/// RANSAC-fit a homography from the matches and compare the four image
/// corners under the estimate vs the ground truth; pass iff the mean
/// corner distance is <= eps. Fewer than 4 matches counts as a fail.
inline HEstimation hestimation(const std::vector<PointPair>& pts,
                               const Homography& H_gt, int width, int height,
                               double eps = 3.0, const RansacConfig& cfg = {}) {
  HEstimation out;
  if (pts.size() < 4) return out;
  RansacResult r = ransac_homography(pts, cfg);
  if (!r.ok) return out;
  out.inliers = int(r.inliers.size());
  const double xs[4] = {0, double(width - 1), double(width - 1), 0};
  const double ys[4] = {0, 0, double(height - 1), double(height - 1)};
  double err = 0;
  for (int i = 0; i < 4; ++i) {
    double ex, ey, gx, gy;
    try {
      project(r.H, xs[i], ys[i], ex, ey);
      project(H_gt, xs[i], ys[i], gx, gy);
    } catch (const Degenerate&) {
      return out;
    }
    err += std::sqrt((ex - gx) * (ex - gx) + (ey - gy) * (ey - gy));
  }
  out.corner_error = err / 4.0;
  out.pass = out.corner_error <= eps;
  return out;
}

}  // namespace roteq
