#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/keypoint.hpp"
#include "roteq/tensor.hpp"

namespace roteq {

struct HarrisParams {
  double sigma = 1.0;   // Gaussian window
  double k = 0.04;
  int nms_radius = 4;
  int margin = 8;
  double min_response = 1e-12;
};

struct HarrisResult {
  std::vector<Keypoint> keypoints;
  bool too_few = false;  // fewer than the requested K survived
};

namespace detail {

inline std::vector<float> gaussian_taps(double sigma) {
  const int r = std::max(1, int(std::ceil(3 * sigma)));
  std::vector<float> w(size_t(2 * r + 1));
  double s = 0;
  for (int i = -r; i <= r; ++i) s += w[size_t(i + r)] = float(std::exp(-0.5 * i * i / (sigma * sigma)));
  for (float& x : w) x = float(x / s);
  return w;
}

// Separable blur with replicated borders.
inline void gaussian_blur(std::vector<float>& img, int H, int W, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const int r = int(taps.size()) / 2;
  std::vector<float> tmp(img.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i)
        s += taps[size_t(i + r)] * img[size_t(y) * W + std::clamp(x + i, 0, W - 1)];
      tmp[size_t(y) * W + x] = float(s);
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0;
      for (int i = -r; i <= r; ++i)
        s += taps[size_t(i + r)] * tmp[size_t(std::clamp(y + i, 0, H - 1)) * W + x];
      img[size_t(y) * W + x] = float(s);
    }
}

}  // namespace detail

/// Dense Harris response: Sobel gradients, Gaussian-windowed structure
/// tensor, R = det - k * trace^2. Deterministic; no RNG involved.
inline std::vector<float> harris_response(const ScalarImage& img,
                                          const HarrisParams& p = {}) {
  const int H = img.H, W = img.W;
  auto at = [&](int y, int x) {
    return img.data[size_t(std::clamp(y, 0, H - 1)) * W + std::clamp(x, 0, W - 1)];
  };
  std::vector<float> ixx(size_t(H) * W), iyy(size_t(H) * W), ixy(size_t(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      ixx[size_t(y) * W + x] = float(gx * gx);
      iyy[size_t(y) * W + x] = float(gy * gy);
      ixy[size_t(y) * W + x] = float(gx * gy);
    }
  detail::gaussian_blur(ixx, H, W, p.sigma);
  detail::gaussian_blur(iyy, H, W, p.sigma);
  detail::gaussian_blur(ixy, H, W, p.sigma);
  std::vector<float> r(size_t(H) * W);
  for (size_t i = 0; i < r.size(); ++i) {
    const double a = ixx[i], b = iyy[i], c = ixy[i];
    const double tr = a + b;
    r[i] = float(a * b - c * c - p.k * tr * tr);
  }
  return r;
}

/// Top-K Harris corners after non-max suppression (square window of the
/// given radius; equal responses resolve to the first pixel in scan
/// order) and a border margin. Returns what exists with a flag when
/// fewer than K survive.
inline HarrisResult harris_keypoints(const ScalarImage& img, int K,
                                     const HarrisParams& p = {}) {
  if (K < 1) throw ConfigError("harris_keypoints: K >= 1 required");
  const int H = img.H, W = img.W;
  const auto r = harris_response(img, p);
  std::vector<Keypoint> kept;
  for (int y = p.margin; y < H - p.margin; ++y)
    for (int x = p.margin; x < W - p.margin; ++x) {
      const float v = r[size_t(y) * W + x];
      if (!(v > p.min_response)) continue;
      bool is_max = true;
      for (int dy = -p.nms_radius; dy <= p.nms_radius && is_max; ++dy)
        for (int dx = -p.nms_radius; dx <= p.nms_radius; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int qy = y + dy, qx = x + dx;
          if (qy < 0 || qy >= H || qx < 0 || qx >= W) continue;
          const float q = r[size_t(qy) * W + qx];
          if (q > v || (q == v && (qy < y || (qy == y && qx < x)))) {
            is_max = false;
            break;
          }
        }
      if (is_max) kept.push_back({double(x), double(y), v});
    }
  std::sort(kept.begin(), kept.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  HarrisResult res;
  res.too_few = int(kept.size()) < K;
  if (int(kept.size()) > K) kept.resize(size_t(K));
  res.keypoints = std::move(kept);
  return res;
}

}  // namespace roteq
