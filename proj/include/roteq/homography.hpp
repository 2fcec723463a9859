#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/keypoint.hpp"

namespace roteq {

/// Row-major 3x3 planar transform, normalized so h[8] = 1.
struct Homography {
  std::array<double, 9> h{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return {}; }

  double det() const {
    return h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6]) +
           h[2] * (h[3] * h[7] - h[4] * h[6]);
  }

  void normalize() {
    if (std::abs(h[8]) < 1e-12) throw Degenerate("homography with h33 ~ 0");
    for (double& x : h) x /= h[8];
    h[8] = 1.0;
  }
};

inline Homography matmul(const Homography& a, const Homography& b) {
  Homography c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a.h[size_t(3 * i + k)] * b.h[size_t(3 * k + j)];
      c.h[size_t(3 * i + j)] = s;
    }
  return c;
}

inline Homography inverse(const Homography& m) {
  const double d = m.det();
  if (std::abs(d) < 1e-9) throw Degenerate("homography is singular");
  const auto& h = m.h;
  Homography inv;
  inv.h = {(h[4] * h[8] - h[5] * h[7]) / d, (h[2] * h[7] - h[1] * h[8]) / d,
           (h[1] * h[5] - h[2] * h[4]) / d, (h[5] * h[6] - h[3] * h[8]) / d,
           (h[0] * h[8] - h[2] * h[6]) / d, (h[2] * h[3] - h[0] * h[5]) / d,
           (h[3] * h[7] - h[4] * h[6]) / d, (h[1] * h[6] - h[0] * h[7]) / d,
           (h[0] * h[4] - h[1] * h[3]) / d};
  inv.normalize();
  return inv;
}

/// Applies H to (x, y); throws Degenerate when the point maps to infinity.
inline void project(const Homography& H, double x, double y, double& ox, double& oy) {
  const double w = H.h[6] * x + H.h[7] * y + H.h[8];
  if (std::abs(w) < 1e-12) throw Degenerate("point projects to infinity");
  ox = (H.h[0] * x + H.h[1] * y + H.h[2]) / w;
  oy = (H.h[3] * x + H.h[4] * y + H.h[5]) / w;
}

inline Keypoint project(const Homography& H, const Keypoint& kp) {
  Keypoint out = kp;
  project(H, kp.x, kp.y, out.x, out.y);
  return out;
}

inline Homography translation(double tx, double ty) {
  Homography t;
  t.h = {1, 0, tx, 0, 1, ty, 0, 0, 1};
  return t;
}

/// R(theta) with the convention H11 = cos(theta), H21 = sin(theta), so
/// decompose_rotation(atan2) recovers theta over the full circle.
inline Homography rotation_deg(double theta_deg) {
  const double r = theta_deg * M_PI / 180.0;
  const double c = std::cos(r), s = std::sin(r);
  Homography m;
  m.h = {c, -s, 0, s, c, 0, 0, 0, 1};
  return m;
}

inline Homography scaling(double s) {
  Homography m;
  m.h = {s, 0, 0, 0, s, 0, 0, 0, 1};
  return m;
}

/// Rotation about the pixel-center grid center ((W-1)/2, (H-1)/2); at
/// quarter turns the induced warp is the exact array rotation.
inline Homography rotation_about_center(double theta_deg, int H, int W) {
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  return matmul(translation(cx, cy),
                matmul(rotation_deg(theta_deg), translation(-cx, -cy)));
}

/// theta_GT = atan2(H21, H11), mapped to [0, 360).
inline double decompose_rotation(const Homography& H) {
  if (H.h[3] == 0.0 && H.h[0] == 0.0)
    throw Undefined("decompose_rotation: H11 = H21 = 0");
  double deg = std::atan2(H.h[3], H.h[0]) * 180.0 / M_PI;
  if (deg < 0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

// --- homography file: 9 whitespace-separated reals, row-major ---------------

inline Homography load_homography(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open: " + path);
  Homography H;
  for (double& x : H.h)
    if (std::fscanf(f, "%lf", &x) != 1) {
      std::fclose(f);
      throw IoError("expected 9 reals in " + path);
    }
  std::fclose(f);
  H.normalize();
  return H;
}

inline void save_homography(const std::string& path, const Homography& H) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for write: " + path);
  std::fprintf(f, "%.17g %.17g %.17g\n%.17g %.17g %.17g\n%.17g %.17g %.17g\n", H.h[0],
               H.h[1], H.h[2], H.h[3], H.h[4], H.h[5], H.h[6], H.h[7], H.h[8]);
  std::fclose(f);
}

}  // namespace roteq
