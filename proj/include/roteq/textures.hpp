#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "roteq/rng.hpp"
#include "roteq/tensor.hpp"

namespace roteq::tex {

inline ScalarImage checkerboard(int H, int W, int cell, float lo = 0.1f,
                                float hi = 0.9f) {
  ScalarImage img(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      img.data[size_t(y) * W + x] = ((y / cell + x / cell) % 2) ? hi : lo;
  return img;
}

inline ScalarImage white_square(int H, int W, int y0, int x0, int side) {
  ScalarImage img(H, W);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x) img.data[size_t(y) * W + x] = 1.0f;
  return img;
}

inline ScalarImage linear_gradient(int H, int W) {
  ScalarImage img(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      img.data[size_t(y) * W + x] = float(x + y) / float(W + H - 2);
  return img;
}

/// Random lattice values bilinearly upsampled; smooth but non-trivial.
inline ScalarImage value_noise(int H, int W, int cell, uint64_t seed) {
  Rng rng(seed);
  const int gh = H / cell + 2, gw = W / cell + 2;
  std::vector<float> lat(size_t(gh) * gw);
  for (float& v : lat) v = float(rng.uniform());
  ScalarImage img(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double fy = double(y) / cell, fx = double(x) / cell;
      const int y0 = int(fy), x0 = int(fx);
      const double ay = fy - y0, ax = fx - x0;
      const auto L = [&](int yy, int xx) { return lat[size_t(yy) * gw + xx]; };
      img.data[size_t(y) * W + x] =
          float((1 - ay) * ((1 - ax) * L(y0, x0) + ax * L(y0, x0 + 1)) +
                ay * ((1 - ax) * L(y0 + 1, x0) + ax * L(y0 + 1, x0 + 1)));
    }
  return img;
}

/// Value-noise background plus random rectangles and disks; corner-rich
/// and locally distinctive, which suits Harris detection and contrastive
/// training.
inline ScalarImage composite(int H, int W, uint64_t seed, int shapes = 14) {
  Rng rng(mix_seed(seed, 0x7e37, 1));
  ScalarImage img = value_noise(H, W, std::max(8, std::min(H, W) / 8), seed);
  for (float& v : img.data) v = 0.25f + 0.4f * v;
  for (int s = 0; s < shapes; ++s) {
    const float shade = float(rng.uniform(0.0, 1.0));
    if (rng.uniform() < 0.6) {
      const int h = 4 + rng.index(std::max(2, H / 4));
      const int w = 4 + rng.index(std::max(2, W / 4));
      const int y0 = rng.index(std::max(1, H - h));
      const int x0 = rng.index(std::max(1, W - w));
      for (int y = y0; y < std::min(H, y0 + h); ++y)
        for (int x = x0; x < std::min(W, x0 + w); ++x)
          img.data[size_t(y) * W + x] = shade;
    } else {
      const int rad = 3 + rng.index(std::max(2, std::min(H, W) / 8));
      const int cy = rng.index(H), cx = rng.index(W);
      for (int y = std::max(0, cy - rad); y < std::min(H, cy + rad + 1); ++y)
        for (int x = std::max(0, cx - rad); x < std::min(W, cx + rad + 1); ++x)
          if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= rad * rad)
            img.data[size_t(y) * W + x] = shade;
    }
  }
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

/// Voronoi mosaic of two-tone stripe gratings at random per-cell
/// orientations. Contrast is near-homogeneous, so keypoint identity
/// lives in the local orientation geometry rather than intensity.
inline ScalarImage grating_mosaic(int H, int W, uint64_t seed, int sites = 12,
                                  double period = 7.0) {
  Rng rng(mix_seed(seed, 0x6a1d, 2));
  struct Cell {
    double y, x, cs, sn, phase, lo, hi;
  };
  std::vector<Cell> cells(size_t(std::max(2, sites)));
  for (auto& c : cells) {
    c.y = rng.uniform(0.0, H);
    c.x = rng.uniform(0.0, W);
    const double ang = rng.uniform(0.0, 3.14159265358979323846);
    c.cs = std::cos(ang);
    c.sn = std::sin(ang);
    c.phase = rng.uniform(0.0, period);
    c.lo = 0.30 + rng.uniform(-0.04, 0.04);
    c.hi = 0.70 + rng.uniform(-0.04, 0.04);
  }
  ScalarImage img(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      size_t best = 0;
      double bd = 1e30;
      for (size_t i = 0; i < cells.size(); ++i) {
        const double dy = y - cells[i].y, dx = x - cells[i].x;
        const double d = dy * dy + dx * dx;
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      const Cell& c = cells[best];
      const double t = (x * c.cs + y * c.sn + c.phase) / period;
      const double s = t - std::floor(t);
      img.data[size_t(y) * W + x] = float(s < 0.5 ? c.lo : c.hi);
    }
  return img;
}

/// Flat-shaded Voronoi mosaic in two tones with mild per-cell jitter.
/// Cell junctions give corners at generic angles while contrast stays
/// near-homogeneous, so descriptors must encode local geometry.
inline ScalarImage polygon_mosaic(int H, int W, uint64_t seed, int sites = 24) {
  Rng rng(mix_seed(seed, 0x3c91, 4));
  struct Site {
    double y, x;
    float tone;
  };
  std::vector<Site> cells(size_t(std::max(3, sites)));
  for (size_t i = 0; i < cells.size(); ++i) {
    cells[i].y = rng.uniform(0.0, H);
    cells[i].x = rng.uniform(0.0, W);
    const float base = (i % 2 == 0) ? 0.32f : 0.68f;
    cells[i].tone = base + float(rng.uniform(-0.06, 0.06));
  }
  ScalarImage img(H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      size_t best = 0;
      double bd = 1e30;
      for (size_t i = 0; i < cells.size(); ++i) {
        const double dy = y - cells[i].y, dx = x - cells[i].x;
        const double d = dy * dy + dx * dx;
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      img.data[size_t(y) * W + x] = cells[best].tone;
    }
  return img;
}

/// Deterministic texture family for tests and synthetic corpora.
inline ScalarImage make_texture(int kind, int H, int W, uint64_t seed) {
  switch (kind % 4) {
    case 0: return composite(H, W, seed);
    case 1: return composite(H, W, mix_seed(seed, 2, 0), 22);
    case 2: {
      // blocky noise: hard edges everywhere
      Rng rng(mix_seed(seed, 3, 0));
      const int cell = std::max(4, std::min(H, W) / 12);
      ScalarImage img(H, W);
      const int gh = H / cell + 1, gw = W / cell + 1;
      std::vector<float> lat(size_t(gh) * gw);
      for (float& v : lat) v = float(rng.uniform());
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          img.data[size_t(y) * W + x] = lat[size_t(y / cell) * gw + x / cell];
      return img;
    }
    default: return composite(H, W, mix_seed(seed, 5, 0), 30);
  }
}

}  // namespace roteq::tex
