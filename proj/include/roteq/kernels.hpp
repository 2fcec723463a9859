#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/tensor.hpp"

// Low-level array math shared by the autodiff primitives. All spatial
// convolutions are stride 1 with zero "same" padding and odd kernels;
// downsampling is done by block average pooling, which commutes with
// quarter rotations on even grids (odd-kernel strided convs do not).
namespace roteq::kernels {

/// out[co] += sum_ci conv2d(in[ci], w[co][ci]) + b[co], zero same padding.
/// in: Cin planes of H*W, w: [Cout][Cin][k][k], out: Cout planes of H*W.
template <typename T>
void conv2d_same(const T* in, const T* w, const T* bias, T* out, int Cin, int Cout,
                 int H, int W, int k) {
  const int pad = k / 2;
  const size_t plane = size_t(H) * W;
  for (int co = 0; co < Cout; ++co) {
    T* o = out + co * plane;
    const T bv = bias ? bias[co] : T(0);
    for (size_t i = 0; i < plane; ++i) o[i] = bv;
    for (int ci = 0; ci < Cin; ++ci) {
      const T* src = in + ci * plane;
      const T* kw = w + (size_t(co) * Cin + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - pad;
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          const T wv = kw[ky * k + kx];
          if (wv == T(0)) continue;
          for (int y = y0; y < y1; ++y) {
            const T* srow = src + size_t(y + dy) * W + dx;
            T* orow = o + size_t(y) * W;
            for (int x = x0; x < x1; ++x) orow[x] += wv * srow[x];
          }
        }
      }
    }
  }
}

/// grad_in[ci] += sum_co corr2d(grad_out[co], flip(w[co][ci])).
template <typename T>
void conv2d_same_grad_input(const T* grad_out, const T* w, T* grad_in, int Cin,
                            int Cout, int H, int W, int k) {
  const int pad = k / 2;
  const size_t plane = size_t(H) * W;
  for (int co = 0; co < Cout; ++co) {
    const T* go = grad_out + co * plane;
    for (int ci = 0; ci < Cin; ++ci) {
      T* gi = grad_in + ci * plane;
      const T* kw = w + (size_t(co) * Cin + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = -(ky - pad);
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = -(kx - pad);
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          const T wv = kw[ky * k + kx];
          if (wv == T(0)) continue;
          for (int y = y0; y < y1; ++y) {
            const T* grow = go + size_t(y + dy) * W + dx;
            T* irow = gi + size_t(y) * W;
            for (int x = x0; x < x1; ++x) irow[x] += wv * grow[x];
          }
        }
      }
    }
  }
}

/// grad_w[co][ci][ky][kx] += sum_p grad_out[co](p) * in[ci](p + offset).
template <typename T>
void conv2d_same_grad_weight(const T* grad_out, const T* in, T* grad_w, int Cin,
                             int Cout, int H, int W, int k) {
  const int pad = k / 2;
  const size_t plane = size_t(H) * W;
  for (int co = 0; co < Cout; ++co) {
    const T* go = grad_out + co * plane;
    for (int ci = 0; ci < Cin; ++ci) {
      const T* src = in + ci * plane;
      T* gw = grad_w + (size_t(co) * Cin + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - pad;
        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          T acc = 0;
          for (int y = y0; y < y1; ++y) {
            const T* srow = src + size_t(y + dy) * W + dx;
            const T* grow = go + size_t(y) * W;
            for (int x = x0; x < x1; ++x) acc += grow[x] * srow[x];
          }
          gw[ky * k + kx] += acc;
        }
      }
    }
  }
}

/// grad_bias[co] += sum_p grad_out[co](p).
template <typename T>
void conv2d_same_grad_bias(const T* grad_out, T* grad_bias, int Cout, int H, int W) {
  const size_t plane = size_t(H) * W;
  for (int co = 0; co < Cout; ++co) {
    T acc = 0;
    const T* go = grad_out + co * plane;
    for (size_t i = 0; i < plane; ++i) acc += go[i];
    grad_bias[co] += acc;
  }
}

/// s x s block mean over one plane; H, W must be divisible by s.
template <typename T>
void avg_pool_plane(const T* in, T* out, int H, int W, int s) {
  const int Ho = H / s, Wo = W / s;
  const T inv = T(1) / T(s * s);
  for (int y = 0; y < Ho; ++y)
    for (int x = 0; x < Wo; ++x) {
      T acc = 0;
      for (int py = 0; py < s; ++py)
        for (int px = 0; px < s; ++px) acc += in[size_t(y * s + py) * W + x * s + px];
      out[size_t(y) * Wo + x] = acc * inv;
    }
}

template <typename T>
void avg_pool_plane_backward(const T* grad_out, T* grad_in, int H, int W, int s) {
  const int Ho = H / s, Wo = W / s;
  const T inv = T(1) / T(s * s);
  for (int y = 0; y < Ho; ++y)
    for (int x = 0; x < Wo; ++x) {
      const T g = grad_out[size_t(y) * Wo + x] * inv;
      for (int py = 0; py < s; ++py)
        for (int px = 0; px < s; ++px) grad_in[size_t(y * s + py) * W + x * s + px] += g;
    }
}

struct ResizeTap {
  int y0, x0, y1, x1;
  double w00, w01, w10, w11;
};

/// Half-pixel-center bilinear resize taps from (Hi, Wi) to (Ho, Wo),
/// source positions clamped to the grid. The position set is symmetric
/// under quarter rotations, so resizing commutes with them.
inline std::vector<ResizeTap> resize_taps(int Hi, int Wi, int Ho, int Wo) {
  std::vector<ResizeTap> taps(size_t(Ho) * Wo);
  const double sy = double(Hi) / Ho, sx = double(Wi) / Wo;
  for (int y = 0; y < Ho; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(Hi - 1));
    int y0 = std::min(int(std::floor(fy)), Hi > 1 ? Hi - 2 : 0);
    double ty = fy - y0;
    for (int x = 0; x < Wo; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(Wi - 1));
      int x0 = std::min(int(std::floor(fx)), Wi > 1 ? Wi - 2 : 0);
      double tx = fx - x0;
      ResizeTap& t = taps[size_t(y) * Wo + x];
      t.y0 = y0;
      t.x0 = x0;
      t.y1 = Hi > 1 ? y0 + 1 : y0;
      t.x1 = Wi > 1 ? x0 + 1 : x0;
      t.w00 = (1 - ty) * (1 - tx);
      t.w01 = (1 - ty) * tx;
      t.w10 = ty * (1 - tx);
      t.w11 = ty * tx;
    }
  }
  return taps;
}

template <typename T>
void resize_plane(const T* in, T* out, int Wi, const std::vector<ResizeTap>& taps) {
  for (size_t i = 0; i < taps.size(); ++i) {
    const ResizeTap& t = taps[i];
    out[i] = T(t.w00) * in[size_t(t.y0) * Wi + t.x0] + T(t.w01) * in[size_t(t.y0) * Wi + t.x1] +
             T(t.w10) * in[size_t(t.y1) * Wi + t.x0] + T(t.w11) * in[size_t(t.y1) * Wi + t.x1];
  }
}

template <typename T>
void resize_plane_backward(const T* grad_out, T* grad_in, int Wi,
                           const std::vector<ResizeTap>& taps) {
  for (size_t i = 0; i < taps.size(); ++i) {
    const ResizeTap& t = taps[i];
    const T g = grad_out[i];
    grad_in[size_t(t.y0) * Wi + t.x0] += T(t.w00) * g;
    grad_in[size_t(t.y0) * Wi + t.x1] += T(t.w01) * g;
    grad_in[size_t(t.y1) * Wi + t.x0] += T(t.w10) * g;
    grad_in[size_t(t.y1) * Wi + t.x1] += T(t.w11) * g;
  }
}

// --- kernel rotation -------------------------------------------------------

// rotate_kernel realizes R_theta = Q^(-m) o R_r with theta = 90m + r,
// r in [-45, 45]: the quarter-turn part is an exact array rotation, so
// R_(theta+90) == Q^(-1) R_theta holds bit-for-bit and 90-degree
// equivariance is exact for every group order.

struct RotTap {
  int idx;     // target cell
  int src[4];  // source cells, -1 when outside support
  double w[4];
};

/// Interpolation taps of the residual rotation by `deg` (|deg| <= 45)
/// about the kernel center, zeros outside support.
inline std::vector<RotTap> rotate_residual_taps(int k, double deg) {
  std::vector<RotTap> taps;
  taps.reserve(size_t(k) * k);
  const double rad = deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(rad), s = std::sin(rad), ctr = (k - 1) / 2.0;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      const double bo = x - ctr, ao = y - ctr;
      // source = R(-deg) * target, in centered (y, x) coordinates
      const double xs = c * bo + s * ao + ctr;
      const double ys = -s * bo + c * ao + ctr;
      RotTap t;
      t.idx = y * k + x;
      const int y0 = int(std::floor(ys)), x0 = int(std::floor(xs));
      const double ty = ys - y0, tx = xs - x0;
      const double ww[4] = {(1 - ty) * (1 - tx), (1 - ty) * tx, ty * (1 - tx), ty * tx};
      const int yy[4] = {y0, y0, y0 + 1, y0 + 1};
      const int xx[4] = {x0, x0 + 1, x0, x0 + 1};
      for (int i = 0; i < 4; ++i) {
        const bool inside = yy[i] >= 0 && yy[i] < k && xx[i] >= 0 && xx[i] < k;
        t.src[i] = inside ? yy[i] * k + xx[i] : -1;
        t.w[i] = ww[i];
      }
      taps.push_back(t);
    }
  return taps;
}

inline void split_angle(double deg, int& quarter, double& residual) {
  quarter = int(std::lround(deg / 90.0));
  residual = deg - 90.0 * quarter;
}

/// Rotate a k x k kernel by `deg` degrees. Multiples of 90 are exact
/// array rotations; other angles bilinear-resample about the center
/// with zeros outside the support.
template <typename T>
void rotate_kernel(const T* in, T* out, int k, double deg,
                   const std::vector<RotTap>* taps = nullptr) {
  int m;
  double r;
  split_angle(deg, m, r);
  std::vector<T> tmp(size_t(k) * k);
  const T* stage = in;
  if (std::abs(r) > 1e-12) {
    std::vector<RotTap> local;
    if (!taps) {
      local = rotate_residual_taps(k, r);
      taps = &local;
    }
    for (const RotTap& t : *taps) {
      T acc = 0;
      for (int i = 0; i < 4; ++i)
        if (t.src[i] >= 0) acc += T(t.w[i]) * in[t.src[i]];
      tmp[t.idx] = acc;
    }
    stage = tmp.data();
  }
  detail::rotate_plane_quarter(stage, out, k, k, mod(-m, 4));
}

/// Transpose of rotate_kernel: scatters grad_out back onto grad_in.
template <typename T>
void rotate_kernel_adjoint(const T* grad_out, T* grad_in, int k, double deg,
                           const std::vector<RotTap>* taps = nullptr) {
  int m;
  double r;
  split_angle(deg, m, r);
  // adjoint of the exact array rotation is its inverse
  std::vector<T> tmp(size_t(k) * k);
  detail::rotate_plane_quarter(grad_out, tmp.data(), k, k, mod(m, 4));
  if (std::abs(r) > 1e-12) {
    std::vector<RotTap> local;
    if (!taps) {
      local = rotate_residual_taps(k, r);
      taps = &local;
    }
    for (const RotTap& t : *taps)
      for (int i = 0; i < 4; ++i)
        if (t.src[i] >= 0) grad_in[t.src[i]] += T(t.w[i]) * tmp[t.idx];
  } else {
    for (size_t i = 0; i < tmp.size(); ++i) grad_in[i] += tmp[i];
  }
}

}  // namespace roteq::kernels
