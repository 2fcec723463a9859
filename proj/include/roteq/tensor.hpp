#pragma once

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

#include "roteq/common.hpp"

namespace roteq {

static_assert(std::endian::native == std::endian::little,
              "serialized tensor formats are little-endian");

/// Dense rank-4 feature map laid out channel-major: (C, G, H, W).
/// G indexes the cyclic-group axis of a regular representation.
struct GroupTensor {
  int C = 0, G = 0, H = 0, W = 0;
  std::vector<float> data;

  GroupTensor() = default;
  GroupTensor(int c, int g, int h, int w, float fill = 0.f)
      : C(c), G(g), H(h), W(w), data(size_t(c) * g * h * w, fill) {
    assert(c >= 1 && g >= 1 && h >= 1 && w >= 1);
  }

  size_t size() const { return data.size(); }

  size_t index(int c, int g, int y, int x) const {
    assert(c >= 0 && c < C && g >= 0 && g < G);
    assert(y >= 0 && y < H && x >= 0 && x < W);
    return ((size_t(c) * G + g) * H + y) * W + x;
  }

  float& at(int c, int g, int y, int x) { return data[index(c, g, y, x)]; }
  float at(int c, int g, int y, int x) const { return data[index(c, g, y, x)]; }

  /// Pointer to the (c, g) spatial plane.
  float* plane(int c, int g) { return data.data() + (size_t(c) * G + g) * H * W; }
  const float* plane(int c, int g) const {
    return data.data() + (size_t(c) * G + g) * H * W;
  }

  bool same_dims(const GroupTensor& o) const {
    return C == o.C && G == o.G && H == o.H && W == o.W;
  }
};

/// Single-channel image, values nominally in [0, 1].
struct ScalarImage {
  int H = 0, W = 0;
  std::vector<float> data;

  ScalarImage() = default;
  ScalarImage(int h, int w, float fill = 0.f)
      : H(h), W(w), data(size_t(h) * w, fill) {
    assert(h >= 1 && w >= 1);
  }

  float& at(int y, int x) {
    assert(y >= 0 && y < H && x >= 0 && x < W);
    return data[size_t(y) * W + x];
  }
  float at(int y, int x) const {
    assert(y >= 0 && y < H && x >= 0 && x < W);
    return data[size_t(y) * W + x];
  }
};

/// out[c, i, y, x] = in[c, (i + delta) mod G, y, x]. Any integer delta.
inline GroupTensor cyclic_shift(const GroupTensor& t, int delta) {
  GroupTensor out(t.C, t.G, t.H, t.W);
  const size_t plane = size_t(t.H) * t.W;
  for (int c = 0; c < t.C; ++c)
    for (int g = 0; g < t.G; ++g) {
      const float* src = t.plane(c, mod(g + delta, t.G));
      std::memcpy(out.plane(c, g), src, plane * sizeof(float));
    }
  return out;
}

namespace detail {

/// Quarter rotation of one H×W plane, q in {0,1,2,3}.
/// q=1 maps out(y, x) = in(x, W-1-y).
template <typename T>
void rotate_plane_quarter(const T* in, T* out, int H, int W, int q) {
  switch (q & 3) {
    case 0:
      std::memcpy(out, in, size_t(H) * W * sizeof(T));
      break;
    case 1:
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) out[size_t(y) * W + x] = in[size_t(x) * W + (W - 1 - y)];
      break;
    case 2:
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          out[size_t(y) * W + x] = in[size_t(H - 1 - y) * W + (W - 1 - x)];
      break;
    case 3:
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) out[size_t(y) * W + x] = in[size_t(H - 1 - x) * W + y];
      break;
  }
}

}  // namespace detail

/// Lossless quarter-turn rotation of every (c, g) spatial slice.
/// Requires a square spatial grid.
inline GroupTensor rotate_spatial_quarter(const GroupTensor& t, int q) {
  if (t.H != t.W) throw NonSquare("rotate_spatial_quarter: H != W");
  GroupTensor out(t.C, t.G, t.H, t.W);
  for (int c = 0; c < t.C; ++c)
    for (int g = 0; g < t.G; ++g)
      detail::rotate_plane_quarter(t.plane(c, g), out.plane(c, g), t.H, t.W, mod(q, 4));
  return out;
}

namespace detail {

struct BilinearWeights {
  int y0, x0, y1, x1;
  float w00, w01, w10, w11;
};

inline BilinearWeights bilinear_weights(double y, double x, int H, int W) {
  if (!(y >= 0.0 && y <= H - 1 && x >= 0.0 && x <= W - 1))
    throw OutOfBounds("bilinear sample outside grid");
  int y0 = std::min(int(std::floor(y)), H > 1 ? H - 2 : 0);
  int x0 = std::min(int(std::floor(x)), W > 1 ? W - 2 : 0);
  float ty = float(y - y0), tx = float(x - x0);
  BilinearWeights w;
  w.y0 = y0;
  w.x0 = x0;
  w.y1 = H > 1 ? y0 + 1 : y0;
  w.x1 = W > 1 ? x0 + 1 : x0;
  w.w00 = (1 - ty) * (1 - tx);
  w.w01 = (1 - ty) * tx;
  w.w10 = ty * (1 - tx);
  w.w11 = ty * tx;
  return w;
}

}  // namespace detail

/// 4-neighbor bilinear interpolation of every (c, g) plane at (y, x).
/// Returns a vector of length C*G, channel-major.
inline std::vector<float> bilinear_sample(const GroupTensor& t, double y, double x) {
  const auto w = detail::bilinear_weights(y, x, t.H, t.W);
  std::vector<float> out(size_t(t.C) * t.G);
  for (int c = 0; c < t.C; ++c)
    for (int g = 0; g < t.G; ++g) {
      const float* p = t.plane(c, g);
      out[size_t(c) * t.G + g] = w.w00 * p[size_t(w.y0) * t.W + w.x0] +
                                 w.w01 * p[size_t(w.y0) * t.W + w.x1] +
                                 w.w10 * p[size_t(w.y1) * t.W + w.x0] +
                                 w.w11 * p[size_t(w.y1) * t.W + w.x1];
    }
  return out;
}

inline float bilinear_sample(const ScalarImage& img, double y, double x) {
  const auto w = detail::bilinear_weights(y, x, img.H, img.W);
  const float* p = img.data.data();
  return w.w00 * p[size_t(w.y0) * img.W + w.x0] + w.w01 * p[size_t(w.y0) * img.W + w.x1] +
         w.w10 * p[size_t(w.y1) * img.W + w.x0] + w.w11 * p[size_t(w.y1) * img.W + w.x1];
}

// --- binary tensor dump: "GT01", 4 x u32 dims, raw f32 payload ---

inline void dump_tensor(std::ostream& os, const GroupTensor& t) {
  os.write("GT01", 4);
  uint32_t dims[4] = {uint32_t(t.C), uint32_t(t.G), uint32_t(t.H), uint32_t(t.W)};
  os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  os.write(reinterpret_cast<const char*>(t.data.data()),
           std::streamsize(t.data.size() * sizeof(float)));
  if (!os) throw IoError("dump_tensor: write failed");
}

inline GroupTensor load_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "GT01", 4) != 0)
    throw IoError("load_tensor: bad magic, expected GT01");
  uint32_t dims[4];
  is.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!is) throw IoError("load_tensor: truncated header");
  for (uint32_t d : dims)
    if (d < 1 || d > (1u << 24)) throw IoError("load_tensor: implausible dims");
  GroupTensor t{int(dims[0]), int(dims[1]), int(dims[2]), int(dims[3])};
  is.read(reinterpret_cast<char*>(t.data.data()),
          std::streamsize(t.data.size() * sizeof(float)));
  if (!is) throw IoError("load_tensor: truncated payload");
  return t;
}

}  // namespace roteq
