#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/tensor.hpp"

namespace roteq {

namespace detail {

// Reads the next header token, skipping whitespace and '#' comments.
inline std::string pnm_token(std::FILE* f, const std::string& path) {
  std::string tok;
  int c;
  while ((c = std::fgetc(f)) != EOF) {
    if (c == '#') {
      while ((c = std::fgetc(f)) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(char(c));
  }
  if (tok.empty()) throw IoError("truncated header in " + path);
  return tok;
}

}  // namespace detail

/// Loads an 8-bit binary PGM (P5) or PPM (P6, converted to Rec. 601 luma)
/// as values in [0, 1].
inline ScalarImage read_image(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open: " + path);
  struct Closer {
    std::FILE* f;
    ~Closer() { std::fclose(f); }
  } closer{f};

  const std::string magic = detail::pnm_token(f, path);
  if (magic != "P5" && magic != "P6")
    throw IoError("unsupported image format (want binary P5/P6): " + path);
  const int W = std::stoi(detail::pnm_token(f, path));
  const int H = std::stoi(detail::pnm_token(f, path));
  const int maxval = std::stoi(detail::pnm_token(f, path));
  if (W < 1 || H < 1 || W > (1 << 16) || H > (1 << 16))
    throw IoError("implausible image dims in " + path);
  if (maxval != 255) throw IoError("only 8-bit images supported: " + path);

  const int ch = magic == "P6" ? 3 : 1;
  std::vector<uint8_t> raw(size_t(W) * H * ch);
  if (std::fread(raw.data(), 1, raw.size(), f) != raw.size())
    throw IoError("truncated pixel data in " + path);

  ScalarImage img(H, W);
  if (ch == 1) {
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = float(raw[i]) / 255.0f;
  } else {
    for (size_t i = 0; i < img.data.size(); ++i) {
      const double r = raw[3 * i], g = raw[3 * i + 1], b = raw[3 * i + 2];
      img.data[i] = float((0.299 * r + 0.587 * g + 0.114 * b) / 255.0);
    }
  }
  return img;
}

inline void write_pgm(const std::string& path, const ScalarImage& img) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for write: " + path);
  std::fprintf(f, "P5\n%d %d\n255\n", img.W, img.H);
  std::vector<uint8_t> raw(img.data.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.0f, 1.0f);
    raw[i] = uint8_t(std::lround(v * 255.0f));
  }
  const bool ok = std::fwrite(raw.data(), 1, raw.size(), f) == raw.size();
  std::fclose(f);
  if (!ok) throw IoError("short write: " + path);
}

/// Bilinear sample with out-of-range coordinates clamped to the border.
inline float sample_clamped(const ScalarImage& img, double y, double x) {
  y = std::clamp(y, 0.0, double(img.H - 1));
  x = std::clamp(x, 0.0, double(img.W - 1));
  return bilinear_sample(img, y, x);
}

inline ScalarImage crop(const ScalarImage& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.H || x0 + w > img.W)
    throw OutOfBounds("crop outside image");
  ScalarImage out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.data[size_t(y) * w + x] = img.data[size_t(y0 + y) * img.W + (x0 + x)];
  return out;
}

/// Half-pixel-center bilinear resize (same geometry as the feature
/// pyramid's resize).
inline ScalarImage resize(const ScalarImage& img, int Ho, int Wo) {
  if (Ho == img.H && Wo == img.W) return img;
  ScalarImage out(Ho, Wo);
  const double sy = double(img.H) / Ho, sx = double(img.W) / Wo;
  for (int y = 0; y < Ho; ++y)
    for (int x = 0; x < Wo; ++x) {
      const double yi = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(img.H - 1));
      const double xi = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(img.W - 1));
      out.data[size_t(y) * Wo + x] = bilinear_sample(img, yi, xi);
    }
  return out;
}

}  // namespace roteq
