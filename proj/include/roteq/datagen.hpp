#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/harris.hpp"
#include "roteq/homography.hpp"
#include "roteq/image.hpp"
#include "roteq/keypoint.hpp"
#include "roteq/rng.hpp"
#include "roteq/tensor.hpp"

namespace roteq {

struct HomographyRanges {
  double rot_min = 0, rot_max = 360;  // degrees, uniform
  double scale_min = 0.8, scale_max = 1.25;
  double translate_frac = 0.1;   // of each image extent
  double perspective = 0.001;    // per off-axis bottom-row term
  int max_retries = 100;
};

struct JitterConfig {
  double brightness = 0.1;   // additive, uniform in [-b, b]
  double contrast = 0.2;     // multiplicative, uniform in [1-c, 1+c]
  double noise_sigma = 0.02;
  double blur_prob = 0.2;
  double blur_sigma = 0.8;
};

struct WarpResult {
  ScalarImage img;
  std::vector<uint8_t> mask;  // 1 where the preimage lies inside the source

  bool valid_at(int y, int x) const {
    return y >= 0 && y < img.H && x >= 0 && x < img.W &&
           mask[size_t(y) * img.W + x] != 0;
  }
};

struct TrainingPair {
  ScalarImage src, tgt;
  Homography H;
  double theta_gt = 0;
  std::vector<Keypoint> kp_src, kp_tgt;  // kp_tgt[i] = project(H, kp_src[i])
};

namespace detail {

inline bool sane_warp(const Homography& H, int height, int width) {
  if (std::abs(H.det()) < 1e-9) return false;
  const double xs[4] = {0, double(width - 1), 0, double(width - 1)};
  const double ys[4] = {0, 0, double(height - 1), double(height - 1)};
  for (int i = 0; i < 4; ++i) {
    const double w = H.h[6] * xs[i] + H.h[7] * ys[i] + H.h[8];
    if (w < 0.05) return false;
  }
  return true;
}

}  // namespace detail

/// Similarity (rotation about the image center, isotropic scale,
/// translation) composed with a small perspective perturbation.
inline Homography sample_homography(Rng& rng, const HomographyRanges& r, int height,
                                    int width) {
  for (int attempt = 0; attempt < r.max_retries; ++attempt) {
    const double theta = rng.uniform(r.rot_min, r.rot_max);
    const double s = rng.uniform(r.scale_min, r.scale_max);
    const double tx = rng.uniform(-r.translate_frac, r.translate_frac) * width;
    const double ty = rng.uniform(-r.translate_frac, r.translate_frac) * height;
    Homography P;
    P.h[6] = rng.uniform(-r.perspective, r.perspective);
    P.h[7] = rng.uniform(-r.perspective, r.perspective);
    const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
    Homography H = matmul(
        translation(tx, ty),
        matmul(translation(cx, cy),
               matmul(rotation_deg(theta),
                      matmul(scaling(s), matmul(P, translation(-cx, -cy))))));
    H.normalize();
    if (detail::sane_warp(H, height, width)) return H;
  }
  throw Degenerate("sample_homography: retries exhausted");
}

/// Inverse-mapped bilinear warp with a validity mask.
inline WarpResult warp_image(const ScalarImage& img, const Homography& H) {
  const Homography Hinv = inverse(H);
  WarpResult out{ScalarImage(img.H, img.W),
                 std::vector<uint8_t>(size_t(img.H) * img.W, 0)};
  for (int y = 0; y < img.H; ++y)
    for (int x = 0; x < img.W; ++x) {
      double sx, sy;
      project(Hinv, double(x), double(y), sx, sy);
      if (sy < 0 || sy > img.H - 1 || sx < 0 || sx > img.W - 1) continue;
      out.img.data[size_t(y) * img.W + x] = bilinear_sample(img, sy, sx);
      out.mask[size_t(y) * img.W + x] = 1;
    }
  return out;
}

/// Deterministic photometric map v -> v * contrast + brightness, clamped.
inline ScalarImage apply_photometric(const ScalarImage& img, double contrast,
                                     double brightness) {
  ScalarImage out = img;
  for (float& v : out.data)
    v = std::clamp(float(v * contrast + brightness), 0.0f, 1.0f);
  return out;
}

inline ScalarImage photometric_jitter(const ScalarImage& img, Rng& rng,
                                      const JitterConfig& cfg) {
  const double c = rng.uniform(1.0 - cfg.contrast, 1.0 + cfg.contrast);
  const double b = rng.uniform(-cfg.brightness, cfg.brightness);
  ScalarImage out = apply_photometric(img, c, b);
  if (cfg.noise_sigma > 0) {
    for (float& v : out.data)
      v = std::clamp(v + float(cfg.noise_sigma * rng.normal()), 0.0f, 1.0f);
  }
  if (cfg.blur_prob > 0 && rng.uniform() < cfg.blur_prob)
    detail::gaussian_blur(out.data, out.H, out.W, cfg.blur_sigma);
  return out;
}

struct PairConfig {
  int keypoints = 64;
  HomographyRanges homography;
  JitterConfig jitter;
  HarrisParams harris;
  bool jitter_both = false;  // default: photometric jitter on the target only
  int min_pairs = 2;
};

/// Full pair synthesis: sample H, warp, jitter the target, detect Harris
/// keypoints on the source, project them with H, and keep those landing
/// inside the valid mask with the border margin.
inline TrainingPair make_pair(const ScalarImage& img, Rng& rng,
                              const PairConfig& cfg) {
  const auto detected = harris_keypoints(img, cfg.keypoints, cfg.harris);
  for (int attempt = 0; attempt < cfg.homography.max_retries; ++attempt) {
    const Homography H = sample_homography(rng, cfg.homography, img.H, img.W);
    WarpResult warped = warp_image(img, H);

    TrainingPair pair;
    pair.H = H;
    pair.theta_gt = decompose_rotation(H);
    const int m = cfg.harris.margin;
    for (const Keypoint& kp : detected.keypoints) {
      Keypoint tk = project(H, kp);
      if (tk.x < m || tk.x > img.W - 1 - m || tk.y < m || tk.y > img.H - 1 - m)
        continue;
      if (!warped.valid_at(int(std::lround(tk.y)), int(std::lround(tk.x)))) continue;
      pair.kp_src.push_back(kp);
      pair.kp_tgt.push_back(tk);
    }
    if (int(pair.kp_src.size()) < cfg.min_pairs) continue;

    pair.tgt = photometric_jitter(warped.img, rng, cfg.jitter);
    pair.src = cfg.jitter_both ? photometric_jitter(img, rng, cfg.jitter) : img;
    return pair;
  }
  throw TooFewKeypoints("make_pair: no homography kept enough keypoints");
}

/// Non-recursive scan for .pgm/.ppm files, sorted by name.
inline std::vector<std::string> corpus_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw EmptyCorpus("no .pgm/.ppm images in " + dir);
  return files;
}

}  // namespace roteq
