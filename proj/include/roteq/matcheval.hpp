#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/datagen.hpp"
#include "roteq/descriptor.hpp"
#include "roteq/equivariant.hpp"
#include "roteq/harris.hpp"
#include "roteq/homography.hpp"
#include "roteq/image.hpp"
#include "roteq/losses.hpp"
#include "roteq/matching.hpp"
#include "roteq/ransac.hpp"
#include "roteq/rng.hpp"

namespace roteq {

// --- scale pyramid -----------------------------------------------------------

struct ScalePyramidConfig {
  double factor = 1.189207115002721;  // 2^(1/4)
  int max_side = 1024;
  int min_side = 256;

  void validate() const {
    if (factor <= 1) throw ConfigError("pyramid factor must be > 1");
    if (min_side < 1 || max_side < min_side)
      throw ConfigError("pyramid sides must satisfy max >= min >= 1");
  }
};

/// Long-side targets max, max/f, ... down to min (inclusive, with an
/// epsilon guard against accumulated division error).
inline std::vector<int> pyramid_levels(const ScalePyramidConfig& cfg) {
  cfg.validate();
  std::vector<int> levels;
  for (double L = cfg.max_side; L >= cfg.min_side - 1e-6; L /= cfg.factor)
    levels.push_back(int(std::lround(L)));
  return levels;
}

/// Per-scale aligned descriptors combined by an elementwise max over the
/// scale axis, then re-normalized. Keypoints are given in original-image
/// coordinates; each level rescales them through the resize geometry.
/// Multi-candidate selection is forced off here (one row per keypoint).
inline std::vector<Descriptor> pyramid_descriptors(eq::Backbone<float>& model,
                                                   const ScalarImage& img,
                                                   const std::vector<Keypoint>& kps,
                                                   const ScalePyramidConfig& pcfg,
                                                   ExtractConfig ecfg) {
  ecfg.candidate_ratio = 1.0;
  ecfg.candidate_k = 1;
  const int long_side = std::max(img.H, img.W);
  std::vector<std::map<int, Descriptor>> per_level;  // keypoint id -> row
  for (int L : pyramid_levels(pcfg)) {
    const double r = double(L) / long_side;
    int h = int(std::lround(img.H * r)), w = int(std::lround(img.W * r));
    h += h & 1;
    w += w & 1;
    if (h < 8 || w < 8) continue;
    const ScalarImage scaled = resize(img, h, w);
    const double ry = double(h) / img.H, rx = double(w) / img.W;
    std::vector<Keypoint> skps;
    for (const auto& kp : kps)
      skps.push_back({(kp.x + 0.5) * rx - 0.5, (kp.y + 0.5) * ry - 0.5, kp.response});
    GroupTensor F = model.features(scaled);
    auto res = extract_descriptors(F, skps, ecfg);
    std::map<int, Descriptor> rows;
    for (auto& d : res.descriptors) rows[d.keypoint_id] = std::move(d);
    per_level.push_back(std::move(rows));
  }
  if (per_level.empty()) throw ConfigError("pyramid produced no usable level");

  std::vector<Descriptor> out;
  for (int i = 0; i < int(kps.size()); ++i) {
    Descriptor acc;
    bool seen = false;
    for (const auto& level : per_level) {
      auto it = level.find(i);
      if (it == level.end()) continue;
      if (!seen) {
        acc = it->second;
        seen = true;
      } else {
        for (size_t j = 0; j < acc.d.size(); ++j)
          acc.d[j] = std::max(acc.d[j], it->second.d[j]);
      }
    }
    if (!seen) continue;
    acc.x = kps[size_t(i)].x;
    acc.y = kps[size_t(i)].y;
    detail::l2_normalize(acc.d);
    out.push_back(std::move(acc));
  }
  return out;
}

// --- Roto benchmark ----------------------------------------------------------

struct RotoPair {
  int image_idx = 0;
  double angle = 0;
  ScalarImage target;
  std::vector<uint8_t> mask;
  Homography H;
};

inline std::vector<double> roto_angles() {
  std::vector<double> a;
  for (int d = 0; d < 360; d += 10) a.push_back(double(d));
  return a;
}

/// One rotated target per (image, angle): center pivot, bilinear warp,
/// validity mask, exact rotation homography as GT.
inline std::vector<RotoPair> build_roto_benchmark(
    const std::vector<ScalarImage>& images, const std::vector<double>& angles) {
  if (images.empty()) throw EmptyCorpus("roto benchmark needs >= 1 image");
  std::vector<RotoPair> pairs;
  for (int i = 0; i < int(images.size()); ++i)
    for (double a : angles) {
      RotoPair p;
      p.image_idx = i;
      p.angle = a;
      p.H = rotation_about_center(a, images[size_t(i)].H, images[size_t(i)].W);
      WarpResult w = warp_image(images[size_t(i)], p.H);
      p.target = std::move(w.img);
      p.mask = std::move(w.mask);
      pairs.push_back(std::move(p));
    }
  return pairs;
}

enum class KeypointProtocol { gt, pred };

struct BenchConfig {
  KeypointProtocol protocol = KeypointProtocol::gt;
  DescMethod method = DescMethod::align;
  bool gt_delta = false;  // align by the quantized GT rotation (upper bound)
  double candidate_ratio = 1.0;
  int candidate_k = 1;
  int keypoints = 128;
  HarrisParams harris;
  std::vector<double> thresholds = {3, 5, 10};
  bool run_hest = true;
  double hest_eps = 3.0;
  RansacConfig ransac;
};

struct BenchRow {
  int image_idx = 0;
  double angle = 0;
  int predicted = 0;
  std::vector<int> correct;  // per threshold
  std::vector<double> mma;
  bool hest_pass = false;
  double corner_error = std::numeric_limits<double>::infinity();
  int inliers = 0;
};

struct BenchReport {
  std::vector<double> thresholds;
  std::vector<BenchRow> rows;
  std::vector<double> mma_mean;       // mean of per-pair MMA, per threshold
  std::vector<double> mma_pooled;     // total correct / total predicted
  double hest_rate = 0;
  double mean_inliers = 0;
  int total_predicted = 0;

  /// Mean MMA per angle at one threshold index (criterion: curve spread).
  std::map<double, double> angle_curve(size_t t_idx) const {
    std::map<double, double> sum;
    std::map<double, int> n;
    for (const auto& r : rows) {
      sum[r.angle] += r.mma[t_idx];
      n[r.angle] += 1;
    }
    for (auto& [a, s] : sum) s /= n[a];
    return sum;
  }
};

/// Detects Harris keypoints on each source image, pairs them with the
/// rotated target per the chosen protocol, extracts descriptors with the
/// configured method, matches, and scores.
inline BenchReport run_benchmark(eq::Backbone<float>& model,
                                 const std::vector<ScalarImage>& images,
                                 const std::vector<RotoPair>& bench,
                                 const BenchConfig& cfg) {
  const int G = model.cfg.group_order;
  BenchReport rep;
  rep.thresholds = cfg.thresholds;

  struct SourceState {
    GroupTensor F;
    std::vector<Keypoint> kps;
  };
  std::map<int, SourceState> sources;
  auto source_for = [&](int idx) -> SourceState& {
    auto it = sources.find(idx);
    if (it != sources.end()) return it->second;
    SourceState st{model.features(images[size_t(idx)]),
                   harris_keypoints(images[size_t(idx)], cfg.keypoints, cfg.harris)
                       .keypoints};
    return sources.emplace(idx, std::move(st)).first->second;
  };

  std::vector<int> correct_total(cfg.thresholds.size(), 0);
  int hest_passes = 0;
  double inlier_sum = 0;

  for (int pi = 0; pi < int(bench.size()); ++pi) {
    const RotoPair& pair = bench[size_t(pi)];
    const ScalarImage& src = images[size_t(pair.image_idx)];
    SourceState& st = source_for(pair.image_idx);
    const int m = cfg.harris.margin;

    ExtractConfig ea, eb;
    ea.method = eb.method = cfg.method;
    ea.candidate_ratio = eb.candidate_ratio = cfg.candidate_ratio;
    ea.candidate_k = eb.candidate_k = cfg.candidate_k;
    if (cfg.method == DescMethod::align && cfg.gt_delta) {
      ea.delta_override = 0;
      eb.delta_override = quantize_delta(decompose_rotation(pair.H), G);
    }

    std::vector<Keypoint> kp_a, kp_b;
    if (cfg.protocol == KeypointProtocol::gt) {
      for (const auto& kp : st.kps) {
        Keypoint tk = project(pair.H, kp);
        if (tk.x < m || tk.x > src.W - 1 - m || tk.y < m || tk.y > src.H - 1 - m)
          continue;
        const int ty = int(std::lround(tk.y)), tx = int(std::lround(tk.x));
        if (pair.mask[size_t(ty) * pair.target.W + tx] == 0) continue;
        kp_a.push_back(kp);
        kp_b.push_back(tk);
      }
    } else {
      kp_a = st.kps;
      kp_b = harris_keypoints(pair.target, cfg.keypoints, cfg.harris).keypoints;
    }

    BenchRow row;
    row.image_idx = pair.image_idx;
    row.angle = pair.angle;
    row.correct.assign(cfg.thresholds.size(), 0);
    row.mma.assign(cfg.thresholds.size(), 0.0);

    if (kp_a.size() >= 1 && kp_b.size() >= 1) {
      GroupTensor Ft = model.features(pair.target);
      auto da = extract_descriptors(st.F, kp_a, ea);
      auto db = extract_descriptors(Ft, kp_b, eb);
      if (!da.descriptors.empty() && !db.descriptors.empty()) {
        DescriptorSet A = DescriptorSet::from(da.descriptors);
        DescriptorSet B = DescriptorSet::from(db.descriptors);
        auto matches = mutual_nn_match(A, B);
        MmaResult mr = mma(matches, A, B, pair.H, cfg.thresholds);
        row.predicted = mr.predicted;
        row.correct = mr.correct;
        row.mma = mr.mma;
        if (cfg.run_hest) {
          std::vector<PointPair> pts;
          for (const auto& mt : matches)
            pts.push_back({A.x[size_t(mt.a)], A.y[size_t(mt.a)], B.x[size_t(mt.b)],
                           B.y[size_t(mt.b)]});
          RansacConfig rc = cfg.ransac;
          rc.seed = mix_seed(cfg.ransac.seed, uint64_t(pi), 0);
          HEstimation he = hestimation(pts, pair.H, src.W, src.H, cfg.hest_eps, rc);
          row.hest_pass = he.pass;
          row.corner_error = he.corner_error;
          row.inliers = he.inliers;
        }
      }
    }
    rep.total_predicted += row.predicted;
    for (size_t t = 0; t < cfg.thresholds.size(); ++t) correct_total[t] += row.correct[t];
    hest_passes += row.hest_pass ? 1 : 0;
    inlier_sum += row.inliers;
    rep.rows.push_back(std::move(row));
  }

  const double n = double(rep.rows.size());
  rep.mma_mean.assign(cfg.thresholds.size(), 0.0);
  for (const auto& r : rep.rows)
    for (size_t t = 0; t < cfg.thresholds.size(); ++t) rep.mma_mean[t] += r.mma[t] / n;
  for (size_t t = 0; t < cfg.thresholds.size(); ++t)
    rep.mma_pooled.push_back(
        rep.total_predicted ? double(correct_total[t]) / rep.total_predicted : 0.0);
  rep.hest_rate = n > 0 ? hest_passes / n : 0.0;
  rep.mean_inliers = n > 0 ? inlier_sum / n : 0.0;
  return rep;
}

/// CSV rows: pair id, angle, predicted count, correct count per
/// threshold, hest pass flag, corner error.
inline void write_bench_csv(const std::string& path, const BenchReport& rep) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for write: " + path);
  std::fprintf(f, "pair,image,angle,pred");
  for (double t : rep.thresholds) std::fprintf(f, ",correct@%g", t);
  std::fprintf(f, ",hest_pass,corner_err\n");
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& r = rep.rows[i];
    std::fprintf(f, "%zu,%d,%g,%d", i, r.image_idx, r.angle, r.predicted);
    for (int c : r.correct) std::fprintf(f, ",%d", c);
    std::fprintf(f, ",%d,%g\n", r.hest_pass ? 1 : 0, r.corner_error);
  }
  std::fclose(f);
}

}  // namespace roteq
