#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/equivariant.hpp"
#include "roteq/keypoint.hpp"
#include "roteq/orientation.hpp"
#include "roteq/tensor.hpp"

namespace roteq {

/// Per-keypoint slice of the feature map: p in R^{C x |G|}, channel-major
/// (p[c*G + g]).
struct KeypointFeature {
  int C = 0, G = 0;
  std::vector<float> p;
  int keypoint_id = -1;
};

enum class DescMethod { align, avg, max, none };

inline const char* to_string(DescMethod m) {
  switch (m) {
    case DescMethod::align: return "align";
    case DescMethod::avg: return "avg";
    case DescMethod::max: return "max";
    default: return "none";
  }
}

inline DescMethod desc_method_from_string(const std::string& s) {
  if (s == "align") return DescMethod::align;
  if (s == "avg") return DescMethod::avg;
  if (s == "max") return DescMethod::max;
  if (s == "none") return DescMethod::none;
  throw ConfigError("unknown descriptor method: " + s);
}

struct Descriptor {
  std::vector<float> d;
  DescMethod method = DescMethod::align;
  int delta = 0;          // candidate shift used (align only)
  int keypoint_id = -1;
  double x = 0, y = 0;    // source-image coordinates
};

namespace detail {

inline void l2_normalize(std::vector<float>& d) {
  double s = 0;
  for (float x : d) s += double(x) * x;
  if (s == 0) throw ZeroVector("descriptor has zero norm");
  const double inv = 1.0 / std::sqrt(s);
  for (float& x : d) x = float(x * inv);
}

}  // namespace detail

/// Group aligning: cyclically shift each channel's |G|-block by delta,
/// flatten channel-major (block layout), L2-normalize.
inline Descriptor group_align(const KeypointFeature& kf, int delta) {
  if (delta < 0 || delta >= kf.G) throw OutOfBounds("group_align: delta out of range");
  Descriptor d;
  d.method = DescMethod::align;
  d.delta = delta;
  d.keypoint_id = kf.keypoint_id;
  d.d.resize(kf.p.size());
  for (int c = 0; c < kf.C; ++c)
    for (int i = 0; i < kf.G; ++i)
      d.d[size_t(c) * kf.G + i] = kf.p[size_t(c) * kf.G + mod(i + delta, kf.G)];
  detail::l2_normalize(d.d);
  return d;
}

/// Pooling baselines: avg/max collapse the group axis to R^C; none
/// flattens without shifting. All L2-normalized.
inline Descriptor group_pool(const KeypointFeature& kf, DescMethod mode) {
  Descriptor d;
  d.method = mode;
  d.keypoint_id = kf.keypoint_id;
  if (mode == DescMethod::none) {
    d.d = kf.p;
  } else if (mode == DescMethod::avg || mode == DescMethod::max) {
    d.d.resize(size_t(kf.C));
    for (int c = 0; c < kf.C; ++c) {
      const float* blk = kf.p.data() + size_t(c) * kf.G;
      if (mode == DescMethod::avg) {
        double s = 0;
        for (int g = 0; g < kf.G; ++g) s += blk[g];
        d.d[size_t(c)] = float(s / kf.G);
      } else {
        float m = blk[0];
        for (int g = 1; g < kf.G; ++g) m = std::max(m, blk[g]);
        d.d[size_t(c)] = m;
      }
    }
  } else {
    throw ConfigError("group_pool: use group_align for method align");
  }
  detail::l2_normalize(d.d);
  return d;
}

struct ExtractConfig {
  DescMethod method = DescMethod::align;
  double candidate_ratio = 1.0;  // 0 selects static top-k
  int candidate_k = 1;
  // When set, every keypoint aligns by this shift instead of its own
  // dominant orientation (the GT-orientation protocol; also how training
  // aligns, with delta quantized from theta_GT).
  std::optional<int> delta_override;
  int stride = 2;
};

struct ExtractResult {
  std::vector<Descriptor> descriptors;
  int skipped = 0;  // keypoints whose feature coordinate fell out of bounds
};

/// Samples the fused feature map at each keypoint and emits descriptors.
/// For align, one descriptor per candidate orientation. Keypoint pixel
/// coordinates map to feature cells through to_feature_coord.
inline ExtractResult extract_descriptors(const GroupTensor& F,
                                         const std::vector<Keypoint>& kps,
                                         const ExtractConfig& cfg) {
  ExtractResult res;
  for (int i = 0; i < int(kps.size()); ++i) {
    const double fy = eq::to_feature_coord(kps[size_t(i)].y, cfg.stride);
    const double fx = eq::to_feature_coord(kps[size_t(i)].x, cfg.stride);
    if (fy < 0 || fy > F.H - 1 || fx < 0 || fx > F.W - 1) {
      ++res.skipped;
      continue;
    }
    KeypointFeature kf;
    kf.C = F.C;
    kf.G = F.G;
    kf.keypoint_id = i;
    kf.p = bilinear_sample(F, fy, fx);

    auto finish = [&](Descriptor d) {
      d.x = kps[size_t(i)].x;
      d.y = kps[size_t(i)].y;
      res.descriptors.push_back(std::move(d));
    };

    if (cfg.method != DescMethod::align) {
      finish(group_pool(kf, cfg.method));
      continue;
    }
    if (cfg.delta_override) {
      finish(group_align(kf, mod(*cfg.delta_override, F.G)));
      continue;
    }
    std::vector<float> o(kf.p.begin(), kf.p.begin() + F.G);  // channel 0
    for (const auto& cand :
         candidate_orientations(o, cfg.candidate_ratio, cfg.candidate_k))
      finish(group_align(kf, cand.delta));
  }
  return res;
}

// --- descriptor file ("DSC1") ----------------------------------------------
// magic, u32 count, u32 dim, then per record: u32 keypoint id, f32 x, f32 y,
// u16 delta, dim f32 values. Little-endian throughout.

inline void save_descriptors(const std::string& path,
                             const std::vector<Descriptor>& ds) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for write: " + path);
  auto put = [&](const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) {
      std::fclose(f);
      throw IoError("short write: " + path);
    }
  };
  const uint32_t count = uint32_t(ds.size());
  const uint32_t dim = ds.empty() ? 0 : uint32_t(ds[0].d.size());
  put("DSC1", 4);
  put(&count, 4);
  put(&dim, 4);
  for (const auto& d : ds) {
    if (d.d.size() != dim) {
      std::fclose(f);
      throw DimMismatch("descriptor dims differ within one file");
    }
    const uint32_t id = uint32_t(d.keypoint_id);
    const float x = float(d.x), y = float(d.y);
    const uint16_t delta = uint16_t(d.delta);
    put(&id, 4);
    put(&x, 4);
    put(&y, 4);
    put(&delta, 2);
    put(d.d.data(), size_t(dim) * 4);
  }
  std::fclose(f);
}

inline std::vector<Descriptor> load_descriptors(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open: " + path);
  auto get = [&](void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n) {
      std::fclose(f);
      throw IoError("truncated descriptor file: " + path);
    }
  };
  char magic[4];
  get(magic, 4);
  if (std::string(magic, 4) != "DSC1") {
    std::fclose(f);
    throw IoError("bad magic in " + path);
  }
  uint32_t count = 0, dim = 0;
  get(&count, 4);
  get(&dim, 4);
  if (count > (1u << 24) || dim > (1u << 24)) {
    std::fclose(f);
    throw IoError("implausible descriptor header in " + path);
  }
  std::vector<Descriptor> ds(count);
  for (auto& d : ds) {
    uint32_t id;
    float x, y;
    uint16_t delta;
    get(&id, 4);
    get(&x, 4);
    get(&y, 4);
    get(&delta, 2);
    d.keypoint_id = int(id);
    d.x = x;
    d.y = y;
    d.delta = delta;
    d.d.resize(dim);
    get(d.d.data(), size_t(dim) * 4);
  }
  std::fclose(f);
  return ds;
}

}  // namespace roteq
