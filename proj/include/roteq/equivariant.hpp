#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "roteq/autodiff.hpp"
#include "roteq/common.hpp"
#include "roteq/kernels.hpp"
#include "roteq/rng.hpp"
#include "roteq/tensor.hpp"

namespace roteq::eq {

/// Resamples a k x k kernel rotated by `deg` about its center. Multiples
/// of 90 degrees are exact array rotations; other angles use bilinear
/// interpolation with zeros outside the support.
template <typename T>
std::vector<T> rotate_angle(const std::vector<T>& kernel, int k, double deg) {
  if (int(kernel.size()) != k * k) throw ShapeMismatch("rotate_angle: kernel size");
  std::vector<T> out(kernel.size());
  kernels::rotate_kernel(kernel.data(), out.data(), k, deg);
  return out;
}

/// First layer: lifts a scalar image to the regular representation by
/// convolving with N rotated copies of each base kernel. Only the base
/// kernel and one bias per output channel are learnable.
template <typename T>
struct LiftingConv {
  ad::Parameter<T> w;  // {Co, 1, k, k}
  ad::Parameter<T> b;  // {Co}
  int N = 4;
  int stride = 1;

  int out_channels() const { return w.value.dim(0); }
  int kernel_size() const { return w.value.dim(2); }
};

/// Equivariant layer on regular-representation features. The filter bank
/// applied at output group index g is the base kernel rotated by g*360/N
/// with its input-group axis cyclically shifted by g; only the base
/// kernel is stored.
template <typename T>
struct GroupConv {
  ad::Parameter<T> w;  // {Co, Ci, N, k, k}
  ad::Parameter<T> b;  // {Co}
  int N = 4;
  int stride = 1;

  int out_channels() const { return w.value.dim(0); }
  int in_channels() const { return w.value.dim(1); }
  int kernel_size() const { return w.value.dim(3); }
  size_t param_count() const { return w.value.size() + b.value.size(); }
};

struct BackboneConfig {
  int group_order = 4;
  std::vector<int> widths = {8, 16, 16, 32};   // stage 1 is the lifting conv
  std::vector<int> strides = {2, 1, 1, 1};
  int kernel_size = 3;
  std::vector<int> pyramid = {2, 4};           // 1-based stage indices fused into F

  void validate() const {
    if (group_order < 2) throw ConfigError("group_order must be >= 2");
    if (widths.empty()) throw ConfigError("widths must be non-empty");
    if (strides.size() != widths.size())
      throw ConfigError("strides and widths must have equal length");
    if (kernel_size < 1 || kernel_size % 2 == 0)
      throw ConfigError("kernel_size must be odd");
    for (int w : widths)
      if (w < 1) throw ConfigError("stage width must be >= 1");
    for (int s : strides)
      if (s < 1) throw ConfigError("stride must be >= 1");
    if (pyramid.empty()) throw ConfigError("pyramid must name at least one stage");
    for (int l : pyramid)
      if (l < 1 || l > int(widths.size()))
        throw ConfigError("pyramid index out of range");
  }

  int stages() const { return int(widths.size()); }

  /// Channel count of the fused feature map F.
  int fused_channels() const {
    int c = 0;
    for (int l : pyramid) c += widths[size_t(l) - 1];
    return c;
  }

  int descriptor_dim() const { return fused_channels() * group_order; }

  /// F lives at half the input resolution.
  static int feature_extent(int image_extent) { return image_extent / 2; }
};

/// Image coordinate of the center of feature cell i at the given stride:
/// a stride-s reduction places cell i at image coordinate s*i + (s-1)/2,
/// so the inverse map carries a half-cell offset.
inline double to_feature_coord(double image_coord, int stride = 2) {
  return (image_coord - 0.5 * (stride - 1)) / stride;
}

inline double to_image_coord(double feature_coord, int stride = 2) {
  return feature_coord * stride + 0.5 * (stride - 1);
}

/// Small equivariant backbone: lifting conv followed by group convs, with
/// ReLU after each conv and average pooling realizing the strides. The
/// output F concatenates the pyramid stages, bilinearly resized to half
/// the input resolution.
template <typename T>
class Backbone {
 public:
  BackboneConfig cfg;
  LiftingConv<T> lift;
  std::vector<GroupConv<T>> gconvs;

  explicit Backbone(BackboneConfig c = {}, uint64_t seed = 17) : cfg(std::move(c)) {
    cfg.validate();
    const int N = cfg.group_order, k = cfg.kernel_size;
    Rng rng(mix_seed(seed, 0x9e77, 0));
    lift.N = N;
    lift.stride = cfg.strides[0];
    lift.w = ad::Parameter<T>("lift.w", init_uniform(rng, {cfg.widths[0], 1, k, k},
                                                     /*fan_in=*/k * k));
    lift.b = ad::Parameter<T>("lift.b", ad::Buf<T>({cfg.widths[0]}));
    for (int s = 1; s < cfg.stages(); ++s) {
      GroupConv<T> g;
      g.N = N;
      g.stride = cfg.strides[size_t(s)];
      const int ci = cfg.widths[size_t(s) - 1], co = cfg.widths[size_t(s)];
      g.w = ad::Parameter<T>("gconv" + std::to_string(s) + ".w",
                             init_uniform(rng, {co, ci, N, k, k},
                                          /*fan_in=*/size_t(ci) * N * k * k));
      g.b = ad::Parameter<T>("gconv" + std::to_string(s) + ".b", ad::Buf<T>({co}));
      gconvs.push_back(std::move(g));
    }
  }

  std::vector<ad::Parameter<T>*> params() {
    std::vector<ad::Parameter<T>*> ps{&lift.w, &lift.b};
    for (auto& g : gconvs) {
      ps.push_back(&g.w);
      ps.push_back(&g.b);
    }
    return ps;
  }

  size_t param_count() const {
    size_t n = lift.w.value.size() + lift.b.value.size();
    for (const auto& g : gconvs) n += g.param_count();
    return n;
  }

  /// Parameter nodes registered on a tape once per graph; reused across
  /// forward passes of the same tape.
  struct Bound {
    ad::Node lift_w, lift_b;
    std::vector<ad::Node> gw, gb;
  };

  Bound bind(ad::Tape<T>& tape, bool train) {
    Bound bd;
    bd.lift_w = train ? tape.param(lift.w) : tape.constant(lift.w.value);
    bd.lift_b = train ? tape.param(lift.b) : tape.constant(lift.b.value);
    for (auto& g : gconvs) {
      bd.gw.push_back(train ? tape.param(g.w) : tape.constant(g.w.value));
      bd.gb.push_back(train ? tape.param(g.b) : tape.constant(g.b.value));
    }
    return bd;
  }

  struct Forward {
    ad::Node features;              // {C, G, H/2, W/2}
    std::vector<ad::Node> stage_out;  // post-ReLU, post-pool per stage
    int C, G, Hf, Wf;
  };

  /// img node holds an {H, W} buffer. Strided stages run the convolution
  /// at stride 1 and then average-pool s x s blocks, which commutes with
  /// quarter rotations on even grids (plain strided sampling does not).
  Forward forward(ad::Tape<T>& tape, const Bound& bd, ad::Node img) {
    const auto& ib = tape.val(img);
    if (ib.rank() != 2) throw ShapeMismatch("backbone: image must be rank 2");
    const int H = ib.dim(0), W = ib.dim(1);
    if (H % 2 != 0 || W % 2 != 0)
      throw ShapeMismatch("backbone: image dims must be even");
    int cum = 1;
    for (int s : cfg.strides) cum *= s;
    if (H % cum != 0 || W % cum != 0)
      throw ShapeMismatch("backbone: image dims not divisible by strides");

    Forward f;
    f.G = cfg.group_order;
    ad::Node x = tape.lift_conv(img, bd.lift_w, bd.lift_b, cfg.group_order);
    x = tape.relu(x);
    x = tape.avg_pool(x, cfg.strides[0]);
    f.stage_out.push_back(x);
    for (size_t s = 0; s < gconvs.size(); ++s) {
      x = tape.group_conv(x, bd.gw[s], bd.gb[s]);
      x = tape.relu(x);
      x = tape.avg_pool(x, cfg.strides[s + 1]);
      f.stage_out.push_back(x);
    }

    f.Hf = BackboneConfig::feature_extent(H);
    f.Wf = BackboneConfig::feature_extent(W);
    ad::Node fused = -1;
    for (int l : cfg.pyramid) {
      ad::Node r = tape.resize_bilinear(f.stage_out[size_t(l) - 1], f.Hf, f.Wf);
      fused = fused < 0 ? r : tape.concat_channels(fused, r);
    }
    f.features = fused;
    f.C = cfg.fused_channels();
    return f;
  }

  /// Inference convenience: full fused feature map as a GroupTensor.
  GroupTensor features(const ScalarImage& img) {
    ad::Tape<T> tape;
    Bound bd = bind(tape, false);
    ad::Buf<T> ib({img.H, img.W});
    for (size_t i = 0; i < ib.size(); ++i) ib.v[i] = T(img.data[i]);
    Forward f = forward(tape, bd, tape.constant(std::move(ib)));
    const ad::Buf<T>& out = tape.val(f.features);
    GroupTensor g(f.C, f.G, f.Hf, f.Wf);
    for (size_t i = 0; i < out.size(); ++i) g.data[i] = float(out.v[i]);
    return g;
  }

 private:
  static ad::Buf<T> init_uniform(Rng& rng, std::vector<int> dims, size_t fan_in) {
    ad::Buf<T> b(std::move(dims));
    const double bound = std::sqrt(6.0 / double(fan_in));
    for (T& x : b.v) x = T(rng.uniform(-bound, bound));
    return b;
  }
};

}  // namespace roteq::eq
