#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "roteq/common.hpp"
#include "roteq/kernels.hpp"

namespace roteq::ad {

/// Flat value buffer with explicit dims. Rank 0 (dims empty) is a scalar
/// holding one element.
template <typename T>
struct Buf {
  std::vector<int> dims;
  std::vector<T> v;

  Buf() = default;
  explicit Buf(std::vector<int> d, T fill = T(0)) : dims(std::move(d)) {
    size_t n = 1;
    for (int x : dims) n *= size_t(x);
    v.assign(n, fill);
  }
  static Buf scalar(T x) {
    Buf b;
    b.v.assign(1, x);
    return b;
  }
  size_t size() const { return v.size(); }
  int dim(int i) const { return dims[size_t(i)]; }
  int rank() const { return int(dims.size()); }
  bool same_dims(const Buf& o) const { return dims == o.dims; }
};

template <typename T>
bool all_finite(const Buf<T>& b) {
  for (T x : b.v)
    if (!std::isfinite(double(x))) return false;
  return true;
}

/// Learnable tensor: value and gradient of identical dims, stable name.
template <typename T>
struct Parameter {
  std::string name;
  Buf<T> value;
  Buf<T> grad;

  Parameter() = default;
  Parameter(std::string n, Buf<T> val)
      : name(std::move(n)), value(std::move(val)), grad(value.dims) {}

  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), T(0)); }
};

using Node = int;

namespace detail {

inline const std::set<std::string, std::less<>>& primitive_registry() {
  static const std::set<std::string, std::less<>> reg = {
      "constant",      "param",           "lift_conv",
      "group_conv",    "relu",            "avg_pool",
      "concat_channels", "resize_bilinear", "cyclic_shift_group",
      "rotate_quarter", "sample_rows",    "slice_cols",
      "shift_cols_cyclic", "align_rows",  "l2_normalize_rows",
      "matmul_nt",     "add",             "sub",
      "mul",           "scale",           "neg",
      "log",           "exp",             "softmax_rows",
      "log_softmax_rows", "sum",          "pick",
      "info_nce"};
  return reg;
}

}  // namespace detail

/// Reverse-mode tape over a fixed primitive set. Nodes are recorded in
/// topological order; backward() replays them in reverse. A tape is
/// single-writer; independent tapes may run concurrently.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  static bool is_registered(std::string_view name) {
    return detail::primitive_registry().count(name) > 0;
  }

  // --- leaves ---------------------------------------------------------

  Node constant(Buf<T> b) { return push("constant", std::move(b), false, {}, {}); }

  Node constant_scalar(T x) { return constant(Buf<T>::scalar(x)); }

  Node param(Parameter<T>& p) {
    Node n = push("param", p.value, true, {}, {});
    params_.emplace_back(n, &p);
    return n;
  }

  // --- equivariant conv stack ------------------------------------------

  /// img {H, W}, w {Co, 1, k, k}, bias {Co} -> {Co, N, H, W}.
  /// Output group slot g is convolution with w rotated by g*360/N.
  Node lift_conv(Node img, Node w, Node bias, int N) {
    const Buf<T>&I = val(img), &W_ = val(w), &B = val(bias);
    if (I.rank() != 2 || W_.rank() != 4 || W_.dim(1) != 1)
      throw ShapeMismatch("lift_conv: bad input ranks");
    const int H = I.dim(0), Wd = I.dim(1), Co = W_.dim(0), k = W_.dim(2);
    if (B.size() != size_t(Co)) throw ShapeMismatch("lift_conv: bias size");
    if (H < k || Wd < k) throw ShapeMismatch("lift_conv: image smaller than kernel");

    auto bank = std::make_shared<std::vector<T>>(size_t(Co) * N * k * k);
    for (int c = 0; c < Co; ++c)
      for (int g = 0; g < N; ++g)
        kernels::rotate_kernel(W_.v.data() + size_t(c) * k * k,
                               bank->data() + (size_t(c) * N + g) * k * k, k,
                               360.0 * g / N);
    Buf<T> out({Co, N, H, Wd});
    const size_t plane = size_t(H) * Wd;
    for (int c = 0; c < Co; ++c)
      for (int g = 0; g < N; ++g)
        kernels::conv2d_same(I.v.data(), bank->data() + (size_t(c) * N + g) * k * k,
                             &B.v[size_t(c)], out.v.data() + (size_t(c) * N + g) * plane,
                             1, 1, H, Wd, k);

    return push("lift_conv", std::move(out), needs(img) || needs(w) || needs(bias),
                {img, w, bias}, [=](Tape& t, Node self) {
                  const Buf<T>& go = t.grad(self);
                  const Buf<T>& Iv = t.val(img);
                  const size_t pl = size_t(H) * Wd;
                  if (t.needs(w)) {
                    Buf<T>& gw = t.grad(w);
                    std::vector<T> gbank(size_t(k) * k);
                    for (int c = 0; c < Co; ++c)
                      for (int g = 0; g < N; ++g) {
                        std::fill(gbank.begin(), gbank.end(), T(0));
                        kernels::conv2d_same_grad_weight(
                            go.v.data() + (size_t(c) * N + g) * pl, Iv.v.data(),
                            gbank.data(), 1, 1, H, Wd, k);
                        kernels::rotate_kernel_adjoint(gbank.data(),
                                                       gw.v.data() + size_t(c) * k * k, k,
                                                       360.0 * g / N);
                      }
                  }
                  if (t.needs(bias)) {
                    Buf<T>& gb = t.grad(bias);
                    for (int c = 0; c < Co; ++c)
                      for (int g = 0; g < N; ++g)
                        kernels::conv2d_same_grad_bias(
                            go.v.data() + (size_t(c) * N + g) * pl, &gb.v[size_t(c)], 1,
                            H, Wd);
                  }
                  if (t.needs(img)) {
                    Buf<T>& gi = t.grad(img);
                    for (int c = 0; c < Co; ++c)
                      for (int g = 0; g < N; ++g)
                        kernels::conv2d_same_grad_input(
                            go.v.data() + (size_t(c) * N + g) * pl,
                            bank->data() + (size_t(c) * N + g) * k * k, gi.v.data(), 1,
                            1, H, Wd, k);
                  }
                });
  }

  /// x {C, G, H, W}, w {Co, C, G, k, k}, bias {Co} -> {Co, G, H, W}.
  /// Output group g convolves with kernels rotated by g*360/G whose
  /// input-group axis is cyclically shifted by g (weight tying).
  Node group_conv(Node x, Node w, Node bias) {
    const Buf<T>&X = val(x), &W_ = val(w), &B = val(bias);
    if (X.rank() != 4 || W_.rank() != 5) throw ShapeMismatch("group_conv: ranks");
    const int C = X.dim(0), G = X.dim(1), H = X.dim(2), Wd = X.dim(3);
    const int Co = W_.dim(0), k = W_.dim(3);
    if (W_.dim(1) != C || W_.dim(2) != G || W_.dim(4) != k)
      throw ShapeMismatch("group_conv: weight dims");
    if (B.size() != size_t(Co)) throw ShapeMismatch("group_conv: bias size");

    // expanded bank, per output group: [Co][C*G][k][k]
    const size_t kk = size_t(k) * k;
    auto banks = std::make_shared<std::vector<std::vector<T>>>(size_t(G));
    for (int g = 0; g < G; ++g) {
      auto& bank = (*banks)[g];
      bank.resize(size_t(Co) * C * G * kk);
      const double ang = 360.0 * g / G;
      auto taps = kernels::rotate_residual_taps(k, residual_of(ang));
      for (int co = 0; co < Co; ++co)
        for (int ci = 0; ci < C; ++ci)
          for (int h = 0; h < G; ++h) {
            const int m = mod(h - g, G);
            kernels::rotate_kernel(W_.v.data() + ((size_t(co) * C + ci) * G + m) * kk,
                                   bank.data() + ((size_t(co) * C + ci) * G + h) * kk,
                                   k, ang, &taps);
          }
    }

    Buf<T> out({Co, G, H, Wd});
    const size_t plane = size_t(H) * Wd;
    std::vector<T> gslice(size_t(Co) * plane);
    for (int g = 0; g < G; ++g) {
      kernels::conv2d_same(X.v.data(), (*banks)[g].data(), B.v.data(), gslice.data(),
                           C * G, Co, H, Wd, k);
      for (int co = 0; co < Co; ++co)
        std::memcpy(out.v.data() + (size_t(co) * G + g) * plane,
                    gslice.data() + size_t(co) * plane, plane * sizeof(T));
    }

    return push("group_conv", std::move(out), needs(x) || needs(w) || needs(bias),
                {x, w, bias}, [=](Tape& t, Node self) {
                  const Buf<T>& go = t.grad(self);
                  const Buf<T>& Xv = t.val(x);
                  const size_t pl = size_t(H) * Wd;
                  std::vector<T> goslice(size_t(Co) * pl);
                  std::vector<T> gbank;
                  for (int g = 0; g < G; ++g) {
                    for (int co = 0; co < Co; ++co)
                      std::memcpy(goslice.data() + size_t(co) * pl,
                                  go.v.data() + (size_t(co) * G + g) * pl,
                                  pl * sizeof(T));
                    if (t.needs(x))
                      kernels::conv2d_same_grad_input(goslice.data(), (*banks)[g].data(),
                                                      t.grad(x).v.data(), C * G, Co, H,
                                                      Wd, k);
                    if (t.needs(w)) {
                      const size_t kk2 = size_t(k) * k;
                      gbank.assign(size_t(Co) * C * G * kk2, T(0));
                      kernels::conv2d_same_grad_weight(goslice.data(), Xv.v.data(),
                                                       gbank.data(), C * G, Co, H, Wd,
                                                       k);
                      const double ang = 360.0 * g / G;
                      auto taps = kernels::rotate_residual_taps(k, residual_of(ang));
                      Buf<T>& gw = t.grad(w);
                      for (int co = 0; co < Co; ++co)
                        for (int ci = 0; ci < C; ++ci)
                          for (int h = 0; h < G; ++h) {
                            const int m = mod(h - g, G);
                            kernels::rotate_kernel_adjoint(
                                gbank.data() + ((size_t(co) * C + ci) * G + h) * kk2,
                                gw.v.data() + ((size_t(co) * C + ci) * G + m) * kk2, k,
                                ang, &taps);
                          }
                    }
                    if (t.needs(bias))
                      kernels::conv2d_same_grad_bias(goslice.data(),
                                                     t.grad(bias).v.data(), Co, H, Wd);
                  }
                });
  }

  Node relu(Node x) {
    Buf<T> out = val(x);
    for (T& v : out.v) v = v > T(0) ? v : T(0);
    return push("relu", std::move(out), needs(x), {x}, [=](Tape& t, Node self) {
      const Buf<T>&go = t.grad(self), &xv = t.val(x);
      Buf<T>& gx = t.grad(x);
      for (size_t i = 0; i < gx.size(); ++i)
        if (xv.v[i] > T(0)) gx.v[i] += go.v[i];
    });
  }

  /// s x s block mean over the spatial axes of {C, G, H, W}.
  Node avg_pool(Node x, int s) {
    const Buf<T>& X = val(x);
    if (X.rank() != 4) throw ShapeMismatch("avg_pool: rank");
    const int C = X.dim(0), G = X.dim(1), H = X.dim(2), W = X.dim(3);
    if (s < 1 || H % s != 0 || W % s != 0) throw ShapeMismatch("avg_pool: stride");
    if (s == 1) return x;
    Buf<T> out({C, G, H / s, W / s});
    const size_t pi = size_t(H) * W, po = pi / size_t(s) / size_t(s);
    for (int p = 0; p < C * G; ++p)
      kernels::avg_pool_plane(X.v.data() + p * pi, out.v.data() + p * po, H, W, s);
    return push("avg_pool", std::move(out), needs(x), {x}, [=](Tape& t, Node self) {
      if (!t.needs(x)) return;
      const Buf<T>& go = t.grad(self);
      Buf<T>& gx = t.grad(x);
      for (int p = 0; p < C * G; ++p)
        kernels::avg_pool_plane_backward(go.v.data() + p * po, gx.v.data() + p * pi, H,
                                         W, s);
    });
  }

  Node concat_channels(Node a, Node b) {
    const Buf<T>&A = val(a), &B = val(b);
    if (A.rank() != 4 || B.rank() != 4 || A.dim(1) != B.dim(1) ||
        A.dim(2) != B.dim(2) || A.dim(3) != B.dim(3))
      throw ShapeMismatch("concat_channels: dims");
    Buf<T> out({A.dim(0) + B.dim(0), A.dim(1), A.dim(2), A.dim(3)});
    std::memcpy(out.v.data(), A.v.data(), A.size() * sizeof(T));
    std::memcpy(out.v.data() + A.size(), B.v.data(), B.size() * sizeof(T));
    const size_t na = A.size(), nb = B.size();
    return push("concat_channels", std::move(out), needs(a) || needs(b), {a, b},
                [=](Tape& t, Node self) {
                  const Buf<T>& go = t.grad(self);
                  if (t.needs(a)) {
                    Buf<T>& ga = t.grad(a);
                    for (size_t i = 0; i < na; ++i) ga.v[i] += go.v[i];
                  }
                  if (t.needs(b)) {
                    Buf<T>& gb = t.grad(b);
                    for (size_t i = 0; i < nb; ++i) gb.v[i] += go.v[na + i];
                  }
                });
  }

  /// Half-pixel bilinear resize of the spatial axes to (Ho, Wo).
  Node resize_bilinear(Node x, int Ho, int Wo) {
    const Buf<T>& X = val(x);
    if (X.rank() != 4) throw ShapeMismatch("resize_bilinear: rank");
    const int C = X.dim(0), G = X.dim(1), H = X.dim(2), W = X.dim(3);
    if (H == Ho && W == Wo) return x;
    auto taps = std::make_shared<std::vector<kernels::ResizeTap>>(
        kernels::resize_taps(H, W, Ho, Wo));
    Buf<T> out({C, G, Ho, Wo});
    const size_t pi = size_t(H) * W, po = size_t(Ho) * Wo;
    for (int p = 0; p < C * G; ++p)
      kernels::resize_plane(X.v.data() + p * pi, out.v.data() + p * po, W, *taps);
    return push("resize_bilinear", std::move(out), needs(x), {x},
                [=](Tape& t, Node self) {
                  if (!t.needs(x)) return;
                  const Buf<T>& go = t.grad(self);
                  Buf<T>& gx = t.grad(x);
                  for (int p = 0; p < C * G; ++p)
                    kernels::resize_plane_backward(go.v.data() + p * po,
                                                   gx.v.data() + p * pi, W, *taps);
                });
  }

  // --- group algebra ----------------------------------------------------

  /// out[c, i] = in[c, (i + delta) mod G] on rank-4 values.
  Node cyclic_shift_group(Node x, int delta) {
    const Buf<T>& X = val(x);
    if (X.rank() != 4) throw ShapeMismatch("cyclic_shift_group: rank");
    const int C = X.dim(0), G = X.dim(1);
    const size_t plane = X.size() / size_t(C) / size_t(G);
    Buf<T> out(X.dims);
    for (int c = 0; c < C; ++c)
      for (int g = 0; g < G; ++g)
        std::memcpy(out.v.data() + (size_t(c) * G + g) * plane,
                    X.v.data() + (size_t(c) * G + mod(g + delta, G)) * plane,
                    plane * sizeof(T));
    return push("cyclic_shift_group", std::move(out), needs(x), {x},
                [=](Tape& t, Node self) {
                  if (!t.needs(x)) return;
                  const Buf<T>& go = t.grad(self);
                  Buf<T>& gx = t.grad(x);
                  // adjoint of a cyclic shift is the shift by -delta
                  for (int c = 0; c < C; ++c)
                    for (int g = 0; g < G; ++g) {
                      T* dst = gx.v.data() + (size_t(c) * G + mod(g + delta, G)) * plane;
                      const T* src = go.v.data() + (size_t(c) * G + g) * plane;
                      for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
                    }
                });
  }

  Node rotate_quarter(Node x, int q) {
    const Buf<T>& X = val(x);
    if (X.rank() != 4) throw ShapeMismatch("rotate_quarter: rank");
    const int C = X.dim(0), G = X.dim(1), H = X.dim(2), W = X.dim(3);
    if (H != W) throw NonSquare("rotate_quarter: H != W");
    Buf<T> out(X.dims);
    const size_t plane = size_t(H) * W;
    for (int p = 0; p < C * G; ++p)
      roteq::detail::rotate_plane_quarter(X.v.data() + p * plane,
                                          out.v.data() + p * plane, H, W, mod(q, 4));
    return push("rotate_quarter", std::move(out), needs(x), {x},
                [=](Tape& t, Node self) {
                  if (!t.needs(x)) return;
                  const Buf<T>& go = t.grad(self);
                  Buf<T>& gx = t.grad(x);
                  std::vector<T> tmp(plane);
                  for (int p = 0; p < C * G; ++p) {
                    roteq::detail::rotate_plane_quarter(go.v.data() + p * plane,
                                                        tmp.data(), H, W, mod(-q, 4));
                    T* dst = gx.v.data() + p * plane;
                    for (size_t i = 0; i < plane; ++i) dst[i] += tmp[i];
                  }
                });
  }

  // --- keypoint / descriptor path ----------------------------------------

  /// Bilinear samples of {C, G, H, W} at K (y, x) feature coordinates.
  /// Row k of the {K, C*G} output is the channel-major keypoint feature.
  Node sample_rows(Node F, const std::vector<std::array<double, 2>>& yx) {
    const Buf<T>& X = val(F);
    if (X.rank() != 4) throw ShapeMismatch("sample_rows: rank");
    const int C = X.dim(0), G = X.dim(1), H = X.dim(2), W = X.dim(3);
    const int K = int(yx.size());
    auto taps = std::make_shared<std::vector<roteq::detail::BilinearWeights>>();
    taps->reserve(yx.size());
    for (auto& p : yx) taps->push_back(roteq::detail::bilinear_weights(p[0], p[1], H, W));
    Buf<T> out({K, C * G});
    const size_t plane = size_t(H) * W;
    for (int k = 0; k < K; ++k) {
      const auto& t = (*taps)[k];
      for (int p = 0; p < C * G; ++p) {
        const T* pl = X.v.data() + p * plane;
        out.v[size_t(k) * C * G + p] =
            T(t.w00) * pl[size_t(t.y0) * W + t.x0] + T(t.w01) * pl[size_t(t.y0) * W + t.x1] +
            T(t.w10) * pl[size_t(t.y1) * W + t.x0] + T(t.w11) * pl[size_t(t.y1) * W + t.x1];
      }
    }
    return push("sample_rows", std::move(out), needs(F), {F}, [=](Tape& t, Node self) {
      if (!t.needs(F)) return;
      const Buf<T>& go = t.grad(self);
      Buf<T>& gx = t.grad(F);
      for (int k = 0; k < K; ++k) {
        const auto& tap = (*taps)[k];
        for (int p = 0; p < C * G; ++p) {
          T* pl = gx.v.data() + p * plane;
          const T g = go.v[size_t(k) * C * G + p];
          pl[size_t(tap.y0) * W + tap.x0] += T(tap.w00) * g;
          pl[size_t(tap.y0) * W + tap.x1] += T(tap.w01) * g;
          pl[size_t(tap.y1) * W + tap.x0] += T(tap.w10) * g;
          pl[size_t(tap.y1) * W + tap.x1] += T(tap.w11) * g;
        }
      }
    });
  }

  Node slice_cols(Node m, int c0, int c1) {
    const Buf<T>& X = val(m);
    if (X.rank() != 2 || c0 < 0 || c1 > X.dim(1) || c0 >= c1)
      throw ShapeMismatch("slice_cols: range");
    const int K = X.dim(0), M = X.dim(1), Mo = c1 - c0;
    Buf<T> out({K, Mo});
    for (int k = 0; k < K; ++k)
      std::memcpy(out.v.data() + size_t(k) * Mo, X.v.data() + size_t(k) * M + c0,
                  size_t(Mo) * sizeof(T));
    return push("slice_cols", std::move(out), needs(m), {m}, [=](Tape& t, Node self) {
      if (!t.needs(m)) return;
      const Buf<T>& go = t.grad(self);
      Buf<T>& gx = t.grad(m);
      for (int k = 0; k < K; ++k)
        for (int j = 0; j < Mo; ++j)
          gx.v[size_t(k) * M + c0 + j] += go.v[size_t(k) * Mo + j];
    });
  }

  /// out[k, i] = in[k, (i + delta) mod M].
  Node shift_cols_cyclic(Node m, int delta) {
    const Buf<T>& X = val(m);
    if (X.rank() != 2) throw ShapeMismatch("shift_cols_cyclic: rank");
    const int K = X.dim(0), M = X.dim(1);
    Buf<T> out({K, M});
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < M; ++i)
        out.v[size_t(k) * M + i] = X.v[size_t(k) * M + mod(i + delta, M)];
    return push("shift_cols_cyclic", std::move(out), needs(m), {m},
                [=](Tape& t, Node self) {
                  if (!t.needs(m)) return;
                  const Buf<T>& go = t.grad(self);
                  Buf<T>& gx = t.grad(m);
                  for (int k = 0; k < K; ++k)
                    for (int i = 0; i < M; ++i)
                      gx.v[size_t(k) * M + mod(i + delta, M)] += go.v[size_t(k) * M + i];
                });
  }

  /// Per-row group aligning of {K, C*G} keypoint features: row k's C
  /// G-blocks are each cyclically shifted by deltas[k].
  Node align_rows(Node m, std::vector<int> deltas, int C, int G) {
    const Buf<T>& X = val(m);
    if (X.rank() != 2 || X.dim(1) != C * G) throw ShapeMismatch("align_rows: dims");
    const int K = X.dim(0);
    if (int(deltas.size()) != K) throw ShapeMismatch("align_rows: delta count");
    auto ds = std::make_shared<std::vector<int>>(std::move(deltas));
    Buf<T> out({K, C * G});
    for (int k = 0; k < K; ++k) {
      const int d = (*ds)[k];
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < G; ++i)
          out.v[(size_t(k) * C + c) * G + i] =
              X.v[(size_t(k) * C + c) * G + mod(i + d, G)];
    }
    return push("align_rows", std::move(out), needs(m), {m}, [=](Tape& t, Node self) {
      if (!t.needs(m)) return;
      const Buf<T>& go = t.grad(self);
      Buf<T>& gx = t.grad(m);
      for (int k = 0; k < K; ++k) {
        const int d = (*ds)[k];
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < G; ++i)
            gx.v[(size_t(k) * C + c) * G + mod(i + d, G)] +=
                go.v[(size_t(k) * C + c) * G + i];
      }
    });
  }

  /// Row-wise x / max(||x||, eps).
  Node l2_normalize_rows(Node m, T eps = T(1e-12)) {
    const Buf<T>& X = val(m);
    if (X.rank() != 2) throw ShapeMismatch("l2_normalize_rows: rank");
    const int K = X.dim(0), D = X.dim(1);
    auto norms = std::make_shared<std::vector<T>>(size_t(K));
    Buf<T> out({K, D});
    for (int k = 0; k < K; ++k) {
      double s = 0;
      const T* row = X.v.data() + size_t(k) * D;
      for (int j = 0; j < D; ++j) s += double(row[j]) * row[j];
      T n = std::max(T(std::sqrt(s)), eps);
      (*norms)[k] = n;
      T* orow = out.v.data() + size_t(k) * D;
      for (int j = 0; j < D; ++j) orow[j] = row[j] / n;
    }
    return push("l2_normalize_rows", std::move(out), needs(m), {m},
                [=](Tape& t, Node self) {
                  if (!t.needs(m)) return;
                  const Buf<T>&go = t.grad(self), &y = t.val(self);
                  Buf<T>& gx = t.grad(m);
                  for (int k = 0; k < K; ++k) {
                    const T* yr = y.v.data() + size_t(k) * D;
                    const T* gr = go.v.data() + size_t(k) * D;
                    double dot = 0;
                    for (int j = 0; j < D; ++j) dot += double(yr[j]) * gr[j];
                    const T n = (*norms)[k];
                    T* gxr = gx.v.data() + size_t(k) * D;
                    for (int j = 0; j < D; ++j)
                      gxr[j] += (gr[j] - T(dot) * yr[j]) / n;
                  }
                });
  }

  /// A {K, D} x B {M, D}^T -> {K, M}.
  Node matmul_nt(Node a, Node b) {
    const Buf<T>&A = val(a), &B = val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(1))
      throw ShapeMismatch("matmul_nt: dims");
    const int K = A.dim(0), M = B.dim(0), D = A.dim(1);
    Buf<T> out({K, M});
    for (int i = 0; i < K; ++i) {
      const T* ar = A.v.data() + size_t(i) * D;
      for (int j = 0; j < M; ++j) {
        const T* br = B.v.data() + size_t(j) * D;
        double s = 0;
        for (int d = 0; d < D; ++d) s += double(ar[d]) * br[d];
        out.v[size_t(i) * M + j] = T(s);
      }
    }
    return push("matmul_nt", std::move(out), needs(a) || needs(b), {a, b},
                [=](Tape& t, Node self) {
                  const Buf<T>& go = t.grad(self);
                  const Buf<T>&Av = t.val(a), &Bv = t.val(b);
                  if (t.needs(a)) {
                    Buf<T>& ga = t.grad(a);
                    for (int i = 0; i < K; ++i)
                      for (int j = 0; j < M; ++j) {
                        const T g = go.v[size_t(i) * M + j];
                        if (g == T(0)) continue;
                        T* gar = ga.v.data() + size_t(i) * D;
                        const T* br = Bv.v.data() + size_t(j) * D;
                        for (int d = 0; d < D; ++d) gar[d] += g * br[d];
                      }
                  }
                  if (t.needs(b)) {
                    Buf<T>& gb = t.grad(b);
                    for (int i = 0; i < K; ++i)
                      for (int j = 0; j < M; ++j) {
                        const T g = go.v[size_t(i) * M + j];
                        if (g == T(0)) continue;
                        T* gbr = gb.v.data() + size_t(j) * D;
                        const T* ar = Av.v.data() + size_t(i) * D;
                        for (int d = 0; d < D; ++d) gbr[d] += g * ar[d];
                      }
                  }
                });
  }

  // --- pointwise and reductions -------------------------------------------

  Node add(Node a, Node b) { return binary("add", a, b, [](T x, T y) { return x + y; },
        [](Tape& t, Node a2, Node b2, Node self) {
          const Buf<T>& go = t.grad(self);
          if (t.needs(a2)) axpy(t.grad(a2), go, T(1));
          if (t.needs(b2)) axpy(t.grad(b2), go, T(1));
        }); }

  Node sub(Node a, Node b) { return binary("sub", a, b, [](T x, T y) { return x - y; },
        [](Tape& t, Node a2, Node b2, Node self) {
          const Buf<T>& go = t.grad(self);
          if (t.needs(a2)) axpy(t.grad(a2), go, T(1));
          if (t.needs(b2)) axpy(t.grad(b2), go, T(-1));
        }); }

  Node mul(Node a, Node b) { return binary("mul", a, b, [](T x, T y) { return x * y; },
        [](Tape& t, Node a2, Node b2, Node self) {
          const Buf<T>& go = t.grad(self);
          if (t.needs(a2)) {
            const Buf<T>& bv = t.val(b2);
            Buf<T>& ga = t.grad(a2);
            for (size_t i = 0; i < ga.size(); ++i) ga.v[i] += go.v[i] * bv.v[i];
          }
          if (t.needs(b2)) {
            const Buf<T>& av = t.val(a2);
            Buf<T>& gb = t.grad(b2);
            for (size_t i = 0; i < gb.size(); ++i) gb.v[i] += go.v[i] * av.v[i];
          }
        }); }

  Node scale(Node a, T c) {
    Buf<T> out = val(a);
    for (T& x : out.v) x *= c;
    return push("scale", std::move(out), needs(a), {a}, [=](Tape& t, Node self) {
      if (!t.needs(a)) return;
      axpy(t.grad(a), t.grad(self), c);
    });
  }

  Node neg(Node a) { return scale(a, T(-1)); }

  Node log(Node a) {
    Buf<T> out = val(a);
    for (T& x : out.v) x = std::log(x);
    return push("log", std::move(out), needs(a), {a}, [=](Tape& t, Node self) {
      if (!t.needs(a)) return;
      const Buf<T>&go = t.grad(self), &xv = t.val(a);
      Buf<T>& gx = t.grad(a);
      for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += go.v[i] / xv.v[i];
    });
  }

  Node exp(Node a) {
    Buf<T> out = val(a);
    for (T& x : out.v) x = std::exp(x);
    return push("exp", std::move(out), needs(a), {a}, [=](Tape& t, Node self) {
      if (!t.needs(a)) return;
      const Buf<T>&go = t.grad(self), &yv = t.val(self);
      Buf<T>& gx = t.grad(a);
      for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += go.v[i] * yv.v[i];
    });
  }

  Node softmax_rows(Node m) {
    Buf<T> out = row_softmax(val(m), false);
    return push("softmax_rows", std::move(out), needs(m), {m},
                [=](Tape& t, Node self) {
                  if (!t.needs(m)) return;
                  const Buf<T>&go = t.grad(self), &y = t.val(self);
                  Buf<T>& gx = t.grad(m);
                  const int K = y.dim(0), M = y.dim(1);
                  for (int k = 0; k < K; ++k) {
                    const T* yr = y.v.data() + size_t(k) * M;
                    const T* gr = go.v.data() + size_t(k) * M;
                    double dot = 0;
                    for (int j = 0; j < M; ++j) dot += double(yr[j]) * gr[j];
                    T* gxr = gx.v.data() + size_t(k) * M;
                    for (int j = 0; j < M; ++j) gxr[j] += yr[j] * (gr[j] - T(dot));
                  }
                });
  }

  Node log_softmax_rows(Node m) {
    Buf<T> out = row_softmax(val(m), true);
    return push("log_softmax_rows", std::move(out), needs(m), {m},
                [=](Tape& t, Node self) {
                  if (!t.needs(m)) return;
                  const Buf<T>&go = t.grad(self), &y = t.val(self);
                  Buf<T>& gx = t.grad(m);
                  const int K = y.dim(0), M = y.dim(1);
                  for (int k = 0; k < K; ++k) {
                    const T* yr = y.v.data() + size_t(k) * M;
                    const T* gr = go.v.data() + size_t(k) * M;
                    double gsum = 0;
                    for (int j = 0; j < M; ++j) gsum += double(gr[j]);
                    T* gxr = gx.v.data() + size_t(k) * M;
                    for (int j = 0; j < M; ++j)
                      gxr[j] += gr[j] - T(gsum) * std::exp(yr[j]);
                  }
                });
  }

  /// Sum of all elements; accumulates in double.
  Node sum(Node a) {
    double s = 0;
    for (T x : val(a).v) s += double(x);
    return push("sum", Buf<T>::scalar(T(s)), needs(a), {a}, [=](Tape& t, Node self) {
      if (!t.needs(a)) return;
      const T g = t.grad(self).v[0];
      Buf<T>& gx = t.grad(a);
      for (T& x : gx.v) x += g;
    });
  }

  Node pick(Node a, int flat) {
    const Buf<T>& X = val(a);
    if (flat < 0 || size_t(flat) >= X.size()) throw OutOfBounds("pick: index");
    return push("pick", Buf<T>::scalar(X.v[size_t(flat)]), needs(a), {a},
                [=](Tape& t, Node self) {
                  if (!t.needs(a)) return;
                  t.grad(a).v[size_t(flat)] += t.grad(self).v[0];
                });
  }

  /// InfoNCE over a {K, K} similarity matrix whose row i pairs with
  /// column i: sum_i [LSE_{k in N(i)} S_ik / tau - S_ii / tau], with
  /// N(i) = K \ i (exclusive) or all of K (inclusive).
  Node info_nce(Node s, T tau, bool inclusive) {
    const Buf<T>& S = val(s);
    if (S.rank() != 2 || S.dim(0) != S.dim(1)) throw ShapeMismatch("info_nce: square");
    const int K = S.dim(0);
    if (K < 2) throw ShapeMismatch("info_nce: needs K >= 2");
    double loss = 0;
    for (int i = 0; i < K; ++i) {
      const T* row = S.v.data() + size_t(i) * K;
      double mx = -1e300;
      for (int j = 0; j < K; ++j)
        if ((inclusive || j != i) && double(row[j]) > mx) mx = double(row[j]);
      double z = 0;
      for (int j = 0; j < K; ++j)
        if (inclusive || j != i) z += std::exp((double(row[j]) - mx) / double(tau));
      loss += mx / double(tau) + std::log(z) - double(row[i]) / double(tau);
    }
    return push("info_nce", Buf<T>::scalar(T(loss)), needs(s), {s},
                [=](Tape& t, Node self) {
                  if (!t.needs(s)) return;
                  const T g = t.grad(self).v[0];
                  const Buf<T>& Sv = t.val(s);
                  Buf<T>& gs = t.grad(s);
                  for (int i = 0; i < K; ++i) {
                    const T* row = Sv.v.data() + size_t(i) * K;
                    double mx = -1e300;
                    for (int j = 0; j < K; ++j)
                      if ((inclusive || j != i) && double(row[j]) > mx) mx = double(row[j]);
                    double z = 0;
                    for (int j = 0; j < K; ++j)
                      if (inclusive || j != i) z += std::exp((double(row[j]) - mx) / double(tau));
                    T* gr = gs.v.data() + size_t(i) * K;
                    for (int j = 0; j < K; ++j) {
                      double p = (inclusive || j != i)
                                     ? std::exp((double(row[j]) - mx) / double(tau)) / z
                                     : 0.0;
                      gr[j] += g * T((p - (j == i ? 1.0 : 0.0)) / double(tau));
                    }
                  }
                });
  }

  /// Name-based dispatch for unary primitives; unknown names throw
  /// UnregisteredPrimitive.
  Node apply(std::string_view name, Node x) {
    if (name == "relu") return relu(x);
    if (name == "log") return log(x);
    if (name == "exp") return exp(x);
    if (name == "neg") return neg(x);
    if (name == "sum") return sum(x);
    if (name == "softmax_rows") return softmax_rows(x);
    if (name == "log_softmax_rows") return log_softmax_rows(x);
    if (name == "l2_normalize_rows") return l2_normalize_rows(x);
    throw UnregisteredPrimitive("unregistered primitive: " + std::string(name));
  }

  // --- access -------------------------------------------------------------

  const Buf<T>& val(Node n) const { return vals_[size_t(n)]; }

  T scalar_value(Node n) const {
    const Buf<T>& b = val(n);
    if (b.size() != 1) throw ShapeMismatch("scalar_value: not a scalar node");
    return b.v[0];
  }

  Buf<T>& grad(Node n) { return grads_[size_t(n)]; }
  bool needs(Node n) const { return needs_grad_[size_t(n)]; }
  size_t num_nodes() const { return vals_.size(); }

  struct OpRecord {
    std::string_view op;
    std::vector<Node> inputs;
  };
  const std::vector<OpRecord>& records() const { return recs_meta_; }

  /// Reverse accumulation from a scalar loss node. Parameter gradients
  /// are accumulated into their Parameter::grad sinks.
  void backward(Node loss) {
    if (val(loss).size() != 1) throw ShapeMismatch("backward: loss must be scalar");
    grads_.clear();
    grads_.reserve(vals_.size());
    for (const Buf<T>& v : vals_) {
      Buf<T> g;
      g.dims = v.dims;
      g.v.assign(v.size(), T(0));
      grads_.push_back(std::move(g));
    }
    grads_[size_t(loss)].v[0] = T(1);
    for (size_t i = vals_.size(); i-- > 0;) {
      if (backs_[i] && needs_grad_[i]) backs_[i](*this, Node(i));
    }
    for (auto& [node, p] : params_) {
      const Buf<T>& g = grads_[size_t(node)];
      for (size_t i = 0; i < g.size(); ++i) p->grad.v[i] += g.v[i];
    }
  }

 private:
  static void axpy(Buf<T>& dst, const Buf<T>& src, T c) {
    for (size_t i = 0; i < dst.size(); ++i) dst.v[i] += c * src.v[i];
  }

  static double residual_of(double ang) {
    int m;
    double r;
    kernels::split_angle(ang, m, r);
    return r;
  }

  static Buf<T> row_softmax(const Buf<T>& X, bool take_log) {
    if (X.rank() != 2) throw ShapeMismatch("softmax: rank");
    const int K = X.dim(0), M = X.dim(1);
    Buf<T> out({K, M});
    for (int k = 0; k < K; ++k) {
      const T* row = X.v.data() + size_t(k) * M;
      T* orow = out.v.data() + size_t(k) * M;
      double mx = -1e300;
      for (int j = 0; j < M; ++j) mx = std::max(mx, double(row[j]));
      double z = 0;
      for (int j = 0; j < M; ++j) z += std::exp(double(row[j]) - mx);
      const double lz = std::log(z) + mx;
      for (int j = 0; j < M; ++j)
        orow[j] = take_log ? T(double(row[j]) - lz) : T(std::exp(double(row[j]) - lz));
    }
    return out;
  }

  Node binary(std::string_view op, Node a, Node b, T (*f)(T, T),
              void (*back)(Tape&, Node, Node, Node)) {
    const Buf<T>&A = val(a), &B = val(b);
    if (!A.same_dims(B)) throw ShapeMismatch(std::string(op) + ": dims differ");
    Buf<T> out(A.dims);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = f(A.v[i], B.v[i]);
    return push(op, std::move(out), needs(a) || needs(b), {a, b},
                [=](Tape& t, Node self) { back(t, a, b, self); });
  }

  Node push(std::string_view op, Buf<T> val, bool needs_grad, std::vector<Node> inputs,
            std::function<void(Tape&, Node)> back) {
    if (!is_registered(op))
      throw UnregisteredPrimitive("unregistered primitive: " + std::string(op));
    for (Node in : inputs) assert(in >= 0 && size_t(in) < vals_.size());
    vals_.push_back(std::move(val));
    needs_grad_.push_back(needs_grad);
    backs_.push_back(std::move(back));
    recs_meta_.push_back({op, std::move(inputs)});
    return Node(vals_.size() - 1);
  }

  std::vector<Buf<T>> vals_;
  std::vector<Buf<T>> grads_;
  std::vector<bool> needs_grad_;
  std::vector<std::function<void(Tape&, Node)>> backs_;
  std::vector<OpRecord> recs_meta_;
  std::vector<std::pair<Node, Parameter<T>*>> params_;
};

/// Runs a graph-building closure on a fresh tape.
template <typename T>
struct ForwardResult {
  T loss;
  Node loss_node;
  Tape<T> tape;
};

template <typename T, typename F>
ForwardResult<T> forward(F&& build) {
  Tape<T> tape;
  Node loss = build(tape);
  T value = tape.scalar_value(loss);
  return {value, loss, std::move(tape)};
}

// --- finite-difference gradient checking ----------------------------------

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0;
  double worst_analytic = 0, worst_numeric = 0;
  size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0;
  bool passed(double tol) const { return max_rel_err <= tol; }
};

/// Central-difference check of d(loss)/d(param) for every parameter.
/// `build` must construct the loss from the parameters' current values.
/// Large parameters are subsampled deterministically (stride sampling,
/// at most `max_entries` elements each). Relative error uses
/// |a - n| / max(|a|, |n|, 0.01).
template <typename T, typename BuildFn>
GradCheckReport check_gradients(BuildFn&& build, std::vector<Parameter<T>*> params,
                                double eps, double tol, size_t max_entries = 64,
                                double corrupt = 0.0) {
  for (auto* p : params) p->zero_grad();
  auto res = forward<T>(build);
  res.tape.backward(res.loss_node);
  if (corrupt != 0.0 && !params.empty() && params[0]->grad.size() > 0)
    params[0]->grad.v[0] += T(corrupt);

  GradCheckReport report;
  for (auto* p : params) {
    GradCheckEntry e;
    e.name = p->name;
    const size_t n = p->value.size();
    const size_t count = std::min(n, max_entries);
    for (size_t j = 0; j < count; ++j) {
      const size_t idx = j * n / count;
      const T saved = p->value.v[idx];
      p->value.v[idx] = saved + T(eps);
      double lp = double(forward<T>(build).loss);
      p->value.v[idx] = saved - T(eps);
      double lm = double(forward<T>(build).loss);
      p->value.v[idx] = saved;
      const double numeric = (lp - lm) / (2 * eps);
      const double analytic = double(p->grad.v[idx]);
      const double rel =
          std::abs(analytic - numeric) /
          std::max({std::abs(analytic), std::abs(numeric), 0.01});
      if (rel > e.max_rel_err) {
        e.max_rel_err = rel;
        e.worst_analytic = analytic;
        e.worst_numeric = numeric;
      }
      ++e.checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace roteq::ad
