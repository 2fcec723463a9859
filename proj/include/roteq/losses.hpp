#pragma once

#include <cmath>
#include <vector>

#include "roteq/autodiff.hpp"
#include "roteq/common.hpp"

namespace roteq {

struct LossConfig {
  double tau = 0.07;
  double alpha = 10.0;
  bool inclusive_denominator = true;  // Eq.-as-written excludes the positive

  void validate() const {
    if (tau <= 0) throw ConfigError("tau must be > 0");
    if (alpha < 0) throw ConfigError("alpha must be >= 0");
  }
};

namespace detail {

inline std::vector<double> softmax(const float* row, int G) {
  double mx = row[0];
  for (int g = 1; g < G; ++g) mx = std::max(mx, double(row[g]));
  std::vector<double> p(size_t(G), 0.0);
  double z = 0;
  for (int g = 0; g < G; ++g) z += p[size_t(g)] = std::exp(double(row[g]) - mx);
  for (double& x : p) x /= z;
  return p;
}

}  // namespace detail

/// Cross-entropy between per-keypoint softmax histograms of the source
/// image and the GT-shifted histograms of the warped image:
/// L = -sum_k sum_g softmax(O_A)_kg * log softmax(shift(O_B, delta))_kg.
/// O_A, O_B are K x G row-major logits.
inline double orientation_loss(const std::vector<float>& O_A,
                               const std::vector<float>& O_B, int K, int G,
                               int delta_gt) {
  if (int(O_A.size()) != K * G || O_B.size() != O_A.size())
    throw ShapeMismatch("orientation_loss: K x G dims");
  double loss = 0;
  for (int k = 0; k < K; ++k) {
    auto pa = detail::softmax(O_A.data() + size_t(k) * G, G);
    // log softmax of the shifted row, computed stably from raw logits
    const float* rb = O_B.data() + size_t(k) * G;
    double mx = rb[0];
    for (int g = 1; g < G; ++g) mx = std::max(mx, double(rb[g]));
    double z = 0;
    for (int g = 0; g < G; ++g) z += std::exp(double(rb[g]) - mx);
    const double lz = std::log(z) + mx;
    for (int g = 0; g < G; ++g) {
      const double logq = double(rb[mod(g + delta_gt, G)]) - lz;
      loss -= pa[size_t(g)] * logq;
    }
  }
  return loss;
}

/// Contrastive descriptor loss over K corresponding unit-norm rows.
/// sim is cosine similarity (dot product of unit rows). The denominator
/// runs over k != i as written, or over all k when inclusive.
inline double descriptor_loss(const std::vector<std::vector<float>>& D_A,
                              const std::vector<std::vector<float>>& D_B,
                              double tau, bool inclusive) {
  const int K = int(D_A.size());
  if (K < 2 || D_B.size() != D_A.size())
    throw ShapeMismatch("descriptor_loss: needs K >= 2 matching rows");
  const size_t dim = D_A[0].size();
  auto check_norm = [&](const std::vector<float>& r) {
    if (r.size() != dim) throw ShapeMismatch("descriptor_loss: row dims differ");
    double s = 0;
    for (float x : r) s += double(x) * x;
    if (std::abs(std::sqrt(s) - 1.0) > 1e-3)
      throw NotNormalized("descriptor row is not unit norm");
  };
  for (const auto& r : D_A) check_norm(r);
  for (const auto& r : D_B) check_norm(r);

  auto dot = [&](const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0;
    for (size_t j = 0; j < dim; ++j) s += double(a[j]) * b[j];
    return s;
  };

  double loss = 0;
  for (int i = 0; i < K; ++i) {
    double mx = -1e300;
    for (int k = 0; k < K; ++k)
      if (inclusive || k != i) mx = std::max(mx, dot(D_A[size_t(i)], D_B[size_t(k)]) / tau);
    double z = 0;
    for (int k = 0; k < K; ++k)
      if (inclusive || k != i)
        z += std::exp(dot(D_A[size_t(i)], D_B[size_t(k)]) / tau - mx);
    loss += mx + std::log(z) - dot(D_A[size_t(i)], D_B[size_t(i)]) / tau;
  }
  return loss;
}

inline double total_loss(double l_ori, double l_desc, double alpha) {
  return alpha * l_ori + l_desc;
}

/// Shifting value: the integer group index nearest to theta.
inline int quantize_delta(double theta_deg, int G) {
  return mod(int(std::lround(G * theta_deg / 360.0)), G);
}

// --- tape builders (training path) -----------------------------------------

/// O_A, O_B: {K, G} logit nodes. Gradients flow into both sides.
template <typename T>
ad::Node orientation_loss_node(ad::Tape<T>& t, ad::Node O_A, ad::Node O_B,
                               int delta_gt) {
  ad::Node p = t.softmax_rows(O_A);
  ad::Node logq = t.log_softmax_rows(t.shift_cols_cyclic(O_B, delta_gt));
  return t.neg(t.sum(t.mul(p, logq)));
}

/// D_A, D_B: {K, dim} unit-norm descriptor row nodes.
template <typename T>
ad::Node descriptor_loss_node(ad::Tape<T>& t, ad::Node D_A, ad::Node D_B, T tau,
                              bool inclusive) {
  return t.info_nce(t.matmul_nt(D_A, D_B), tau, inclusive);
}

}  // namespace roteq
