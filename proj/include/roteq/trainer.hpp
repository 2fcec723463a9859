#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "roteq/checkpoint.hpp"
#include "roteq/common.hpp"
#include "roteq/config.hpp"
#include "roteq/datagen.hpp"
#include "roteq/descriptor.hpp"
#include "roteq/equivariant.hpp"
#include "roteq/image.hpp"
#include "roteq/losses.hpp"
#include "roteq/optimizer.hpp"
#include "roteq/rng.hpp"

namespace roteq {

/// All knobs in one flat struct; defaults follow the paper-scale recipe,
/// configs/desk.cfg overrides them for minutes-scale runs.
struct TrainConfig {
  eq::BackboneConfig backbone{16, {16, 32, 32, 32}, {2, 1, 1, 1}, 3, {2, 4}};
  int batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 0.1;
  int epochs = 12;
  int iters_per_epoch = 1000;
  double beta1 = 0.9, beta2 = 0.999, opt_eps = 1e-8;
  LossConfig loss;  // tau 0.07, alpha 10, inclusive denominator
  int keypoints = 512;
  int crop = 192;
  uint64_t seed = 1;
  int threads = 1;
  JitterConfig jitter;
  HomographyRanges homography;
  bool jitter_both = false;
  double candidate_ratio = 0.6;  // inference-time defaults, carried in configs
  int candidate_k = 4;

  void validate() const {
    backbone.validate();
    loss.validate();
    if (batch_size < 1 || epochs < 1 || iters_per_epoch < 1 || keypoints < 2)
      throw ConfigError("batch_size/epochs/iters/keypoints must be positive");
    if (crop < 16 || crop % 2 != 0) throw ConfigError("crop must be even and >= 16");
    if (lr < 0 || weight_decay < 0) throw ConfigError("lr/weight_decay must be >= 0");
  }
};

inline const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys = {
      "group_order",    "widths",          "strides",
      "kernel_size",    "pyramid",         "batch_size",
      "lr",             "weight_decay",    "epochs",
      "iters_per_epoch", "beta1",          "beta2",
      "opt_eps",        "tau",             "alpha",
      "inclusive_denominator", "keypoints", "crop",
      "seed",           "threads",         "jitter_brightness",
      "jitter_contrast", "jitter_noise",   "jitter_blur_prob",
      "jitter_blur_sigma", "jitter_both",  "rot_min",
      "rot_max",        "scale_min",       "scale_max",
      "translate_frac", "perspective",     "candidate_ratio",
      "candidate_k"};
  return keys;
}

inline TrainConfig train_config_from_map(const ConfigMap& m) {
  require_known_keys(m, train_config_keys());
  TrainConfig c;
  c.backbone = backbone_config_from_map(m);
  c.batch_size = get_int(m, "batch_size", c.batch_size);
  c.lr = get_double(m, "lr", c.lr);
  c.weight_decay = get_double(m, "weight_decay", c.weight_decay);
  c.epochs = get_int(m, "epochs", c.epochs);
  c.iters_per_epoch = get_int(m, "iters_per_epoch", c.iters_per_epoch);
  c.beta1 = get_double(m, "beta1", c.beta1);
  c.beta2 = get_double(m, "beta2", c.beta2);
  c.opt_eps = get_double(m, "opt_eps", c.opt_eps);
  c.loss.tau = get_double(m, "tau", c.loss.tau);
  c.loss.alpha = get_double(m, "alpha", c.loss.alpha);
  c.loss.inclusive_denominator =
      get_bool(m, "inclusive_denominator", c.loss.inclusive_denominator);
  c.keypoints = get_int(m, "keypoints", c.keypoints);
  c.crop = get_int(m, "crop", c.crop);
  c.seed = uint64_t(get_int(m, "seed", int(c.seed)));
  c.threads = get_int(m, "threads", c.threads);
  c.jitter.brightness = get_double(m, "jitter_brightness", c.jitter.brightness);
  c.jitter.contrast = get_double(m, "jitter_contrast", c.jitter.contrast);
  c.jitter.noise_sigma = get_double(m, "jitter_noise", c.jitter.noise_sigma);
  c.jitter.blur_prob = get_double(m, "jitter_blur_prob", c.jitter.blur_prob);
  c.jitter.blur_sigma = get_double(m, "jitter_blur_sigma", c.jitter.blur_sigma);
  c.jitter_both = get_bool(m, "jitter_both", c.jitter_both);
  c.homography.rot_min = get_double(m, "rot_min", c.homography.rot_min);
  c.homography.rot_max = get_double(m, "rot_max", c.homography.rot_max);
  c.homography.scale_min = get_double(m, "scale_min", c.homography.scale_min);
  c.homography.scale_max = get_double(m, "scale_max", c.homography.scale_max);
  c.homography.translate_frac =
      get_double(m, "translate_frac", c.homography.translate_frac);
  c.homography.perspective = get_double(m, "perspective", c.homography.perspective);
  c.candidate_ratio = get_double(m, "candidate_ratio", c.candidate_ratio);
  c.candidate_k = get_int(m, "candidate_k", c.candidate_k);
  c.validate();
  return c;
}

struct StepLosses {
  double ori = 0, desc = 0, total = 0;
};

struct TrainReport {
  std::vector<double> l_ori, l_desc, l_total;  // one entry per iteration
  double wall_seconds = 0;
  std::string checkpoint_path;
  int epochs_run = 0;
};

namespace detail {

inline ad::Buf<float> image_buf(const ScalarImage& img) {
  ad::Buf<float> b({img.H, img.W});
  b.v = img.data;
  return b;
}

struct PairGraph {
  ad::Node l_ori, l_desc;
};

/// Shared forward graph for one training pair: both images through the
/// bound backbone, per-keypoint histograms and GT-aligned descriptors,
/// both loss terms. Keypoints come from the source image only, projected
/// to the target; descriptors for the target align by the quantized GT
/// shift (the source by zero).
template <typename T>
PairGraph build_pair_graph(ad::Tape<T>& tape, eq::Backbone<T>& model,
                           const typename eq::Backbone<T>::Bound& bd,
                           const TrainingPair& pair, const LossConfig& loss_cfg,
                           ad::Node img_a, ad::Node img_b) {
  auto fa = model.forward(tape, bd, img_a);
  auto fb = model.forward(tape, bd, img_b);
  const int G = fa.G, C = fa.C;

  std::vector<std::array<double, 2>> ya, yb;
  for (size_t i = 0; i < pair.kp_src.size(); ++i) {
    const double ay = eq::to_feature_coord(pair.kp_src[i].y);
    const double ax = eq::to_feature_coord(pair.kp_src[i].x);
    const double by = eq::to_feature_coord(pair.kp_tgt[i].y);
    const double bx = eq::to_feature_coord(pair.kp_tgt[i].x);
    if (ay < 0 || ay > fa.Hf - 1 || ax < 0 || ax > fa.Wf - 1) continue;
    if (by < 0 || by > fb.Hf - 1 || bx < 0 || bx > fb.Wf - 1) continue;
    ya.push_back({ay, ax});
    yb.push_back({by, bx});
  }
  if (ya.size() < 2) throw TooFewKeypoints("training pair has < 2 usable keypoints");

  ad::Node rows_a = tape.sample_rows(fa.features, ya);
  ad::Node rows_b = tape.sample_rows(fb.features, yb);

  const int delta = quantize_delta(pair.theta_gt, G);
  PairGraph g;
  g.l_ori = orientation_loss_node(tape, tape.slice_cols(rows_a, 0, G),
                                  tape.slice_cols(rows_b, 0, G), delta);
  ad::Node d_a = tape.l2_normalize_rows(rows_a);
  ad::Node d_b = tape.l2_normalize_rows(
      tape.align_rows(rows_b, std::vector<int>(yb.size(), delta), C, G));
  g.l_desc = descriptor_loss_node(tape, d_a, d_b, T(loss_cfg.tau),
                                  loss_cfg.inclusive_denominator);
  return g;
}

}  // namespace detail

/// One optimizer update over a batch of pairs (loss averaged).
inline StepLosses train_iteration(eq::Backbone<float>& model, AdamW<float>& opt,
                                  const std::vector<TrainingPair>& batch,
                                  const LossConfig& loss_cfg) {
  if (batch.empty()) throw ConfigError("empty batch");
  ad::Tape<float> tape;
  auto bd = model.bind(tape, true);
  ad::Node total = -1, ori_sum = -1, desc_sum = -1;
  for (const auto& pair : batch) {
    auto g = detail::build_pair_graph(tape, model, bd, pair, loss_cfg,
                                      tape.constant(detail::image_buf(pair.src)),
                                      tape.constant(detail::image_buf(pair.tgt)));
    ori_sum = ori_sum < 0 ? g.l_ori : tape.add(ori_sum, g.l_ori);
    desc_sum = desc_sum < 0 ? g.l_desc : tape.add(desc_sum, g.l_desc);
  }
  const float inv = 1.0f / float(batch.size());
  ad::Node ori_mean = tape.scale(ori_sum, inv);
  ad::Node desc_mean = tape.scale(desc_sum, inv);
  total = tape.add(tape.scale(ori_mean, float(loss_cfg.alpha)), desc_mean);

  StepLosses out;
  out.ori = double(tape.scalar_value(ori_mean));
  out.desc = double(tape.scalar_value(desc_mean));
  out.total = double(tape.scalar_value(total));
  if (!std::isfinite(out.total))
    throw NonFiniteLoss("loss is not finite: total=" + std::to_string(out.total));
  for (auto* p : model.params()) p->zero_grad();
  tape.backward(total);
  opt.step();
  return out;
}

/// Deterministic per-iteration pair synthesis: the RNG stream depends
/// only on (seed, epoch, iteration), so a resumed run replays the exact
/// remaining schedule.
inline std::vector<TrainingPair> make_batch(const std::vector<ScalarImage>& corpus,
                                            const TrainConfig& cfg, int epoch,
                                            int iter) {
  Rng rng(mix_seed(cfg.seed, uint64_t(epoch), uint64_t(iter)));
  PairConfig pc;
  pc.keypoints = cfg.keypoints;
  pc.homography = cfg.homography;
  pc.jitter = cfg.jitter;
  pc.jitter_both = cfg.jitter_both;
  std::vector<TrainingPair> batch;
  for (int b = 0; b < cfg.batch_size; ++b) {
    for (int attempt = 0;; ++attempt) {
      const ScalarImage& img = corpus[size_t(rng.index(int(corpus.size())))];
      ScalarImage cropped =
          (img.H < cfg.crop || img.W < cfg.crop)
              ? resize(img, cfg.crop, cfg.crop)
              : crop(img, rng.index(img.H - cfg.crop + 1),
                     rng.index(img.W - cfg.crop + 1), cfg.crop, cfg.crop);
      try {
        batch.push_back(make_pair(cropped, rng, pc));
        break;
      } catch (const TooFewKeypoints&) {
        if (attempt >= 9) throw;
      }
    }
  }
  return batch;
}

struct ResumeState {
  int epoch = 0;
  int64_t opt_steps = 0;
};

/// Epoch/iteration loop; writes the checkpoint after every epoch. Resume
/// continues at the stored epoch boundary and reproduces the uninterrupted
/// run exactly (single-threaded).
inline TrainReport train(const std::vector<ScalarImage>& corpus, TrainConfig cfg,
                         const std::string& ckpt_path, eq::Backbone<float>& model,
                         AdamW<float>& opt, ResumeState resume = {}) {
  if (corpus.empty()) throw EmptyCorpus("training corpus is empty");
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  report.checkpoint_path = ckpt_path;
  for (int e = resume.epoch; e < cfg.epochs; ++e) {
    for (int it = 0; it < cfg.iters_per_epoch; ++it) {
      auto losses = train_iteration(model, opt, make_batch(corpus, cfg, e, it),
                                    cfg.loss);
      report.l_ori.push_back(losses.ori);
      report.l_desc.push_back(losses.desc);
      report.l_total.push_back(losses.total);
    }
    report.epochs_run = e + 1;
    ConfigMap extras;
    extras["epoch"] = std::to_string(e + 1);
    extras["opt_steps"] = std::to_string(opt.steps());
    extras["seed"] = std::to_string(cfg.seed);
    save_backbone(ckpt_path, model, extras, opt.state());
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/// Convenience wrapper: fresh model + optimizer from a config.
inline TrainReport train_fresh(const std::vector<ScalarImage>& corpus,
                               const TrainConfig& cfg, const std::string& ckpt_path) {
  eq::Backbone<float> model(cfg.backbone, cfg.seed);
  AdamW<float> opt(model.params(),
                   {cfg.lr, cfg.beta1, cfg.beta2, cfg.opt_eps, cfg.weight_decay});
  return train(corpus, cfg, ckpt_path, model, opt);
}

/// Rebuilds model + optimizer state from a checkpoint written by train().
inline ResumeState restore_for_resume(const std::string& ckpt_path,
                                      eq::Backbone<float>& model, AdamW<float>& opt) {
  LoadedBackbone lb = load_backbone(ckpt_path);
  if (lb.model.cfg.group_order != model.cfg.group_order ||
      lb.model.cfg.widths != model.cfg.widths)
    throw ConfigError("checkpoint backbone does not match the training config");
  auto dst = model.params();
  auto src = lb.model.params();
  for (size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
  for (const auto& [name, t] : lb.extra_params) opt.restore(name, t.data);
  ResumeState rs;
  rs.epoch = get_int(lb.config, "epoch", 0);
  rs.opt_steps = get_int(lb.config, "opt_steps", 0);
  opt.set_steps(rs.opt_steps);
  return rs;
}

}  // namespace roteq
