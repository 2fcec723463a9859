// Command-line surface: train, extract, match, bench-roto,
// check-equivariance, check-grad, info. Exit codes: 0 ok, 2 config or
// I/O, 3 runtime, 4 extraction, 5 descriptor dim mismatch, 6 tolerance.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "roteq/checkpoint.hpp"
#include "roteq/common.hpp"
#include "roteq/config.hpp"
#include "roteq/datagen.hpp"
#include "roteq/descriptor.hpp"
#include "roteq/equivariant.hpp"
#include "roteq/harris.hpp"
#include "roteq/homography.hpp"
#include "roteq/image.hpp"
#include "roteq/losses.hpp"
#include "roteq/matcheval.hpp"
#include "roteq/matching.hpp"
#include "roteq/ransac.hpp"
#include "roteq/textures.hpp"
#include "roteq/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace roteq;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitExtract = 4;
constexpr int kExitDim = 5;
constexpr int kExitTolerance = 6;

template <typename F>
int guarded(F&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const EmptyCorpus& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const DimMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDim;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}

TrainConfig load_train_config(const std::string& path) {
  return train_config_from_map(load_config(path));
}

std::vector<ScalarImage> load_corpus(const std::string& dir) {
  std::vector<ScalarImage> corpus;
  for (const auto& f : corpus_files(dir)) corpus.push_back(read_image(f));
  return corpus;
}

// Text keypoint list: one "x y" pair per line, # comments allowed.
std::vector<Keypoint> load_keypoints_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<Keypoint> kps;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    double x, y;
    if (std::sscanf(line.c_str(), "%lf %lf", &x, &y) == 2)
      kps.push_back({x, y, 0.0f});
  }
  if (kps.empty()) throw IoError("no keypoints in " + path);
  return kps;
}

std::vector<double> parse_double_list(const std::string& csv, const char* what) {
  std::vector<double> out;
  std::string item;
  std::stringstream ss(csv);
  while (std::getline(ss, item, ',')) {
    try {
      size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " list: " + csv);
    }
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << text;
  if (!os) throw IoError("short write: " + path);
}

// --- train -------------------------------------------------------------------

struct TrainOpts {
  std::string corpus, config, out;
  int64_t seed = -1;
  bool resume = false;
};

int cmd_train(const TrainOpts& o) {
  if (!fs::exists(o.corpus)) throw IoError("corpus does not exist: " + o.corpus);
  if (!fs::exists(o.config)) throw IoError("config does not exist: " + o.config);
  TrainConfig cfg = load_train_config(o.config);
  if (o.seed >= 0) cfg.seed = uint64_t(o.seed);
  auto corpus = load_corpus(o.corpus);

  eq::Backbone<float> model(cfg.backbone, cfg.seed);
  AdamW<float> opt(model.params(),
                   {cfg.lr, cfg.beta1, cfg.beta2, cfg.opt_eps, cfg.weight_decay});
  ResumeState rs;
  if (o.resume) rs = restore_for_resume(o.out, model, opt);
  TrainReport rep = train(corpus, cfg, o.out, model, opt, rs);

  json j;
  j["checkpoint"] = o.out;
  j["epochs"] = rep.epochs_run;
  j["iterations"] = rep.l_total.size();
  j["seed"] = cfg.seed;
  if (!rep.l_total.empty()) {
    j["final"] = {{"ori", rep.l_ori.back()},
                  {"desc", rep.l_desc.back()},
                  {"total", rep.l_total.back()}};
    double so = 0, sd = 0, st = 0;
    const size_t n = std::min(rep.l_total.size(), size_t(cfg.iters_per_epoch));
    for (size_t i = rep.l_total.size() - n; i < rep.l_total.size(); ++i) {
      so += rep.l_ori[i];
      sd += rep.l_desc[i];
      st += rep.l_total[i];
    }
    j["mean_last_epoch"] = {{"ori", so / double(n)},
                            {"desc", sd / double(n)},
                            {"total", st / double(n)}};
  }
  write_text(o.out + ".json", j.dump(2) + "\n");
  std::printf("trained %d epoch(s), %zu iterations, %.1fs wall\n", rep.epochs_run,
              rep.l_total.size(), rep.wall_seconds);
  if (!rep.l_total.empty())
    std::printf("final losses: ori=%.6f desc=%.6f total=%.6f\n", rep.l_ori.back(),
                rep.l_desc.back(), rep.l_total.back());
  return 0;
}

// --- extract -----------------------------------------------------------------

struct ExtractOpts {
  std::string model, image, keypoints = "harris", method = "align", out;
  int num_keypoints = 128;
  double candidates = 1.0;
  int candidate_k = 4;
  int64_t delta = -1;
};

int cmd_extract(const ExtractOpts& o) {
  LoadedBackbone lb = load_backbone(o.model);
  ScalarImage img = read_image(o.image);
  std::vector<Keypoint> kps =
      o.keypoints == "harris"
          ? harris_keypoints(img, o.num_keypoints, HarrisParams{}).keypoints
          : load_keypoints_text(o.keypoints);

  try {
    GroupTensor F = lb.model.features(img);
    ExtractConfig ec;
    ec.method = desc_method_from_string(o.method);
    ec.candidate_ratio = o.candidates;
    ec.candidate_k = o.candidate_k;
    if (o.delta >= 0) ec.delta_override = int(o.delta);
    ExtractResult res = extract_descriptors(F, kps, ec);
    if (res.descriptors.empty())
      throw TooFewKeypoints("no keypoint produced a descriptor");
    save_descriptors(o.out, res.descriptors);
    std::printf("count=%zu dim=%zu skipped=%d\n", res.descriptors.size(),
                res.descriptors[0].d.size(), res.skipped);
    return 0;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    std::fprintf(stderr, "extraction failed: %s\n", e.what());
    return kExitExtract;
  }
}

// --- match -------------------------------------------------------------------

struct MatchOpts {
  std::string a, b, h_gt, thresholds = "3,5,10", out;
  int width = 0, height = 0;
  double hest_eps = 3.0;
};

int cmd_match(const MatchOpts& o) {
  DescriptorSet A = DescriptorSet::from(load_descriptors(o.a));
  DescriptorSet B = DescriptorSet::from(load_descriptors(o.b));
  auto matches = mutual_nn_match(A, B);

  std::optional<Homography> H;
  if (!o.h_gt.empty()) H = load_homography(o.h_gt);

  std::string csv = H ? "a_id,b_id,ax,ay,bx,by,sim,err\n"
                      : "a_id,b_id,ax,ay,bx,by,sim\n";
  char line[256];
  for (const auto& m : matches) {
    const size_t i = size_t(m.a), j = size_t(m.b);
    if (H) {
      double px, py;
      project(*H, A.x[i], A.y[i], px, py);
      const double err = std::hypot(px - B.x[j], py - B.y[j]);
      std::snprintf(line, sizeof line, "%d,%d,%g,%g,%g,%g,%.6f,%.4f\n",
                    A.keypoint_id[i], B.keypoint_id[j], A.x[i], A.y[i], B.x[j],
                    B.y[j], m.sim, err);
    } else {
      std::snprintf(line, sizeof line, "%d,%d,%g,%g,%g,%g,%.6f\n",
                    A.keypoint_id[i], B.keypoint_id[j], A.x[i], A.y[i], B.x[j],
                    B.y[j], m.sim);
    }
    csv += line;
  }
  write_text(o.out, csv);

  json j;
  j["a_count"] = A.count();
  j["b_count"] = B.count();
  j["dim"] = A.dim;
  j["matches"] = matches.size();
  if (H) {
    const auto th = parse_double_list(o.thresholds, "threshold");
    MmaResult r = mma(matches, A, B, *H, th);
    j["thresholds"] = th;
    j["correct"] = r.correct;
    j["mma"] = r.mma;
    if (o.width > 0 && o.height > 0) {
      std::vector<PointPair> pts;
      for (const auto& m : matches)
        pts.push_back({A.x[size_t(m.a)], A.y[size_t(m.a)], B.x[size_t(m.b)],
                       B.y[size_t(m.b)]});
      HEstimation he = hestimation(pts, *H, o.width, o.height, o.hest_eps);
      j["hest"] = {{"pass", he.pass},
                   {"corner_error", he.corner_error},
                   {"inliers", he.inliers}};
    }
  }
  write_text(o.out + ".json", j.dump(2) + "\n");
  std::printf("matches=%zu\n", matches.size());
  return 0;
}

// --- bench-roto --------------------------------------------------------------

struct BenchOpts {
  std::string model, images, protocol = "gt", method = "align", out;
  std::string angles, thresholds = "3,5,10";
  bool gt_delta = false, no_hest = false;
  double candidates = 1.0;
  int candidate_k = 1;
  int keypoints = 128;
  int ransac_iters = 1000;
};

int cmd_bench(const BenchOpts& o) {
  LoadedBackbone lb = load_backbone(o.model);
  auto images = load_corpus(o.images);
  const std::vector<double> angles =
      o.angles.empty() ? roto_angles() : parse_double_list(o.angles, "angle");

  BenchConfig bc;
  if (o.protocol == "gt") bc.protocol = KeypointProtocol::gt;
  else if (o.protocol == "pred") bc.protocol = KeypointProtocol::pred;
  else throw ConfigError("protocol must be gt or pred: " + o.protocol);
  bc.method = desc_method_from_string(o.method);
  bc.gt_delta = o.gt_delta;
  bc.candidate_ratio = o.candidates;
  bc.candidate_k = o.candidate_k;
  bc.keypoints = o.keypoints;
  bc.thresholds = parse_double_list(o.thresholds, "threshold");
  bc.run_hest = !o.no_hest;
  bc.ransac.iterations = o.ransac_iters;

  auto bench = build_roto_benchmark(images, angles);
  BenchReport rep = run_benchmark(lb.model, images, bench, bc);

  fs::create_directories(o.out);
  write_bench_csv(o.out + "/roto.csv", rep);

  json j;
  j["images"] = images.size();
  j["pairs"] = rep.rows.size();
  j["angles"] = angles;
  j["protocol"] = o.protocol;
  j["method"] = o.method;
  j["gt_delta"] = o.gt_delta;
  j["thresholds"] = rep.thresholds;
  j["mma_mean"] = rep.mma_mean;
  j["mma_pooled"] = rep.mma_pooled;
  j["total_predicted"] = rep.total_predicted;
  j["hest_rate"] = rep.hest_rate;
  j["mean_inliers"] = rep.mean_inliers;
  json curves;
  for (size_t t = 0; t < rep.thresholds.size(); ++t) {
    json c;
    for (const auto& [angle, v] : rep.angle_curve(t))
      c[std::to_string(int(angle))] = v;
    curves[std::to_string(rep.thresholds[t])] = c;
  }
  j["per_angle_mma"] = curves;
  write_text(o.out + "/summary.json", j.dump(2) + "\n");

  std::printf("pairs=%zu", rep.rows.size());
  for (size_t t = 0; t < rep.thresholds.size(); ++t)
    std::printf(" mma@%g=%.4f", rep.thresholds[t], rep.mma_mean[t]);
  std::printf(" hest=%.4f\n", rep.hest_rate);
  return 0;
}

// --- check-equivariance ------------------------------------------------------

struct EquivOpts {
  std::string config;
  int64_t seed = 5;
  int inputs = 10;
  int size = 64;
  double tol = 0;  // 0 selects the per-|G| default
};

ScalarImage rot_image(const ScalarImage& img, int q) {
  GroupTensor t(1, 1, img.H, img.W);
  t.data = img.data;
  GroupTensor r = rotate_spatial_quarter(t, q);
  ScalarImage out(r.H, r.W);
  out.data = r.data;
  return out;
}

int cmd_check_equivariance(const EquivOpts& o) {
  TrainConfig cfg = load_train_config(o.config);
  const int N = cfg.backbone.group_order;
  if (N % 4 != 0)
    throw ConfigError("quarter-turn check needs group_order divisible by 4");
  const double tol = o.tol > 0 ? o.tol : (N == 4 ? 1e-4 : 1e-3);

  eq::Backbone<float> model(cfg.backbone, uint64_t(o.seed));
  double worst = 0;
  for (int i = 0; i < o.inputs; ++i) {
    Rng rng(mix_seed(uint64_t(o.seed), 0xEC, uint64_t(i)));
    ScalarImage img(o.size, o.size);
    for (float& v : img.data) v = float(rng.uniform());
    GroupTensor F = model.features(img);
    for (int q = 1; q <= 3; ++q) {
      GroupTensor Fr = model.features(rot_image(img, q));
      GroupTensor expected = rotate_spatial_quarter(cyclic_shift(F, q * N / 4), q);
      for (size_t k = 0; k < Fr.data.size(); ++k)
        worst = std::max(worst, double(std::abs(Fr.data[k] - expected.data[k])));
    }
  }
  std::printf("max equivariance error: %.3e (tol %.1e, |G|=%d, %d inputs)\n", worst,
              tol, N, o.inputs);
  if (worst > tol) {
    std::fprintf(stderr, "equivariance tolerance exceeded\n");
    return kExitTolerance;
  }
  return 0;
}

// --- check-grad --------------------------------------------------------------

struct GradOpts {
  std::string config;
  int64_t seed = 3;
  int size = 16;
  double tol = 1e-3;
  bool corrupt = false;
};

int cmd_check_grad(const GradOpts& o) {
  TrainConfig cfg = load_train_config(o.config);
  eq::Backbone<double> model(cfg.backbone, uint64_t(o.seed));

  TrainingPair pair;
  pair.src = tex::make_texture(1, o.size, o.size, uint64_t(o.seed) + 11);
  pair.H = rotation_about_center(90.0, o.size, o.size);
  pair.tgt = warp_image(pair.src, pair.H).img;
  pair.theta_gt = 90.0;
  const double lo = 4.5, hi = o.size - 5.5;
  pair.kp_src = {{lo, lo, 0}, {hi, lo, 0}, {lo, hi, 0}, {hi, hi, 0}};
  for (const auto& kp : pair.kp_src) pair.kp_tgt.push_back(project(pair.H, kp));

  auto to_buf = [](const ScalarImage& img) {
    ad::Buf<double> b({img.H, img.W});
    for (size_t i = 0; i < b.size(); ++i) b.v[i] = double(img.data[i]);
    return b;
  };
  auto build = [&](ad::Tape<double>& tape) {
    auto bd = model.bind(tape, true);
    auto g = detail::build_pair_graph<double>(tape, model, bd, pair, cfg.loss,
                                              tape.constant(to_buf(pair.src)),
                                              tape.constant(to_buf(pair.tgt)));
    return tape.add(tape.scale(g.l_ori, cfg.loss.alpha), g.l_desc);
  };

  auto report = ad::check_gradients(build, model.params(), 1e-5, o.tol, 64,
                                    o.corrupt ? 1.0 : 0.0);
  for (const auto& e : report.entries)
    std::printf("%-12s max rel err %.3e over %zu entries\n", e.name.c_str(),
                e.max_rel_err, e.checked);
  std::printf("max relative error: %.3e (tol %.1e)\n", report.max_rel_err, o.tol);
  if (!report.passed(o.tol)) {
    std::fprintf(stderr, "gradient tolerance exceeded\n");
    return kExitTolerance;
  }
  return 0;
}

// --- info --------------------------------------------------------------------

int cmd_info(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  const std::string m(magic, size_t(std::max<std::streamsize>(is.gcount(), 0)));
  is.close();

  if (m == "REQ1") {
    Checkpoint ck = load_checkpoint(path);
    std::printf("checkpoint (%zu parameters)\n", ck.params.size());
    for (const auto& [k, v] : ck.config)
      std::printf("  %s=%s\n", k.c_str(), v.c_str());
    size_t total = 0;
    for (const auto& [name, t] : ck.params) {
      std::printf("  %-16s %d x %d x %d x %d\n", name.c_str(), t.C, t.G, t.H, t.W);
      total += t.data.size();
    }
    std::printf("  total values: %zu\n", total);
    return 0;
  }
  if (m == "DSC1") {
    auto ds = load_descriptors(path);
    std::printf("descriptors: count=%zu dim=%zu\n", ds.size(),
                ds.empty() ? 0 : ds[0].d.size());
    return 0;
  }
  if (m == "GT01") {
    std::ifstream ts(path, std::ios::binary);
    GroupTensor t = load_tensor(ts);
    std::printf("tensor: %d x %d x %d x %d\n", t.C, t.G, t.H, t.W);
    return 0;
  }
  if (m.size() >= 2 && (m.substr(0, 2) == "P5" || m.substr(0, 2) == "P6")) {
    ScalarImage img = read_image(path);
    std::printf("image: %d x %d (%s)\n", img.W, img.H,
                m.substr(0, 2) == "P5" ? "gray" : "rgb, converted to gray");
    return 0;
  }
  try {
    Homography H = load_homography(path);
    std::printf("homography:\n");
    for (int r = 0; r < 3; ++r)
      std::printf("  %12.6f %12.6f %12.6f\n", H.h[size_t(3 * r)],
                  H.h[size_t(3 * r + 1)], H.h[size_t(3 * r + 2)]);
    return 0;
  } catch (const Error&) {
  }
  try {
    ConfigMap cfg = load_config(path);
    std::printf("config (%zu keys)\n", cfg.size());
    for (const auto& [k, v] : cfg) std::printf("  %s=%s\n", k.c_str(), v.c_str());
    return 0;
  } catch (const Error&) {
  }
  throw IoError("unrecognized file format: " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rotation-equivariant local features"};
  app.require_subcommand(1);

  int threads = 1;
  app.add_option("--threads", threads, "worker threads (1 forces determinism)")
      ->envname("REQ_THREADS")
      ->check(CLI::PositiveNumber);

  TrainOpts to;
  auto* train_cmd = app.add_subcommand("train", "self-supervised training");
  train_cmd->add_option("--corpus", to.corpus, "directory of .pgm/.ppm images")
      ->required();
  train_cmd->add_option("--config", to.config, "key=value training config")
      ->required();
  train_cmd->add_option("--out", to.out, "checkpoint path")->required();
  train_cmd->add_option("--seed", to.seed, "override the config seed");
  train_cmd->add_flag("--resume", to.resume, "continue from --out");

  ExtractOpts eo;
  auto* extract_cmd = app.add_subcommand("extract", "descriptor extraction");
  extract_cmd->add_option("--model", eo.model, "checkpoint")->required();
  extract_cmd->add_option("--image", eo.image, "PGM/PPM image")->required();
  extract_cmd->add_option("--keypoints", eo.keypoints,
                          "'harris' or a text file of x y lines");
  extract_cmd->add_option("--num-keypoints", eo.num_keypoints, "Harris budget");
  extract_cmd->add_option("--method", eo.method, "align|avg|max|none");
  extract_cmd->add_option("--candidates", eo.candidates,
                          "candidate ratio (align only)");
  extract_cmd->add_option("--candidate-k", eo.candidate_k, "max candidates");
  extract_cmd->add_option("--delta", eo.delta, "fixed alignment shift override");
  extract_cmd->add_option("--out", eo.out, "descriptor file")->required();

  MatchOpts mo;
  auto* match_cmd = app.add_subcommand("match", "mutual-NN matching + metrics");
  match_cmd->add_option("--a", mo.a, "descriptor file A")->required();
  match_cmd->add_option("--b", mo.b, "descriptor file B")->required();
  match_cmd->add_option("--h-gt", mo.h_gt, "ground-truth homography file");
  match_cmd->add_option("--thresholds", mo.thresholds, "pixel thresholds CSV");
  match_cmd->add_option("--width", mo.width, "image width (enables HEstimation)");
  match_cmd->add_option("--height", mo.height, "image height");
  match_cmd->add_option("--hest-eps", mo.hest_eps, "corner error threshold");
  match_cmd->add_option("--out", mo.out, "CSV output path")->required();

  BenchOpts bo;
  auto* bench_cmd = app.add_subcommand("bench-roto", "rotation benchmark");
  bench_cmd->add_option("--model", bo.model, "checkpoint")->required();
  bench_cmd->add_option("--images", bo.images, "directory of images")->required();
  bench_cmd->add_option("--protocol", bo.protocol, "gt|pred keypoints");
  bench_cmd->add_option("--method", bo.method, "align|avg|max|none");
  bench_cmd->add_flag("--gt-delta", bo.gt_delta, "align by the GT shift");
  bench_cmd->add_option("--candidates", bo.candidates, "candidate ratio");
  bench_cmd->add_option("--candidate-k", bo.candidate_k, "max candidates");
  bench_cmd->add_option("--keypoints", bo.keypoints, "Harris budget per image");
  bench_cmd->add_option("--angles", bo.angles, "angle CSV (default 0..350:10)");
  bench_cmd->add_option("--thresholds", bo.thresholds, "pixel thresholds CSV");
  bench_cmd->add_flag("--no-hest", bo.no_hest, "skip RANSAC HEstimation");
  bench_cmd->add_option("--ransac-iters", bo.ransac_iters, "RANSAC iterations");
  bench_cmd->add_option("--out", bo.out, "output directory")->required();

  EquivOpts qo;
  auto* equiv_cmd =
      app.add_subcommand("check-equivariance", "quarter-turn equivariance suite");
  equiv_cmd->add_option("--config", qo.config, "training config")->required();
  equiv_cmd->add_option("--seed", qo.seed, "init seed");
  equiv_cmd->add_option("--inputs", qo.inputs, "random input count");
  equiv_cmd->add_option("--size", qo.size, "input extent");
  equiv_cmd->add_option("--tol", qo.tol, "override tolerance");

  GradOpts go;
  auto* grad_cmd =
      app.add_subcommand("check-grad", "finite-difference gradient suite");
  grad_cmd->add_option("--config", go.config, "training config")->required();
  grad_cmd->add_option("--seed", go.seed, "init seed");
  grad_cmd->add_option("--size", go.size, "input extent");
  grad_cmd->add_option("--tol", go.tol, "relative error tolerance");
  grad_cmd->add_flag("--corrupt", go.corrupt,
                     "corrupt one gradient entry (negative control)");

  std::string info_path;
  auto* info_cmd = app.add_subcommand("info", "describe a file");
  info_cmd->add_option("--file", info_path, "path to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (train_cmd->parsed()) return guarded([&] { return cmd_train(to); });
  if (extract_cmd->parsed()) return guarded([&] { return cmd_extract(eo); });
  if (match_cmd->parsed()) return guarded([&] { return cmd_match(mo); });
  if (bench_cmd->parsed()) return guarded([&] { return cmd_bench(bo); });
  if (equiv_cmd->parsed())
    return guarded([&] { return cmd_check_equivariance(qo); });
  if (grad_cmd->parsed()) return guarded([&] { return cmd_check_grad(go); });
  if (info_cmd->parsed()) return guarded([&] { return cmd_info(info_path); });
  return kExitConfig;
}
