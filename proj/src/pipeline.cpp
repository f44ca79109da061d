/*
 * Copyright 2025 The FrustumFit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "frustumfit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "frustumfit/random.hpp"

namespace fs = std::filesystem;

namespace frustumfit::pipeline {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const std::string& key) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ConfigError("bad value for " + key + ": '" + s + "'");
  return v;
}

long to_long(const std::string& s, const std::string& key) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw ConfigError("bad value for " + key + ": '" + s + "'");
  return v;
}

bool to_bool(const std::string& s, const std::string& key) {
  if (s == "1" || s == "true" || s == "on") return true;
  if (s == "0" || s == "false" || s == "off") return false;
  throw ConfigError("bad boolean for " + key + ": '" + s + "'");
}

uint64_t scene_stream(const std::string& id, size_t fallback) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(id.c_str(), &end, 10);
  return end != id.c_str() ? v : fallback;
}

Box2 clip_box2(const Box2& b, int width, int height) {
  return {std::max(b.u_min, 0.0), std::max(b.v_min, 0.0),
          std::min(b.u_max, double(width - 1)),
          std::min(b.v_max, double(height - 1))};
}

struct FitContext {
  const PipelineConfig* cfg = nullptr;
  std::array<models::ScoreMap, kNumCategories> maps;
  std::optional<refine::RefineNet> net1, net2;
};

struct SceneOutcome {
  std::string id;
  std::vector<Detection> dets;
  Calibration calib;
  std::string error;
};

// One object through the pipeline; empty when no box can be fit.
std::optional<Detection> fit_object(const FitContext& ctx,
                                    const PointCloud& cloud,
                                    const Calibration& calib,
                                    const kitti::Detection2DInput& det2d,
                                    uint64_t stream) {
  const PipelineConfig& cfg = *ctx.cfg;
  const Vec3 origin = {0.0, 0.0, 0.0};

  const PointCloud subset = frustum_select(cloud, calib, det2d.box2);
  if (subset.size() < 2) return std::nullopt;

  proposals::ProposalConfig pcfg = cfg.proposal;
  pcfg.seed = stream;
  const std::vector<Box3> props =
      proposals::generate_proposals(subset, det2d.dims, origin, pcfg);
  if (props.empty()) return std::nullopt;

  Detection det =
      models::fit_best_box(subset, props, ctx.maps, origin, cfg.scoring);

  if (cfg.stop_after == StopAfter::kFit || !ctx.net1) return det;

  // Stage 1: regress a corrected box from the context voxels.
  {
    const refine::ContextBox cbox = refine::expand_context(det.box);
    const refine::ContextVoxels vox = refine::voxelize_context(cloud, cbox);
    const refine::RefineNet::Output out = ctx.net1->forward(vox);
    Box3 refined = det.box;
    try {
      refined = refine::decode_box(ctx.net1->anchor, cbox, out.target);
    } catch (const refine::NoValidSolution&) {
      // Degenerate regression output: keep the model-fit box.
    }
    det.box = refined;
    det.score = refine::softmax2(out.logits)[1];
    det.stage = DetectionStage::kStage1;
  }

  if (cfg.stop_after == StopAfter::kStage1 || !ctx.net2) return det;

  // Stage 2 only reshuffles the confidence; the box is untouched.
  {
    const refine::ContextBox cbox = refine::expand_context(det.box);
    const refine::ContextVoxels vox = refine::voxelize_context(cloud, cbox);
    const refine::RefineNet::Output out = ctx.net2->forward(vox);
    det.score = refine::softmax2(out.logits)[1];
    det.stage = DetectionStage::kStage2;
  }
  return det;
}

SceneOutcome process_scene(const FitContext& ctx, const std::string& id,
                           size_t index) {
  const PipelineConfig& cfg = *ctx.cfg;
  SceneOutcome outcome;
  outcome.id = id;
  try {
    const PointCloud cloud =
        kitti::load_velodyne(cfg.scans_dir + "/" + id + ".bin");
    outcome.calib = kitti::load_calib(cfg.calib_dir + "/" + id + ".txt");

    const uint64_t scene_seed =
        seed_mix(cfg.seed, scene_stream(id, index));
    std::vector<kitti::Detection2DInput> dets2d;
    if (cfg.oracle_2d) {
      const auto labels =
          kitti::load_labels(cfg.labels_dir + "/" + id + ".txt");
      dets2d = oracle_detections(labels, outcome.calib, cfg.image_width,
                                 cfg.image_height, cfg.oracle_dim_noise,
                                 seed_mix(scene_seed, 0xD135));
    } else {
      dets2d =
          kitti::load_detections(cfg.detections_dir + "/" + id + ".txt");
    }

    for (size_t k = 0; k < dets2d.size(); ++k) {
      const auto det = fit_object(ctx, cloud, outcome.calib, dets2d[k],
                                  seed_mix(scene_seed, k));
      if (det) outcome.dets.push_back(*det);
    }
  } catch (const Error& e) {
    outcome.error = e.what();
  }
  return outcome;
}

std::vector<Box3> car_boxes(const std::vector<kitti::LabelRecord>& labels,
                            const Calibration& calib) {
  std::vector<Box3> out;
  for (const auto& rec : labels)
    if (rec.type == "Car") out.push_back(kitti::label_to_box3(rec, calib));
  return out;
}

FitContext make_fit_context(const PipelineConfig& cfg, bool want_nets) {
  FitContext ctx;
  ctx.cfg = &cfg;
  if (cfg.score_maps.empty())
    throw ConfigError("score_maps path is required");
  ctx.maps = models::load_score_maps(cfg.score_maps);
  if (want_nets && cfg.stop_after != StopAfter::kFit) {
    if (cfg.stage1_params.empty())
      throw ConfigError("stage1_params required unless stop_after=fit");
    ctx.net1.emplace(refine::load_net(cfg.stage1_params));
    if (cfg.stop_after == StopAfter::kFull) {
      if (cfg.stage2_params.empty())
        throw ConfigError("stage2_params required unless stop_after<=stage1");
      ctx.net2.emplace(refine::load_net(cfg.stage2_params));
    }
  }
  return ctx;
}

}  // namespace

void apply_override(PipelineConfig& cfg, const std::string& key,
                    const std::string& value) {
  if (key == "scans_dir") cfg.scans_dir = value;
  else if (key == "calib_dir") cfg.calib_dir = value;
  else if (key == "labels_dir") cfg.labels_dir = value;
  else if (key == "detections_dir") cfg.detections_dir = value;
  else if (key == "output_dir") cfg.output_dir = value;
  else if (key == "results_dir") cfg.results_dir = value;
  else if (key == "score_maps") cfg.score_maps = value;
  else if (key == "stage1_params") cfg.stage1_params = value;
  else if (key == "stage2_params") cfg.stage2_params = value;
  else if (key == "train_log") cfg.train_log = value;
  else if (key == "pr_curve") cfg.pr_curve = value;
  else if (key == "seed") cfg.seed = uint64_t(to_long(value, key));
  else if (key == "workers") cfg.workers = int(to_long(value, key));
  else if (key == "oracle_2d") cfg.oracle_2d = to_bool(value, key);
  else if (key == "oracle_dim_noise")
    cfg.oracle_dim_noise = to_double(value, key);
  else if (key == "stop_after") {
    if (value == "fit") cfg.stop_after = StopAfter::kFit;
    else if (value == "stage1") cfg.stop_after = StopAfter::kStage1;
    else if (value == "full") cfg.stop_after = StopAfter::kFull;
    else throw ConfigError("stop_after must be fit, stage1 or full");
  } else if (key == "image_width") cfg.image_width = int(to_long(value, key));
  else if (key == "image_height") cfg.image_height = int(to_long(value, key));
  else if (key == "proposal_iterations")
    cfg.proposal.iterations = int(to_long(value, key));
  else if (key == "inlier_threshold")
    cfg.proposal.inlier_threshold = to_double(value, key);
  else if (key == "max_seed_points")
    cfg.proposal.max_seed_points = int(to_long(value, key));
  else if (key == "seed_cube_factor")
    cfg.proposal.seed_cube_factor = to_double(value, key);
  else if (key == "ground_expand_factor")
    cfg.proposal.ground_expand_factor = to_double(value, key);
  else if (key == "score_beta") cfg.scoring.beta = to_double(value, key);
  else if (key == "score_per_point")
    cfg.scoring.per_point = to_bool(value, key);
  else if (key == "map_alpha") cfg.map_alpha = to_double(value, key);
  else if (key == "map_samples") cfg.map_samples = int(to_long(value, key));
  else if (key == "map_density") cfg.map_density = to_double(value, key);
  else if (key == "mean_h") cfg.mean_dims.h = to_double(value, key);
  else if (key == "mean_l") cfg.mean_dims.l = to_double(value, key);
  else if (key == "mean_w") cfg.mean_dims.w = to_double(value, key);
  else if (key == "lambda_d") cfg.lambda_d = to_double(value, key);
  else if (key == "eval_thresholds") {
    cfg.eval_thresholds.clear();
    for (const std::string& tok : split(value, ','))
      cfg.eval_thresholds.push_back(to_double(tok, key));
  } else if (key == "eval_modes") {
    cfg.eval_modes.clear();
    for (const std::string& tok : split(value, ',')) {
      if (tok == "bev") cfg.eval_modes.push_back(evalkit::IouMode::kBev);
      else if (tok == "3d") cfg.eval_modes.push_back(evalkit::IouMode::kBox3d);
      else throw ConfigError("eval_modes entries must be bev or 3d");
    }
  } else if (key == "eval_interp") {
    cfg.eval_interp = int(to_long(value, key));
    if (cfg.eval_interp != 11 && cfg.eval_interp != 40)
      throw ConfigError("eval_interp must be 11 or 40");
  } else if (key == "conv_channels") {
    cfg.net.conv_channels.clear();
    for (const std::string& tok : split(value, ','))
      cfg.net.conv_channels.push_back(int(to_long(tok, key)));
  } else if (key == "fc_dim") cfg.net.fc_dim = int(to_long(value, key));
  else if (key == "train_batch")
    cfg.train.batch_size = int(to_long(value, key));
  else if (key == "train_iterations")
    cfg.train.iterations = int(to_long(value, key));
  else if (key == "train_lr") cfg.train.learning_rate = to_double(value, key);
  else if (key == "train_momentum")
    cfg.train.momentum = to_double(value, key);
  else if (key == "train_reg_weight")
    cfg.train.reg_weight = to_double(value, key);
  else if (key == "train_pos_fraction")
    cfg.train.positive_fraction = to_double(value, key);
  else if (key == "jitter_per_gt") cfg.jitter_per_gt = int(to_long(value, key));
  else if (key == "train_scenes") cfg.train_scenes = int(to_long(value, key));
  else throw ConfigError("unknown config key: " + key);
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  PipelineConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    std::string value;
    std::getline(ss, value);
    const size_t start = value.find_first_not_of(" \t");
    value = start == std::string::npos ? "" : value.substr(start);
    const size_t last = value.find_last_not_of(" \t\r");
    if (last != std::string::npos) value = value.substr(0, last + 1);
    try {
      apply_override(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
  }
  cfg.train.seed = cfg.seed;
  return cfg;
}

std::vector<std::string> list_scene_ids(const std::string& scans_dir) {
  std::vector<std::string> ids;
  if (!fs::is_directory(scans_dir))
    throw kitti::IoError("not a directory: " + scans_dir);
  for (const auto& entry : fs::directory_iterator(scans_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".bin")
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<kitti::Detection2DInput> oracle_detections(
    const std::vector<kitti::LabelRecord>& labels, const Calibration& calib,
    int image_width, int image_height, double dim_noise_sigma,
    uint64_t seed) {
  std::vector<kitti::Detection2DInput> out;
  Rng rng(seed);
  for (const auto& rec : labels) {
    if (rec.type != "Car") continue;
    const Box3 box = kitti::label_to_box3(rec, calib);
    const kitti::LabelRecord projected = kitti::box3_to_label(box, calib);
    const Box2 clipped =
        clip_box2(projected.box2, image_width, image_height);
    if (!clipped.valid()) continue;
    Dims dims = {rec.h, rec.l, rec.w};
    if (dim_noise_sigma > 0.0) {
      dims.h *= std::exp(dim_noise_sigma * rng.normal());
      dims.l *= std::exp(dim_noise_sigma * rng.normal());
      dims.w *= std::exp(dim_noise_sigma * rng.normal());
    }
    out.push_back({clipped, 1.0, dims});
  }
  return out;
}

FitSummary run_fit(const PipelineConfig& cfg, std::ostream& log) {
  const FitContext ctx = make_fit_context(cfg, /*want_nets=*/true);
  if (cfg.output_dir.empty()) throw ConfigError("output_dir is required");
  fs::create_directories(cfg.output_dir);

  const std::vector<std::string> ids = list_scene_ids(cfg.scans_dir);
  std::vector<SceneOutcome> outcomes(ids.size());

  const int workers = std::max(1, cfg.workers);
  std::atomic<size_t> cursor{0};
  auto body = [&]() {
    while (true) {
      const size_t i = cursor.fetch_add(1);
      if (i >= ids.size()) break;
      outcomes[i] = process_scene(ctx, ids[i], i);
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }

  FitSummary summary;
  summary.scenes = static_cast<int>(ids.size());
  for (const SceneOutcome& o : outcomes) {
    if (!o.error.empty()) {
      ++summary.failed;
      log << "scene " << o.id << " failed: " << o.error << "\n";
      continue;
    }
    kitti::write_detections(cfg.output_dir + "/" + o.id + ".txt", o.dets,
                            o.calib);
    summary.detections += static_cast<int>(o.dets.size());
  }
  log << "fit: " << summary.scenes - summary.failed << "/" << summary.scenes
      << " scenes, " << summary.detections << " detections";
  if (summary.failed > 0) log << ", " << summary.failed << " failed";
  log << "\n";
  return summary;
}

EvalReport run_eval(const PipelineConfig& cfg, std::ostream& log) {
  const std::string results =
      cfg.results_dir.empty() ? cfg.output_dir : cfg.results_dir;
  if (results.empty()) throw ConfigError("results_dir is required");
  if (cfg.labels_dir.empty()) throw ConfigError("labels_dir is required");

  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(cfg.labels_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());

  struct SceneData {
    std::vector<kitti::LabelRecord> labels;
    std::vector<Box3> gt_boxes;
    std::vector<Detection> dets;
  };
  std::vector<SceneData> data;
  long total_gt = 0;
  for (const std::string& id : ids) {
    SceneData sd;
    sd.labels = kitti::load_labels(cfg.labels_dir + "/" + id + ".txt");
    const Calibration calib =
        kitti::load_calib(cfg.calib_dir + "/" + id + ".txt");
    for (const auto& rec : sd.labels)
      sd.gt_boxes.push_back(kitti::label_to_box3(rec, calib));
    const std::string result_path = results + "/" + id + ".txt";
    if (fs::exists(result_path)) {
      for (const auto& rr : kitti::load_results(result_path)) {
        Detection d;
        d.box = kitti::label_to_box3(rr.label, calib);
        d.score = rr.score;
        sd.dets.push_back(d);
      }
    }
    total_gt += static_cast<long>(sd.labels.size());
    data.push_back(std::move(sd));
  }

  EvalReport report;
  report.scenes = static_cast<int>(ids.size());
  report.ground_truths = total_gt;

  std::ofstream curve_out;
  if (!cfg.pr_curve.empty()) {
    curve_out.open(cfg.pr_curve);
    if (!curve_out)
      throw kitti::IoError("cannot open " + cfg.pr_curve + " for writing");
  }

  for (evalkit::IouMode mode : cfg.eval_modes) {
    for (double threshold : cfg.eval_thresholds) {
      for (int d = 0; d < 3; ++d) {
        const auto difficulty = static_cast<evalkit::Difficulty>(d);
        std::vector<evalkit::SceneDetections> scenes;
        for (const SceneData& sd : data) {
          evalkit::SceneDetections s;
          s.dets = sd.dets;
          for (size_t i = 0; i < sd.labels.size(); ++i) {
            const auto rec_diff = evalkit::assign_difficulty(sd.labels[i]);
            const bool ignored =
                sd.labels[i].type != "Car" ||
                rec_diff == evalkit::Difficulty::kIgnored ||
                static_cast<int>(rec_diff) > d;
            s.gts.push_back({sd.gt_boxes[i], ignored});
          }
          scenes.push_back(std::move(s));
        }
        evalkit::EvalConfig ecfg{threshold, mode, cfg.eval_interp};
        std::vector<evalkit::PrPoint> curve;
        const double ap = evalkit::average_precision(
            scenes, ecfg, curve_out.is_open() ? &curve : nullptr);
        report.cells.push_back({mode, threshold, difficulty, ap});
        if (curve_out.is_open()) {
          for (const auto& p : curve)
            curve_out << (mode == evalkit::IouMode::kBev ? "bev" : "3d") << " "
                      << threshold << " " << d << " " << p.recall << " "
                      << p.precision << " " << p.score << "\n";
        }
      }
    }
  }

  const std::string out_base = results;
  write_report(report, out_base + "/report.txt", out_base + "/report.kv");
  for (const EvalCell& c : report.cells) {
    static const char* names[3] = {"easy", "moderate", "hard"};
    log << (c.mode == evalkit::IouMode::kBev ? "bev" : "3d") << " @"
        << c.threshold << " " << names[static_cast<int>(c.difficulty)] << ": "
        << c.ap << "\n";
  }
  return report;
}

void write_report(const EvalReport& report, const std::string& txt_path,
                  const std::string& kv_path) {
  static const char* names[3] = {"easy", "moderate", "hard"};
  char buf[64];

  std::ofstream txt(txt_path);
  if (!txt) throw kitti::IoError("cannot open " + txt_path + " for writing");
  txt << "scenes " << report.scenes << ", ground truths "
      << report.ground_truths << "\n";
  txt << "mode  thresh  easy      moderate  hard\n";
  for (size_t i = 0; i < report.cells.size(); i += 3) {
    const EvalCell& c = report.cells[i];
    std::snprintf(buf, sizeof(buf), "%-5s %-7.2f",
                  c.mode == evalkit::IouMode::kBev ? "bev" : "3d",
                  c.threshold);
    txt << buf;
    for (int d = 0; d < 3; ++d) {
      std::snprintf(buf, sizeof(buf), " %-9.6f", report.cells[i + d].ap);
      txt << buf;
    }
    txt << "\n";
  }

  std::ofstream kv(kv_path);
  if (!kv) throw kitti::IoError("cannot open " + kv_path + " for writing");
  for (const EvalCell& c : report.cells) {
    std::snprintf(buf, sizeof(buf), "ap_%s_%.2f_%s %.6f",
                  c.mode == evalkit::IouMode::kBev ? "bev" : "3d", c.threshold,
                  names[static_cast<int>(c.difficulty)], c.ap);
    kv << buf << "\n";
  }
}

void run_build_maps(const PipelineConfig& cfg, const std::string& out_path) {
  const auto maps = models::build_default_score_maps(
      cfg.map_samples, cfg.map_density, seed_mix(cfg.seed, 0x3A95),
      {cfg.map_alpha});
  models::save_score_maps(out_path, maps);
}

void run_train(const PipelineConfig& cfg, int stage, std::ostream& log) {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  const std::string params_path =
      stage == 1 ? cfg.stage1_params : cfg.stage2_params;
  if (params_path.empty())
    throw ConfigError("stage" + std::to_string(stage) + "_params is required");

  // Candidate generation runs the fit stage; stage 2 additionally refines
  // candidates through the trained stage-1 net.
  PipelineConfig fit_cfg = cfg;
  fit_cfg.stop_after = StopAfter::kFit;
  FitContext ctx = make_fit_context(fit_cfg, /*want_nets=*/false);
  std::optional<refine::RefineNet> net1;
  if (stage == 2) {
    if (cfg.stage1_params.empty())
      throw ConfigError("stage 2 training needs stage1_params");
    net1.emplace(refine::load_net(cfg.stage1_params));
  }

  std::vector<std::string> ids = list_scene_ids(cfg.scans_dir);
  if (cfg.train_scenes > 0 &&
      ids.size() > static_cast<size_t>(cfg.train_scenes))
    ids.resize(cfg.train_scenes);

  const double iou_threshold = stage == 1 ? 0.5 : 0.7;
  const refine::CanonicalAnchor anchor = refine::CanonicalAnchor::standard();
  std::vector<refine::TrainSample> samples;

  for (size_t si = 0; si < ids.size(); ++si) {
    const std::string& id = ids[si];
    const PointCloud cloud =
        kitti::load_velodyne(cfg.scans_dir + "/" + id + ".bin");
    const Calibration calib =
        kitti::load_calib(cfg.calib_dir + "/" + id + ".txt");
    const auto labels = kitti::load_labels(cfg.labels_dir + "/" + id + ".txt");
    const std::vector<Box3> gts = car_boxes(labels, calib);
    if (gts.empty()) continue;

    const uint64_t scene_seed = seed_mix(cfg.seed, 0xDA7A, si);
    std::vector<kitti::Detection2DInput> dets2d;
    if (cfg.oracle_2d || cfg.detections_dir.empty()) {
      dets2d = oracle_detections(labels, calib, cfg.image_width,
                                 cfg.image_height, cfg.oracle_dim_noise,
                                 seed_mix(scene_seed, 0xD135));
    } else {
      dets2d = kitti::load_detections(cfg.detections_dir + "/" + id + ".txt");
    }
    std::vector<Box3> candidates;
    for (size_t k = 0; k < dets2d.size(); ++k) {
      const auto det =
          fit_object(ctx, cloud, calib, dets2d[k], seed_mix(scene_seed, k));
      if (!det) continue;
      candidates.push_back(det->box);
      if (net1) {
        const refine::ContextBox cbox = refine::expand_context(det->box);
        const refine::ContextVoxels vox =
            refine::voxelize_context(cloud, cbox);
        try {
          candidates.push_back(refine::decode_box(
              net1->anchor, cbox, net1->forward(vox).target));
        } catch (const refine::NoValidSolution&) {
        }
      }
    }

    // Jittered ground truth fills out both sides of the labeling threshold:
    // tiny offsets anchor the identity response, medium ones cover typical
    // fit errors, rough ones supply negatives.
    Rng rng(seed_mix(scene_seed, 0x717));
    for (const Box3& gt : gts) {
      for (int j = 0; j < cfg.jitter_per_gt; ++j) {
        Box3 b = gt;
        const int mode = j % 4;
        const double shift = mode == 3 ? 1.8 : (mode == 0 ? 0.12 : 0.45);
        const double twist = mode == 3 ? 0.5 : (mode == 0 ? 0.06 : 0.2);
        const double scale = mode == 0 ? 0.03 : 0.06;
        b.center.x += rng.uniform(-shift, shift);
        b.center.y += rng.uniform(-shift, shift);
        b.center.z += rng.uniform(-0.08, 0.08);
        b.yaw = normalize_yaw(b.yaw + rng.uniform(-twist, twist));
        b.h *= rng.uniform(1.0 - scale, 1.0 + scale);
        b.l *= rng.uniform(1.0 - scale, 1.0 + scale);
        b.w *= rng.uniform(1.0 - scale, 1.0 + scale);
        candidates.push_back(b);
      }
    }

    for (const Box3& cand : candidates) {
      int best_gt = -1;
      const int label = refine::assign_label(cand, gts, iou_threshold,
                                             &best_gt);
      refine::TrainSample sample;
      const refine::ContextBox cbox = refine::expand_context(cand);
      sample.voxels = refine::voxelize_context(cloud, cbox);
      sample.label = label;
      if (stage == 1 && label == 1 && best_gt >= 0) {
        const Box3 gt_aligned =
            refine::align_heading(gts[best_gt], cand.yaw);
        sample.target = refine::encode_targets(anchor, cbox, gt_aligned);
        sample.has_target = true;
      }
      samples.push_back(std::move(sample));
    }
  }

  log << "train stage " << stage << ": " << samples.size() << " samples\n";

  refine::RefineNet net(cfg.net, stage, seed_mix(cfg.seed, 0x11E7, stage));
  net.anchor = anchor;
  refine::TrainConfig tcfg = cfg.train;
  tcfg.seed = seed_mix(cfg.seed, 0x7124, stage);

  std::ofstream train_log;
  std::ostream* log_stream = &log;
  if (!cfg.train_log.empty()) {
    train_log.open(cfg.train_log);
    if (!train_log)
      throw kitti::IoError("cannot open " + cfg.train_log + " for writing");
    log_stream = &train_log;
  }
  refine::train(net, samples, tcfg, log_stream);
  refine::save_net(params_path, net);
  log << "saved " << params_path << "\n";
}

SynthSpec load_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synth spec " + path);
  SynthSpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    auto fail = [&](const std::string& msg) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (key == "car") {
      double cx, cy, cz, h, l, w, yaw;
      std::string category;
      if (!(ss >> cx >> cy >> cz >> h >> l >> w >> yaw >> category))
        fail("car wants: cx cy cz h l w yaw category");
      synth::SceneObject obj;
      obj.box = {{cx, cy, cz}, h, l, w, normalize_yaw(yaw)};
      if (category == "suv") obj.category = CarCategory::kSuv;
      else if (category == "sedan") obj.category = CarCategory::kSedan;
      else if (category == "van") obj.category = CarCategory::kVan;
      else fail("unknown category " + category);
      spec.explicit_cars.push_back(obj);
      continue;
    }
    std::string value;
    if (!(ss >> value)) fail("missing value for " + key);
    if (key == "scenes") spec.set.scenes = int(to_long(value, key));
    else if (key == "seed") spec.set.seed = uint64_t(to_long(value, key));
    else if (key == "cars_min") spec.set.cars_min = int(to_long(value, key));
    else if (key == "cars_max") spec.set.cars_max = int(to_long(value, key));
    else if (key == "x_min") spec.set.x_min = to_double(value, key);
    else if (key == "x_max") spec.set.x_max = to_double(value, key);
    else if (key == "ground_z") spec.set.ground_z = to_double(value, key);
    else if (key == "ground_radius")
      spec.set.ground_radius = to_double(value, key);
    else if (key == "ground_density")
      spec.set.ground_density = to_double(value, key);
    else if (key == "clutter_density")
      spec.set.clutter_density = to_double(value, key);
    else if (key == "surface_density")
      spec.set.surface_density = to_double(value, key);
    else if (key == "walls") spec.set.walls = to_bool(value, key);
    else fail("unknown synth key: " + key);
  }
  if (spec.set.cars_min < 0 || spec.set.cars_max < spec.set.cars_min)
    throw ConfigError(path + ": bad cars_min/cars_max");
  return spec;
}

void run_synth(const SynthSpec& spec, const std::string& out_dir,
               std::ostream& log) {
  fs::create_directories(out_dir + "/velodyne");
  fs::create_directories(out_dir + "/calib");
  fs::create_directories(out_dir + "/label_2");
  fs::create_directories(out_dir + "/detections_2d");

  const Calibration calib = synth::synthetic_calibration();
  const int n_scenes =
      spec.explicit_cars.empty() ? spec.set.scenes : 1;

  for (int i = 0; i < n_scenes; ++i) {
    synth::SceneSpec sspec;
    if (spec.explicit_cars.empty()) {
      sspec = synth::random_scene_spec(spec.set, i);
    } else {
      sspec.cars = spec.explicit_cars;
      sspec.ground_z = spec.set.ground_z;
      sspec.ground_radius = spec.set.ground_radius;
      sspec.ground_density = spec.set.ground_density;
      sspec.clutter_density = spec.set.clutter_density;
      sspec.surface_density = spec.set.surface_density;
      sspec.walls = spec.set.walls;
      sspec.seed = spec.set.seed;
    }
    const synth::Scene scene = synth::make_scene(sspec);

    char id[16];
    std::snprintf(id, sizeof(id), "%06d", i);
    kitti::save_velodyne(out_dir + "/velodyne/" + id + ".bin", scene.cloud);
    kitti::save_calib(out_dir + "/calib/" + id + ".txt", calib);
    kitti::save_labels(out_dir + "/label_2/" + id + ".txt", scene.labels);
    std::vector<kitti::Detection2DInput> dets;
    for (const auto& rec : scene.labels)
      dets.push_back({rec.box2, 1.0, {rec.h, rec.l, rec.w}});
    kitti::save_detections_2d(out_dir + "/detections_2d/" + id + ".txt",
                              dets);
  }
  log << "synth: wrote " << n_scenes << " scene(s) under " << out_dir << "\n";
}

}  // namespace frustumfit::pipeline
