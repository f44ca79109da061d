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

#ifndef FRUSTUMFIT_PIPELINE_HPP
#define FRUSTUMFIT_PIPELINE_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "frustumfit/car_models.hpp"
#include "frustumfit/evalkit.hpp"
#include "frustumfit/kitti_io.hpp"
#include "frustumfit/priors.hpp"
#include "frustumfit/proposals.hpp"
#include "frustumfit/refine_net.hpp"
#include "frustumfit/synth.hpp"
#include "frustumfit/types.hpp"

namespace frustumfit::pipeline {

struct ConfigError : Error {
  using Error::Error;
};

enum class StopAfter : uint8_t { kFit = 0, kStage1 = 1, kFull = 2 };

// Everything the batch commands need; populated from a key-value config file
// with CLI flags overriding file values.
struct PipelineConfig {
  // Paths.
  std::string scans_dir, calib_dir, labels_dir, detections_dir;
  std::string output_dir, results_dir;
  std::string score_maps, stage1_params, stage2_params;
  std::string train_log, pr_curve;

  // Fit.
  uint64_t seed = 0;
  int workers = 1;
  bool oracle_2d = false;
  // Log-normal sigma on the oracle dimension estimates; 0 keeps the exact
  // ground-truth dims. Real 2D detectors regress dims with error, so the
  // synthetic benchmark exposes the same knob.
  double oracle_dim_noise = 0.0;
  StopAfter stop_after = StopAfter::kFull;
  int image_width = synth::kImageWidth;
  int image_height = synth::kImageHeight;
  proposals::ProposalConfig proposal;
  models::ScoringConfig scoring;

  // Score map building.
  double map_alpha = 0.1;
  int map_samples = 24;
  double map_density = 600.0;

  // Dimension priors.
  priors::MeanDims mean_dims = priors::default_mean_dims();
  double lambda_d = 1.0;

  // Evaluation.
  std::vector<double> eval_thresholds = {0.5, 0.7};
  std::vector<evalkit::IouMode> eval_modes = {evalkit::IouMode::kBev,
                                              evalkit::IouMode::kBox3d};
  int eval_interp = 11;

  // Refinement network and training.
  refine::NetConfig net;
  refine::TrainConfig train;
  int jitter_per_gt = 8;
  int train_scenes = 0;  // 0 = use all
};

// Throws ConfigError on unknown keys or malformed values.
PipelineConfig load_config(const std::string& path);
void apply_override(PipelineConfig& cfg, const std::string& key,
                    const std::string& value);

// Sorted scene ids (file stems) found under scans_dir.
std::vector<std::string> list_scene_ids(const std::string& scans_dir);

// Oracle 2D inputs: ground-truth boxes projected into the image, the seam
// that isolates the 3D pipeline from 2D detector quality. dim_noise_sigma
// applies seeded log-normal noise to the dimension estimates (0 = exact).
std::vector<kitti::Detection2DInput> oracle_detections(
    const std::vector<kitti::LabelRecord>& labels, const Calibration& calib,
    int image_width, int image_height, double dim_noise_sigma = 0.0,
    uint64_t seed = 0);

struct FitSummary {
  int scenes = 0;
  int failed = 0;
  int detections = 0;
};

// frustum -> proposals -> model fit -> optional stage 1 -> optional stage 2
// per scene; detection files land in output_dir. Failing scenes are reported
// and skipped, never fatal.
FitSummary run_fit(const PipelineConfig& cfg, std::ostream& log);

struct EvalCell {
  evalkit::IouMode mode;
  double threshold = 0.0;
  evalkit::Difficulty difficulty;
  double ap = 0.0;
};

struct EvalReport {
  std::vector<EvalCell> cells;
  int scenes = 0;
  long ground_truths = 0;
};

EvalReport run_eval(const PipelineConfig& cfg, std::ostream& log);
void write_report(const EvalReport& report, const std::string& txt_path,
                  const std::string& kv_path);

void run_build_maps(const PipelineConfig& cfg, const std::string& out_path);

// Builds the stage training set (pipeline candidates + jittered ground truth)
// and trains the requested stage; params land at the configured path.
void run_train(const PipelineConfig& cfg, int stage, std::ostream& log);

struct SynthSpec {
  synth::SceneSetParams set;
  std::vector<synth::SceneObject> explicit_cars;  // when set: one fixed scene
};

SynthSpec load_synth_spec(const std::string& path);
void run_synth(const SynthSpec& spec, const std::string& out_dir,
               std::ostream& log);

}  // namespace frustumfit::pipeline

#endif  // FRUSTUMFIT_PIPELINE_HPP
