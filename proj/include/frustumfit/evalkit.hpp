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

#ifndef FRUSTUMFIT_EVALKIT_HPP
#define FRUSTUMFIT_EVALKIT_HPP

#include <cstdint>
#include <vector>

#include "frustumfit/kitti_io.hpp"
#include "frustumfit/types.hpp"

namespace frustumfit::evalkit {

struct NoGroundTruth : Error {
  using Error::Error;
};

enum class Difficulty : uint8_t {
  kEasy = 0,
  kModerate = 1,
  kHard = 2,
  kIgnored = 3,
};

// KITTI-standard visibility bucketing: easiest group the record qualifies
// for, from 2D box height, occlusion and truncation.
Difficulty assign_difficulty(const kitti::LabelRecord& rec);

enum class IouMode : uint8_t { kBev = 0, kBox3d = 1 };

struct EvalConfig {
  double iou_threshold = 0.5;
  IouMode mode = IouMode::kBev;
  int interp_points = 11;  // 11 or 40
};

struct GroundTruthBox {
  Box3 box;
  bool ignored = false;  // don't-care: claims are neither TP nor FP
};

enum DetFlag : uint8_t { kFalsePositive = 0, kTruePositive = 1, kNeither = 2 };

struct MatchResult {
  std::vector<uint8_t> flags;   // per detection, DetFlag, input order
  std::vector<int> matched_gt;  // per detection, claimed GT index or -1
  int false_negatives = 0;
  int valid_gt = 0;
};

// Greedy matching in descending score order (stable by input index): each
// detection claims the unclaimed valid ground truth of maximal IoU when that
// IoU reaches the threshold; failing that it may claim an ignored ground
// truth and count as neither.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruthBox>& gts,
                             const EvalConfig& cfg);

struct SceneDetections {
  std::vector<Detection> dets;
  std::vector<GroundTruthBox> gts;
};

struct PrPoint {
  double recall = 0.0, precision = 0.0, score = 0.0;
};

// N-point interpolated AP over the pooled ranking (mean over evenly spaced
// recall anchors of the max precision at recall >= anchor). Score ties break
// by (scene, input index). Throws NoGroundTruth when no valid GT exists.
double average_precision(const std::vector<SceneDetections>& scenes,
                         const EvalConfig& cfg,
                         std::vector<PrPoint>* curve = nullptr);

}  // namespace frustumfit::evalkit

#endif  // FRUSTUMFIT_EVALKIT_HPP
