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

#include "frustumfit/evalkit.hpp"

#include <algorithm>
#include <numeric>

#include "frustumfit/geometry.hpp"

namespace frustumfit::evalkit {

namespace {

double det_iou(const Box3& a, const Box3& b, IouMode mode) {
  return mode == IouMode::kBev ? iou_bev(a, b) : iou_3d(a, b);
}

std::vector<int> rank_by_score(const std::vector<Detection>& dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets[a].score > dets[b].score;
  });
  return order;
}

}  // namespace

Difficulty assign_difficulty(const kitti::LabelRecord& rec) {
  const double height = rec.box2.height();
  if (height >= 40.0 && rec.occlusion <= 0 && rec.truncation <= 0.15)
    return Difficulty::kEasy;
  if (height >= 25.0 && rec.occlusion <= 1 && rec.truncation <= 0.30)
    return Difficulty::kModerate;
  if (height >= 25.0 && rec.occlusion <= 2 && rec.truncation <= 0.50)
    return Difficulty::kHard;
  return Difficulty::kIgnored;
}

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<GroundTruthBox>& gts,
                             const EvalConfig& cfg) {
  MatchResult result;
  result.flags.assign(dets.size(), kFalsePositive);
  result.matched_gt.assign(dets.size(), -1);
  std::vector<uint8_t> claimed(gts.size(), 0);
  for (const GroundTruthBox& g : gts) result.valid_gt += g.ignored ? 0 : 1;

  for (int di : rank_by_score(dets)) {
    const Box3& box = dets[di].box;
    int best_valid = -1, best_ignored = -1;
    double best_valid_iou = 0.0, best_ignored_iou = 0.0;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (claimed[gi]) continue;
      const double iou = det_iou(box, gts[gi].box, cfg.mode);
      if (iou < cfg.iou_threshold) continue;
      if (!gts[gi].ignored && iou > best_valid_iou) {
        best_valid_iou = iou;
        best_valid = static_cast<int>(gi);
      } else if (gts[gi].ignored && iou > best_ignored_iou) {
        best_ignored_iou = iou;
        best_ignored = static_cast<int>(gi);
      }
    }
    if (best_valid >= 0) {
      claimed[best_valid] = 1;
      result.flags[di] = kTruePositive;
      result.matched_gt[di] = best_valid;
    } else if (best_ignored >= 0) {
      claimed[best_ignored] = 1;
      result.flags[di] = kNeither;
      result.matched_gt[di] = best_ignored;
    }
  }

  for (size_t gi = 0; gi < gts.size(); ++gi)
    if (!gts[gi].ignored && !claimed[gi]) ++result.false_negatives;
  return result;
}

double average_precision(const std::vector<SceneDetections>& scenes,
                         const EvalConfig& cfg, std::vector<PrPoint>* curve) {
  struct Entry {
    double score;
    uint8_t flag;
  };
  std::vector<Entry> pooled;
  long total_gt = 0;
  for (const SceneDetections& scene : scenes) {
    const MatchResult m = match_detections(scene.dets, scene.gts, cfg);
    total_gt += m.valid_gt;
    for (size_t i = 0; i < scene.dets.size(); ++i)
      pooled.push_back({scene.dets[i].score, m.flags[i]});
  }
  if (total_gt == 0)
    throw NoGroundTruth("average_precision: no valid ground truth");

  // Stable by (scene, input index) under equal scores.
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const Entry& a, const Entry& b) {
                     return a.score > b.score;
                   });

  std::vector<PrPoint> pr;
  long tp = 0, fp = 0;
  for (const Entry& e : pooled) {
    if (e.flag == kNeither) continue;
    if (e.flag == kTruePositive)
      ++tp;
    else
      ++fp;
    pr.push_back({double(tp) / double(total_gt), double(tp) / double(tp + fp),
                  e.score});
  }
  if (curve) *curve = pr;

  const int n = cfg.interp_points;
  double ap = 0.0;
  for (int k = 0; k < n; ++k) {
    const double anchor = n == 1 ? 0.0 : double(k) / double(n - 1);
    double best = 0.0;
    for (const PrPoint& p : pr)
      if (p.recall >= anchor) best = std::max(best, p.precision);
    ap += best;
  }
  return ap / double(n);
}

}  // namespace frustumfit::evalkit
