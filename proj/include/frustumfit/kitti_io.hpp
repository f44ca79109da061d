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

#ifndef FRUSTUMFIT_KITTI_IO_HPP
#define FRUSTUMFIT_KITTI_IO_HPP

#include <string>
#include <vector>

#include "frustumfit/geometry.hpp"
#include "frustumfit/types.hpp"

namespace frustumfit::kitti {

struct IoError : Error {
  using Error::Error;
};
struct TruncatedFile : Error {
  using Error::Error;
};
struct MissingKey : Error {
  using Error::Error;
};
struct MalformedNumber : Error {
  using Error::Error;
};
struct FieldCountMismatch : Error {
  using Error::Error;
};

// One 15-field KITTI label line. Note the struct keeps dims in [h, l, w]
// order while the file layout stores them as h, w, l.
struct LabelRecord {
  std::string type = "Car";
  double truncation = 0.0;
  int occlusion = 0;  // -1..3, KITTI convention
  double alpha = 0.0;
  Box2 box2;
  double h = 0.0, l = 0.0, w = 0.0;
  Vec3 location;  // camera frame, bottom face center
  double rotation_y = 0.0;
};

struct ResultRecord {
  LabelRecord label;
  double score = 0.0;
};

// A 2D detection with the decoded dimension estimate, the pipeline input.
// File layout: `u_min v_min u_max v_max confidence h l w`, one per line.
struct Detection2DInput {
  Box2 box2;
  double confidence = 1.0;
  Dims dims;
};

// Packed float32 x4 little-endian scans. Non-finite points are dropped and
// reflectance is clamped to [0, 1] so the cloud invariants hold for any
// well-sized input.
PointCloud load_velodyne(const std::string& path);
void save_velodyne(const std::string& path, const PointCloud& cloud);

// `KEY: v1 v2 ...` rows; requires P2 (3x4), R0_rect (3x3) and
// Tr_velo_to_cam (3x4). Unknown keys are ignored.
Calibration load_calib(const std::string& path);
void save_calib(const std::string& path, const Calibration& calib);

std::vector<LabelRecord> load_labels(const std::string& path);
void save_labels(const std::string& path,
                 const std::vector<LabelRecord>& labels);

std::vector<Detection2DInput> load_detections(const std::string& path);
void save_detections_2d(const std::string& path,
                        const std::vector<Detection2DInput>& dets);

// KITTI result layout (16 fields, label + score). The calibration is needed
// to express LiDAR-frame boxes in the camera-frame file convention.
void write_detections(const std::string& path,
                      const std::vector<Detection>& dets,
                      const Calibration& calib);
std::vector<ResultRecord> load_results(const std::string& path);

// Camera-frame label <-> LiDAR-frame box conversions.
Box3 label_to_box3(const LabelRecord& rec, const Calibration& calib);
LabelRecord box3_to_label(const Box3& box, const Calibration& calib);

}  // namespace frustumfit::kitti

#endif  // FRUSTUMFIT_KITTI_IO_HPP
