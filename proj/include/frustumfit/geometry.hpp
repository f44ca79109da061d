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

#ifndef FRUSTUMFIT_GEOMETRY_HPP
#define FRUSTUMFIT_GEOMETRY_HPP

#include <array>

#include "frustumfit/types.hpp"

namespace frustumfit {

struct BehindCamera : Error {
  using Error::Error;
};

// KITTI-style camera model: u ~ P * R0 * [R|t] * p_lidar.
struct Calibration {
  double cam_projection[3][4] = {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}};
  Mat33 rectification = Mat33::identity();
  Mat33 lidar_rotation = Mat33::identity();
  Vec3 lidar_translation;

  Vec3 lidar_to_cam(const Vec3& p) const {
    return rectification * (lidar_rotation * p + lidar_translation);
  }
  Vec3 cam_to_lidar(const Vec3& p) const {
    return lidar_rotation.transposed() *
           (rectification.transposed() * p - lidar_translation);
  }

  // Throws Error when rotation blocks are not orthonormal within 1e-6 or the
  // projection matrix is rank deficient.
  void validate() const;
};

struct ImagePoint {
  double u = 0.0, v = 0.0, depth = 0.0;
};

// Pinhole projection of a LiDAR-frame point. Throws BehindCamera when the
// projective depth is <= 0.
ImagePoint project_point(const Calibration& calib, const Vec3& p);

// Points with positive camera depth whose projection falls inside box2
// (inclusive bounds).
PointCloud frustum_select(const PointCloud& cloud, const Calibration& calib,
                          const Box2& box2);

// Canonical corner order: bottom face counterclockwise seen from above
// starting at local (+l/2, +w/2), then the top face in the same order.
std::array<Vec3, 8> corners(const Box3& b);

// World point -> box local frame (x along l, y along w, z along h).
Vec3 to_box_frame(const Box3& b, const Vec3& p);
Vec3 from_box_frame(const Box3& b, const Vec3& local);

// Inclusive membership with a 1e-9 face tolerance so exact corners stay in.
bool box_contains(const Box3& b, const Vec3& p);

PointCloud points_in_box(const PointCloud& cloud, const Box3& b);

// Area of the intersection of the two yaw-rotated footprints, via
// Sutherland-Hodgman clipping. Areas below 1e-12 are treated as zero.
double footprint_intersection_area(const Box3& a, const Box3& b);

// Footprint rectangle IoU on the ground plane.
double iou_bev(const Box3& a, const Box3& b);

// Volume IoU for yaw-only boxes: footprint intersection times the vertical
// overlap, over the union volume.
double iou_3d(const Box3& a, const Box3& b);

}  // namespace frustumfit

#endif  // FRUSTUMFIT_GEOMETRY_HPP
