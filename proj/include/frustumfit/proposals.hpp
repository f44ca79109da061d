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

#ifndef FRUSTUMFIT_PROPOSALS_HPP
#define FRUSTUMFIT_PROPOSALS_HPP

#include <cstdint>
#include <vector>

#include "frustumfit/types.hpp"

namespace frustumfit::proposals {

struct DegeneratePair : Error {
  using Error::Error;
};

// Vertical plane n . p = offset with a horizontal unit normal.
struct VerticalPlane {
  Vec3 normal;
  double offset = 0.0;

  double signed_distance(const Vec3& p) const {
    return normal.dot(p) - offset;
  }
};

// Plane through both points' horizontal projections. Throws DegeneratePair
// when the horizontal distance is below 1e-9.
VerticalPlane fit_vertical_plane(const Vec3& p1, const Vec3& p2);

struct ProposalConfig {
  int iterations = 50;
  double inlier_threshold = 0.10;  // m
  int max_seed_points = 20;
  double seed_cube_factor = 1.5;     // p2 search cube side, times l
  double ground_expand_factor = 1.5; // footprint expansion for the ground z
  uint64_t seed = 0;
};

struct Proposal {
  Box3 box;
  VerticalPlane support_plane;  // the plane the box's near facet lies in
  int iteration = 0;
};

// Per-iteration trace for auditing the sampling decisions.
struct IterationTrace {
  int p1 = -1, p2 = -1;
  VerticalPlane plane;
  std::vector<int> inliers;
  std::vector<int> seeds;
};

// RANSAC-style proposal sweep. Every returned box has dims exactly est_dims;
// boxes on the sensor side of their support plane are eliminated. Returns an
// empty list (never an error) when the subset has no usable point pair.
// Iterations draw from independent seed substreams, so the output does not
// depend on scheduling.
std::vector<Proposal> generate_proposals_detailed(
    const PointCloud& subset, const Dims& est_dims, const Vec3& view_origin,
    const ProposalConfig& cfg, std::vector<IterationTrace>* trace = nullptr);

std::vector<Box3> generate_proposals(const PointCloud& subset,
                                     const Dims& est_dims,
                                     const Vec3& view_origin,
                                     const ProposalConfig& cfg);

}  // namespace frustumfit::proposals

#endif  // FRUSTUMFIT_PROPOSALS_HPP
