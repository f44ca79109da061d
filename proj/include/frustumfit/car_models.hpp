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

#ifndef FRUSTUMFIT_CAR_MODELS_HPP
#define FRUSTUMFIT_CAR_MODELS_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "frustumfit/geometry.hpp"
#include "frustumfit/types.hpp"

namespace frustumfit::models {

struct EmptyModelCloud : Error {
  using Error::Error;
};
struct NoProposals : Error {
  using Error::Error;
};

// Model grid resolution along (h, l, w).
constexpr int kGridH = 8;
constexpr int kGridL = 18;
constexpr int kGridW = 10;
constexpr int kGridSize = kGridH * kGridL * kGridW;

inline int grid_index(int ih, int il, int iw) {
  return (ih * kGridL + il) * kGridW + iw;
}

enum class FacetTag : uint8_t {
  kNone = 0,
  kPlusL = 1,   // heading-side end
  kMinusL = 2,  // rear end
  kPlusW = 3,   // left side
  kMinusW = 4,  // right side
  kRoof = 5,
};

// Per-category scoring grid. Shell voxels score +1 before masking, the
// bottom layer is zero, everything else decays with Chebyshev distance from
// the shell. Facet tags are derived from the voxel's boundary position
// (length ends take precedence over the sides; remaining shell is roof).
struct ScoreMap {
  CarCategory category = CarCategory::kSedan;
  std::array<double, kGridSize> grid{};
  std::array<uint8_t, kGridSize> shell{};
  std::array<FacetTag, kGridSize> facet{};

  double at(int ih, int il, int iw) const {
    return grid[grid_index(ih, il, iw)];
  }
};

struct ScoreMapConfig {
  double alpha = 0.1;  // penalty per voxel of Chebyshev distance
};

// Exact multi-source Chebyshev distance over an arbitrary grid; shell cells
// get 0. Exposed for direct testing against a brute-force oracle.
std::vector<int> chebyshev_distance_field(const std::vector<uint8_t>& shell,
                                          int nh, int nl, int nw);

// Normalized shell cloud (unit box coordinates: x along l, y along w, z along
// h, each in [0, 1]) -> score map. Throws EmptyModelCloud on empty input.
ScoreMap build_score_map(const PointCloud& normalized_shell,
                         CarCategory category, const ScoreMapConfig& cfg = {});

// Vertical facets whose outward normal points away from view_origin get score
// -beta on their shell voxels; roof and bottom are untouched.
ScoreMap mask_self_occlusion(const ScoreMap& map, const Box3& box,
                             const Vec3& view_origin, double beta = 0.5);

struct VoxelOccupancy {
  std::array<int32_t, kGridSize> count{};
  int32_t total = 0;
};

// Anisometric normalization of in-box points onto the model grid; boundary
// points clamp into the last voxel, points outside the box are ignored.
VoxelOccupancy voxelize_to_model_grid(const PointCloud& points,
                                      const Box3& box);

struct ScoringConfig {
  double beta = 0.5;      // self-occlusion penalty
  bool per_point = false; // score each point instead of each occupied voxel
};

struct BoxScore {
  double score = 0.0;
  CarCategory category = CarCategory::kSuv;
  bool flipped = false;
};

// Max score over 3 categories x 2 headings (the grid reversed along l and w
// for the flip). Ties resolve to the earliest category/orientation in
// enumeration order; an empty subset scores 0 as (suv, unflipped).
BoxScore score_box(const PointCloud& subset, const Box3& box,
                   const std::array<ScoreMap, kNumCategories>& maps,
                   const Vec3& view_origin, const ScoringConfig& cfg = {});

// Argmax of score_box over the proposals, earliest index wins ties.
Detection fit_best_box(const PointCloud& subset,
                       const std::vector<Box3>& proposals,
                       const std::array<ScoreMap, kNumCategories>& maps,
                       const Vec3& view_origin, const ScoringConfig& cfg = {});

// Builds the three shipped maps by aggregating normalized synthetic shells.
std::array<ScoreMap, kNumCategories> build_default_score_maps(
    int samples_per_category = 24, double density = 600.0, uint64_t seed = 1,
    const ScoreMapConfig& cfg = {});

// Versioned little-endian binary container for all three maps.
void save_score_maps(const std::string& path,
                     const std::array<ScoreMap, kNumCategories>& maps);
std::array<ScoreMap, kNumCategories> load_score_maps(const std::string& path);

}  // namespace frustumfit::models

#endif  // FRUSTUMFIT_CAR_MODELS_HPP
