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

#ifndef FRUSTUMFIT_SYNTH_HPP
#define FRUSTUMFIT_SYNTH_HPP

#include <cstdint>
#include <vector>

#include "frustumfit/geometry.hpp"
#include "frustumfit/kitti_io.hpp"
#include "frustumfit/random.hpp"
#include "frustumfit/types.hpp"

namespace frustumfit::synth {

struct OverlappingBoxes : Error {
  using Error::Error;
};

// Normalized side silhouette vertex: x runs front (0) to rear (1) along the
// car length, z is the height fraction in [0, 1].
struct ProfileVertex {
  double x = 0.0, z = 0.0;
};

// Category-level car shape: a vertical extrusion of the side silhouette.
struct CarProfile {
  CarCategory category = CarCategory::kSedan;
  std::vector<ProfileVertex> silhouette;

  // Throws Error unless x is strictly increasing over [0, 1] and all heights
  // are inside [0, 1].
  void validate() const;
};

CarProfile default_profile(CarCategory category);

// Facets of the extruded shape. Top facets follow the silhouette segments,
// so their index is kTopBase + segment.
enum Facet : int {
  kFacetFront = 0,  // +l, heading direction
  kFacetRear = 1,   // -l
  kFacetLeft = 2,   // +w
  kFacetRight = 3,  // -w
  kFacetTopBase = 4,
};

struct SurfaceSample {
  PointCloud points;
  std::vector<int> facet;         // per point, Facet values
  std::vector<Vec3> facet_normal; // per point, outward unit normal (world)
};

// Samples shell points at `density` points/m^2. Facets are dropped per point
// when the outward normal faces away from view_origin (dot(n, view - p) < 0).
// Passing view_origin = nullptr keeps the full shell. Deterministic in seed.
SurfaceSample sample_car_surface_detailed(const CarProfile& profile,
                                          const Box3& box,
                                          const Vec3* view_origin,
                                          double density, uint64_t seed);

PointCloud sample_car_surface(const CarProfile& profile, const Box3& box,
                              const Vec3& view_origin, double density,
                              uint64_t seed);

PointCloud sample_full_shell(const CarProfile& profile, const Box3& box,
                             double density, uint64_t seed);

struct SceneObject {
  Box3 box;
  CarCategory category = CarCategory::kSedan;
};

struct SceneSpec {
  std::vector<SceneObject> cars;
  Vec3 sensor_origin = {0.0, 0.0, 0.0};
  double ground_z = -1.7;
  double ground_radius = 40.0;
  double ground_density = 6.0;    // points/m^2
  double clutter_density = 0.5;   // points/m^2
  double surface_density = 120.0; // points/m^2
  double clutter_height = 2.0;
  bool walls = false;
  uint64_t seed = 0;
};

// Provenance codes in Scene::source.
constexpr int kSourceGround = -1;
constexpr int kSourceClutter = -2;
constexpr int kSourceWall = -3;

struct Scene {
  PointCloud cloud;
  std::vector<kitti::LabelRecord> labels;
  std::vector<int> source;  // per point: car index or kSource* code
};

// Ground disk + car shells (self-occluded from the sensor) + clutter.
// Throws OverlappingBoxes when two ground-truth footprints intersect.
// Clutter never lands inside a ground-truth box.
Scene make_scene(const SceneSpec& spec);

// Fixed pinhole used for all synthetic scenes (KITTI-like image framing).
Calibration synthetic_calibration();
constexpr int kImageWidth = 1242;
constexpr int kImageHeight = 375;

// Randomized scene generation for dataset synthesis.
struct SceneSetParams {
  int scenes = 10;
  int cars_min = 1;
  int cars_max = 3;
  double x_min = 8.0, x_max = 32.0;
  double lateral_fov_fraction = 0.45;  // |y| <= fraction * x
  double ground_z = -1.7;
  double ground_radius = 40.0;
  double ground_density = 6.0;
  double clutter_density = 0.5;
  double surface_density = 120.0;
  bool walls = false;
  uint64_t seed = 0;
};

SceneSpec random_scene_spec(const SceneSetParams& params, int scene_index);

}  // namespace frustumfit::synth

#endif  // FRUSTUMFIT_SYNTH_HPP
