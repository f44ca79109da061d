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

#include "frustumfit/synth.hpp"

#include <algorithm>
#include <cmath>

namespace frustumfit::synth {

namespace {

constexpr float kGroundReflectance = 0.30f;
constexpr float kCarReflectance = 0.50f;
constexpr float kClutterReflectance = 0.20f;

double silhouette_height(const std::vector<ProfileVertex>& sil, double x) {
  if (x <= sil.front().x) return sil.front().z;
  for (size_t i = 0; i + 1 < sil.size(); ++i) {
    if (x <= sil[i + 1].x) {
      const double t = (x - sil[i].x) / (sil[i + 1].x - sil[i].x);
      return sil[i].z + t * (sil[i + 1].z - sil[i].z);
    }
  }
  return sil.back().z;
}

struct FacetPoints {
  int facet = 0;
  Vec3 normal_local;
  std::vector<Vec3> local;  // box-frame positions
};

// Shell sampling in the box local frame. Profile x (front..rear) maps to
// local x from +l/2 down to -l/2; profile z maps to [-h/2, +h/2].
std::vector<FacetPoints> sample_shell_local(const CarProfile& profile,
                                            const Box3& box, double density,
                                            Rng& rng) {
  const auto& sil = profile.silhouette;
  const double l = box.l, w = box.w, h = box.h;
  auto lx = [&](double xp) { return 0.5 * l - xp * l; };
  auto lz = [&](double zp) { return -0.5 * h + zp * h; };

  std::vector<FacetPoints> out;

  // Front and rear rectangles.
  for (int which = 0; which < 2; ++which) {
    const bool front = which == 0;
    const double zp_top = front ? sil.front().z : sil.back().z;
    const double area = w * zp_top * h;
    FacetPoints fp;
    fp.facet = front ? kFacetFront : kFacetRear;
    fp.normal_local = {front ? 1.0 : -1.0, 0.0, 0.0};
    const long n = std::llround(density * area);
    for (long k = 0; k < n; ++k) {
      const double y = rng.uniform(-0.5 * w, 0.5 * w);
      const double z = rng.uniform(-0.5 * h, lz(zp_top));
      fp.local.push_back({front ? 0.5 * l : -0.5 * l, y, z});
    }
    out.push_back(std::move(fp));
  }

  // Side panels: one trapezoid per silhouette segment, sampled by rejection
  // inside the segment bounding box (acceptance >= 1/2).
  for (int which = 0; which < 2; ++which) {
    const bool left = which == 0;
    FacetPoints fp;
    fp.facet = left ? kFacetLeft : kFacetRight;
    fp.normal_local = {0.0, left ? 1.0 : -1.0, 0.0};
    for (size_t i = 0; i + 1 < sil.size(); ++i) {
      const double za = sil[i].z, zb = sil[i + 1].z;
      const double zmax = std::max(za, zb);
      if (zmax <= 0.0) continue;
      const double area = 0.5 * (za + zb) * h * (sil[i + 1].x - sil[i].x) * l;
      const long n = std::llround(density * area);
      long accepted = 0, attempts = 0;
      const long max_attempts = 64 * n + 64;
      while (accepted < n && attempts < max_attempts) {
        ++attempts;
        const double xp = rng.uniform(sil[i].x, sil[i + 1].x);
        const double zp = rng.uniform(0.0, zmax);
        if (zp > silhouette_height(sil, xp)) continue;
        fp.local.push_back({lx(xp), left ? 0.5 * w : -0.5 * w, lz(zp)});
        ++accepted;
      }
    }
    out.push_back(std::move(fp));
  }

  // Top surface: a planar quad per silhouette segment.
  for (size_t i = 0; i + 1 < sil.size(); ++i) {
    const double ax = lx(sil[i].x), az = lz(sil[i].z);
    const double bx = lx(sil[i + 1].x), bz = lz(sil[i + 1].z);
    const double dx = bx - ax, dz = bz - az;
    const double seg = std::hypot(dx, dz);
    if (seg <= 0.0) continue;
    FacetPoints fp;
    fp.facet = kFacetTopBase + static_cast<int>(i);
    fp.normal_local = {dz / seg, 0.0, -dx / seg};  // unit, z component > 0
    const double area = seg * w;
    const long n = std::llround(density * area);
    for (long k = 0; k < n; ++k) {
      const double u = rng.uniform();
      const double y = rng.uniform(-0.5 * w, 0.5 * w);
      fp.local.push_back({ax + u * dx, y, az + u * dz});
    }
    out.push_back(std::move(fp));
  }

  return out;
}

Box2 clip_to_image(const Box2& b, double* clipped_fraction) {
  const Box2 img = {0.0, 0.0, double(kImageWidth - 1), double(kImageHeight - 1)};
  const double u0 = std::max(b.u_min, img.u_min);
  const double v0 = std::max(b.v_min, img.v_min);
  const double u1 = std::min(b.u_max, img.u_max);
  const double v1 = std::min(b.v_max, img.v_max);
  const double full = (b.u_max - b.u_min) * (b.v_max - b.v_min);
  if (u1 <= u0 || v1 <= v0 || full <= 0.0) {
    if (clipped_fraction) *clipped_fraction = 1.0;
    return {0.0, 0.0, 1.0, 1.0};
  }
  if (clipped_fraction)
    *clipped_fraction = 1.0 - ((u1 - u0) * (v1 - v0)) / full;
  return {u0, v0, u1, v1};
}

}  // namespace

void CarProfile::validate() const {
  if (silhouette.size() < 2) throw Error("car profile needs >= 2 vertices");
  for (size_t i = 0; i < silhouette.size(); ++i) {
    if (silhouette[i].z < 0.0 || silhouette[i].z > 1.0)
      throw Error("car profile height outside [0, 1]");
    if (i > 0 && silhouette[i].x <= silhouette[i - 1].x)
      throw Error("car profile x must be strictly increasing");
  }
  if (silhouette.front().x != 0.0 || silhouette.back().x != 1.0)
    throw Error("car profile must span x in [0, 1]");
}

CarProfile default_profile(CarCategory category) {
  CarProfile p;
  p.category = category;
  switch (category) {
    case CarCategory::kSuv:
      p.silhouette = {{0.00, 0.40}, {0.06, 0.52}, {0.30, 0.56}, {0.46, 1.00},
                      {0.94, 1.00}, {1.00, 0.84}};
      break;
    case CarCategory::kSedan:
      p.silhouette = {{0.00, 0.34}, {0.06, 0.42}, {0.36, 0.46}, {0.52, 1.00},
                      {0.74, 1.00}, {0.90, 0.62}, {1.00, 0.56}};
      break;
    case CarCategory::kVan:
      p.silhouette = {{0.00, 0.42}, {0.08, 0.78}, {0.22, 1.00}, {1.00, 1.00}};
      break;
  }
  p.validate();
  return p;
}

SurfaceSample sample_car_surface_detailed(const CarProfile& profile,
                                          const Box3& box,
                                          const Vec3* view_origin,
                                          double density, uint64_t seed) {
  profile.validate();
  if (!box.valid()) throw Error("sample_car_surface: invalid box");
  if (density <= 0.0) throw Error("sample_car_surface: density must be > 0");

  Rng rng(seed);
  const auto facets = sample_shell_local(profile, box, density, rng);
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);

  SurfaceSample out;
  for (const FacetPoints& fp : facets) {
    const Vec3 n_world = {c * fp.normal_local.x - s * fp.normal_local.y,
                          s * fp.normal_local.x + c * fp.normal_local.y,
                          fp.normal_local.z};
    for (const Vec3& lp : fp.local) {
      const Vec3 p = from_box_frame(box, lp);
      if (view_origin && n_world.dot(*view_origin - p) < 0.0) continue;
      out.points.push_back({p, kCarReflectance});
      out.facet.push_back(fp.facet);
      out.facet_normal.push_back(n_world);
    }
  }
  return out;
}

PointCloud sample_car_surface(const CarProfile& profile, const Box3& box,
                              const Vec3& view_origin, double density,
                              uint64_t seed) {
  return sample_car_surface_detailed(profile, box, &view_origin, density, seed)
      .points;
}

PointCloud sample_full_shell(const CarProfile& profile, const Box3& box,
                             double density, uint64_t seed) {
  return sample_car_surface_detailed(profile, box, nullptr, density, seed)
      .points;
}

Scene make_scene(const SceneSpec& spec) {
  if (spec.ground_density < 0.0 || spec.clutter_density < 0.0)
    throw Error("make_scene: densities must be >= 0");
  for (const SceneObject& car : spec.cars)
    if (!car.box.valid()) throw Error("make_scene: degenerate car box");
  for (size_t i = 0; i < spec.cars.size(); ++i)
    for (size_t j = i + 1; j < spec.cars.size(); ++j)
      if (iou_bev(spec.cars[i].box, spec.cars[j].box) > 0.0)
        throw OverlappingBoxes("ground-truth footprints " + std::to_string(i) +
                               " and " + std::to_string(j) + " intersect");

  Scene scene;
  const double disk_area =
      kPi * spec.ground_radius * spec.ground_radius;

  // Ground disk around the sensor.
  {
    Rng rng(seed_mix(spec.seed, 1));
    const long n = std::llround(spec.ground_density * disk_area);
    for (long k = 0; k < n; ++k) {
      const double r = spec.ground_radius * std::sqrt(rng.uniform());
      const double th = 2.0 * kPi * rng.uniform();
      scene.cloud.push_back(
          {{r * std::cos(th), r * std::sin(th), spec.ground_z},
           kGroundReflectance});
      scene.source.push_back(kSourceGround);
    }
  }

  // Car shells, self-occluded from the sensor.
  for (size_t i = 0; i < spec.cars.size(); ++i) {
    const CarProfile profile = default_profile(spec.cars[i].category);
    const PointCloud pts =
        sample_car_surface(profile, spec.cars[i].box, spec.sensor_origin,
                           spec.surface_density, seed_mix(spec.seed, 100 + i));
    for (const Point& p : pts) {
      scene.cloud.push_back(p);
      scene.source.push_back(static_cast<int>(i));
    }
  }

  // Clutter above the ground, never inside a ground-truth box.
  if (spec.clutter_density > 0.0) {
    Rng rng(seed_mix(spec.seed, 2));
    const long n = std::llround(spec.clutter_density * disk_area);
    long accepted = 0, attempts = 0;
    const long max_attempts = 64 * n + 64;
    while (accepted < n && attempts < max_attempts) {
      ++attempts;
      const double r = spec.ground_radius * std::sqrt(rng.uniform());
      const double th = 2.0 * kPi * rng.uniform();
      const Vec3 p = {r * std::cos(th), r * std::sin(th),
                      spec.ground_z + rng.uniform(0.0, spec.clutter_height)};
      bool inside = false;
      for (const SceneObject& car : spec.cars)
        if (box_contains(car.box, p)) {
          inside = true;
          break;
        }
      if (inside) continue;
      scene.cloud.push_back({p, kClutterReflectance});
      scene.source.push_back(kSourceClutter);
      ++accepted;
    }
  }

  // Optional wall plane, a large vertical distractor for the plane fitter.
  if (spec.walls) {
    Rng rng(seed_mix(spec.seed, 3));
    const double wx = 0.75 * spec.ground_radius;
    const double half_span = 0.5 * spec.ground_radius;
    const double height = 4.0;
    const long n =
        std::llround(spec.ground_density * 2.0 * half_span * height);
    for (long k = 0; k < n; ++k) {
      scene.cloud.push_back(
          {{wx, rng.uniform(-half_span, half_span),
            spec.ground_z + rng.uniform(0.0, height)},
           kClutterReflectance});
      scene.source.push_back(kSourceWall);
    }
  }

  // Exact ground-truth labels through the synthetic camera.
  const Calibration calib = synthetic_calibration();
  for (const SceneObject& car : spec.cars) {
    kitti::LabelRecord rec = kitti::box3_to_label(car.box, calib);
    rec.type = "Car";
    rec.occlusion = 0;
    double clipped = 0.0;
    rec.box2 = clip_to_image(rec.box2, &clipped);
    rec.truncation = std::max(rec.truncation, clipped);
    scene.labels.push_back(rec);
  }
  return scene;
}

Calibration synthetic_calibration() {
  Calibration calib;
  const double f = 720.0, cx = 621.0, cy = 187.5;
  calib.cam_projection[0][0] = f;
  calib.cam_projection[0][2] = cx;
  calib.cam_projection[1][1] = f;
  calib.cam_projection[1][2] = cy;
  calib.cam_projection[2][2] = 1.0;
  calib.rectification = Mat33::identity();
  // Camera x = -lidar y, camera y = -lidar z, camera z = lidar x.
  Mat33 r;
  r.m[0][1] = -1.0;
  r.m[1][2] = -1.0;
  r.m[2][0] = 1.0;
  calib.lidar_rotation = r;
  calib.lidar_translation = {0.0, -0.075, -0.27};
  return calib;
}

SceneSpec random_scene_spec(const SceneSetParams& params, int scene_index) {
  Rng rng(seed_mix(params.seed, 0xA11CE, scene_index));
  SceneSpec spec;
  spec.ground_z = params.ground_z;
  spec.ground_radius = params.ground_radius;
  spec.ground_density = params.ground_density;
  spec.clutter_density = params.clutter_density;
  spec.surface_density = params.surface_density;
  spec.walls = params.walls;
  spec.seed = seed_mix(params.seed, 0x5CE11E, scene_index);

  struct Range {
    double lo, hi;
  };
  struct CategoryDims {
    Range h, l, w;
  };
  // Realistic per-category spreads; the profiles carry the shape identity.
  const CategoryDims table[kNumCategories] = {
      {{1.60, 1.82}, {4.15, 4.70}, {1.76, 1.90}},  // SUV
      {{1.38, 1.52}, {4.30, 4.85}, {1.68, 1.82}},  // Sedan
      {{1.90, 2.25}, {4.60, 5.30}, {1.82, 2.00}},  // Van
  };

  const int span = params.cars_max - params.cars_min + 1;
  const int n_cars =
      params.cars_min + static_cast<int>(rng.below(uint64_t(span)));
  for (int i = 0; i < n_cars; ++i) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const auto category = static_cast<CarCategory>(rng.below(3));
      const CategoryDims& d = table[static_cast<int>(category)];
      Box3 box;
      box.h = rng.uniform(d.h.lo, d.h.hi);
      box.l = rng.uniform(d.l.lo, d.l.hi);
      box.w = rng.uniform(d.w.lo, d.w.hi);
      const double x = rng.uniform(params.x_min, params.x_max);
      const double ymax = params.lateral_fov_fraction * x;
      box.center = {x, rng.uniform(-ymax, ymax), params.ground_z + 0.5 * box.h};
      box.yaw = normalize_yaw(rng.uniform(-kPi, kPi));

      // Keep a margin between footprints so frustum subsets stay separable.
      bool clear = true;
      for (const SceneObject& other : spec.cars) {
        Box3 a = box, b = other.box;
        a.l += 0.8;
        a.w += 0.8;
        b.l += 0.8;
        b.w += 0.8;
        if (iou_bev(a, b) > 0.0) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      spec.cars.push_back({box, category});
      break;
    }
  }
  return spec;
}

}  // namespace frustumfit::synth
