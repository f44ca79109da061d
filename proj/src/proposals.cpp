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

#include "frustumfit/proposals.hpp"

#include <algorithm>
#include <cmath>

#include "frustumfit/random.hpp"

namespace frustumfit::proposals {

namespace {

constexpr double kDegenerateEps = 1e-9;

double horizontal_distance(const Vec3& a, const Vec3& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace

VerticalPlane fit_vertical_plane(const Vec3& p1, const Vec3& p2) {
  const double dx = p2.x - p1.x, dy = p2.y - p1.y;
  const double len = std::hypot(dx, dy);
  if (len < kDegenerateEps)
    throw DegeneratePair("points coincide in the horizontal plane");
  const Vec3 normal = {-dy / len, dx / len, 0.0};
  return {normal, normal.dot(p1)};
}

std::vector<Proposal> generate_proposals_detailed(
    const PointCloud& subset, const Dims& est_dims, const Vec3& view_origin,
    const ProposalConfig& cfg, std::vector<IterationTrace>* trace) {
  if (!est_dims.positive())
    throw Error("generate_proposals: estimated dims must be positive");

  std::vector<Proposal> out;
  if (trace) trace->clear();
  if (subset.size() < 2) return out;

  const double half_cube = 0.5 * cfg.seed_cube_factor * est_dims.l;
  const int n = static_cast<int>(subset.size());

  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng(seed_mix(cfg.seed, 0xB0CE5, it));

    const int i1 = static_cast<int>(rng.below(subset.size()));
    const Vec3 p1 = subset[i1].position;

    // p2 candidates: distinct points inside the axis-aligned cube around p1
    // whose horizontal offset admits a vertical plane.
    std::vector<int> candidates;
    for (int i = 0; i < n; ++i) {
      if (i == i1) continue;
      const Vec3& q = subset[i].position;
      if (std::abs(q.x - p1.x) > half_cube || std::abs(q.y - p1.y) > half_cube ||
          std::abs(q.z - p1.z) > half_cube)
        continue;
      if (horizontal_distance(q, p1) < kDegenerateEps) continue;
      candidates.push_back(i);
    }
    if (candidates.empty()) continue;
    const int i2 = candidates[rng.below(candidates.size())];

    const VerticalPlane plane = fit_vertical_plane(p1, subset[i2].position);

    std::vector<int> inliers;
    for (int i = 0; i < n; ++i)
      if (std::abs(plane.signed_distance(subset[i].position)) <
          cfg.inlier_threshold)
        inliers.push_back(i);

    // Up to max_seed_points inliers without replacement (partial
    // Fisher-Yates keeps the draw order deterministic).
    const int n_seeds =
        std::min<int>(cfg.max_seed_points, static_cast<int>(inliers.size()));
    std::vector<int> pool = inliers;
    std::vector<int> seeds;
    for (int k = 0; k < n_seeds; ++k) {
      const size_t j = k + rng.below(pool.size() - k);
      std::swap(pool[k], pool[j]);
      seeds.push_back(pool[k]);
    }

    if (trace) {
      IterationTrace t;
      t.p1 = i1;
      t.p2 = i2;
      t.plane = plane;
      t.inliers = inliers;
      t.seeds = seeds;
      trace->push_back(std::move(t));
    }

    // Which side of the support plane the sensor is on; surviving boxes sit
    // on the other side.
    const double view_side = plane.signed_distance(view_origin);
    const double keep_sign = view_side >= 0.0 ? -1.0 : 1.0;

    const Vec3 n1 = plane.normal;                 // across the plane
    const Vec3 n2 = {n1.y, -n1.x, 0.0};           // along the plane

    for (int seed_idx : seeds) {
      const Vec3 s = subset[seed_idx].position;
      // The perpendicular vertical plane through s fixes the box edge line:
      // the point satisfying n1.x = plane.offset and n2.x = n2.s.
      const double o2 = n2.dot(s);
      const Vec3 edge = n1 * plane.offset + n2 * o2;

      // Four surviving placements: the edge is one vertical box edge; the
      // box extends keep_sign*extent1 across the plane and +-extent2 along
      // it, for both assignments of (l, w) to the two directions.
      for (int assign = 0; assign < 2; ++assign) {
        const double e1 = assign == 0 ? est_dims.l : est_dims.w;
        const double e2 = assign == 0 ? est_dims.w : est_dims.l;
        for (int s2 = -1; s2 <= 1; s2 += 2) {
          const Vec3 c2d = edge + n1 * (keep_sign * 0.5 * e1) +
                           n2 * (s2 * 0.5 * e2);
          const Vec3 l_dir = assign == 0 ? n1 * keep_sign : n2 * double(s2);

          // Ground from the lowest subset point inside the expanded
          // footprint; global minimum as the sparse-car fallback.
          const double g = cfg.ground_expand_factor;
          double ground = 0.0;
          bool found = false;
          for (const Point& pt : subset) {
            const Vec3 d = pt.position - c2d;
            const double u = n1.dot(d), v = n2.dot(d);
            if (std::abs(u) > 0.5 * g * e1 || std::abs(v) > 0.5 * g * e2)
              continue;
            if (!found || pt.position.z < ground) ground = pt.position.z;
            found = true;
          }
          if (!found)
            for (const Point& pt : subset)
              if (!found || pt.position.z < ground) {
                ground = pt.position.z;
                found = true;
              }

          Proposal prop;
          prop.box.center = {c2d.x, c2d.y, ground + 0.5 * est_dims.h};
          prop.box.h = est_dims.h;
          prop.box.l = est_dims.l;
          prop.box.w = est_dims.w;
          prop.box.yaw = normalize_yaw(std::atan2(l_dir.y, l_dir.x));
          prop.support_plane = plane;
          prop.iteration = it;
          out.push_back(prop);
        }
      }
    }
  }
  return out;
}

std::vector<Box3> generate_proposals(const PointCloud& subset,
                                     const Dims& est_dims,
                                     const Vec3& view_origin,
                                     const ProposalConfig& cfg) {
  std::vector<Box3> boxes;
  for (const Proposal& p :
       generate_proposals_detailed(subset, est_dims, view_origin, cfg))
    boxes.push_back(p.box);
  return boxes;
}

}  // namespace frustumfit::proposals
