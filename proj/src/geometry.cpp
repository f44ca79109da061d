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

#include "frustumfit/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace frustumfit {

namespace {

constexpr double kAreaEps = 1e-12;
constexpr double kFaceEps = 1e-9;

struct Vec2 {
  double x = 0.0, y = 0.0;
};

std::array<Vec2, 4> footprint(const Box3& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = 0.5 * b.l, hw = 0.5 * b.w;
  // Counterclockwise seen from above (z up).
  constexpr double sx[4] = {+1.0, -1.0, -1.0, +1.0};
  constexpr double sy[4] = {+1.0, +1.0, -1.0, -1.0};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    const double lx = sx[i] * hl, ly = sy[i] * hw;
    out[i] = {b.center.x + c * lx - s * ly, b.center.y + s * lx + c * ly};
  }
  return out;
}

double shoelace_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(a);
}

// Clips a convex polygon against the counterclockwise rectangle `clip`.
std::vector<Vec2> clip_convex(std::vector<Vec2> poly,
                              const std::array<Vec2, 4>& clip) {
  std::vector<Vec2> next;
  for (int e = 0; e < 4 && !poly.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % 4];
    const double ex = b.x - a.x, ey = b.y - a.y;
    auto side = [&](const Vec2& p) {
      return ex * (p.y - a.y) - ey * (p.x - a.x);
    };
    next.clear();
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
      const Vec2 cur = poly[i];
      const Vec2 prev = poly[(i + n - 1) % n];
      const double sc = side(cur), sp = side(prev);
      const bool cin = sc >= 0.0, pin = sp >= 0.0;
      if (cin != pin) {
        const double dx = cur.x - prev.x, dy = cur.y - prev.y;
        const double denom = ex * dy - ey * dx;
        if (denom != 0.0) {
          const double t = -sp / denom;
          next.push_back({prev.x + t * dx, prev.y + t * dy});
        }
      }
      if (cin) next.push_back(cur);
    }
    poly = next;
  }
  return poly;
}

}  // namespace

void Calibration::validate() const {
  auto check_orthonormal = [](const Mat33& r) {
    const Mat33 rrt = r * r.transposed();
    const Mat33 id = Mat33::identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (std::abs(rrt.m[i][j] - id.m[i][j]) > 1e-6)
          throw Error("calibration rotation block is not orthonormal");
  };
  check_orthonormal(rectification);
  check_orthonormal(lidar_rotation);

  // Rank of the 3x4 projection by Gaussian elimination.
  double a[3][4];
  double scale = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      a[i][j] = cam_projection[i][j];
      scale = std::max(scale, std::abs(a[i][j]));
    }
  const double tol = std::max(scale, 1.0) * 1e-12;
  int rank = 0;
  for (int col = 0; col < 4 && rank < 3; ++col) {
    int pivot = -1;
    double best = tol;
    for (int row = rank; row < 3; ++row)
      if (std::abs(a[row][col]) > best) {
        best = std::abs(a[row][col]);
        pivot = row;
      }
    if (pivot < 0) continue;
    std::swap_ranges(a[pivot], a[pivot] + 4, a[rank]);
    for (int row = rank + 1; row < 3; ++row) {
      const double f = a[row][col] / a[rank][col];
      for (int j = col; j < 4; ++j) a[row][j] -= f * a[rank][j];
    }
    ++rank;
  }
  if (rank < 3) throw Error("projection matrix is rank deficient");
}

ImagePoint project_point(const Calibration& calib, const Vec3& p) {
  const Vec3 pc = calib.lidar_to_cam(p);
  double r[3];
  for (int i = 0; i < 3; ++i) {
    r[i] = calib.cam_projection[i][0] * pc.x +
           calib.cam_projection[i][1] * pc.y +
           calib.cam_projection[i][2] * pc.z + calib.cam_projection[i][3];
  }
  if (r[2] <= 0.0) throw BehindCamera("point projects behind the camera");
  return {r[0] / r[2], r[1] / r[2], r[2]};
}

PointCloud frustum_select(const PointCloud& cloud, const Calibration& calib,
                          const Box2& box2) {
  PointCloud out;
  for (const Point& pt : cloud) {
    ImagePoint ip;
    try {
      ip = project_point(calib, pt.position);
    } catch (const BehindCamera&) {
      continue;
    }
    if (box2.contains(ip.u, ip.v)) out.push_back(pt);
  }
  return out;
}

std::array<Vec3, 8> corners(const Box3& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = 0.5 * b.l, hw = 0.5 * b.w, hh = 0.5 * b.h;
  constexpr double sx[4] = {+1.0, -1.0, -1.0, +1.0};
  constexpr double sy[4] = {+1.0, +1.0, -1.0, -1.0};
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const double lx = sx[i % 4] * hl, ly = sy[i % 4] * hw;
    const double lz = i < 4 ? -hh : +hh;
    out[i] = {b.center.x + c * lx - s * ly, b.center.y + s * lx + c * ly,
              b.center.z + lz};
  }
  return out;
}

Vec3 to_box_frame(const Box3& b, const Vec3& p) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Vec3 d = p - b.center;
  return {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
}

Vec3 from_box_frame(const Box3& b, const Vec3& local) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  return {b.center.x + c * local.x - s * local.y,
          b.center.y + s * local.x + c * local.y, b.center.z + local.z};
}

bool box_contains(const Box3& b, const Vec3& p) {
  const Vec3 q = to_box_frame(b, p);
  return std::abs(q.x) <= 0.5 * b.l + kFaceEps &&
         std::abs(q.y) <= 0.5 * b.w + kFaceEps &&
         std::abs(q.z) <= 0.5 * b.h + kFaceEps;
}

PointCloud points_in_box(const PointCloud& cloud, const Box3& b) {
  PointCloud out;
  for (const Point& pt : cloud)
    if (box_contains(b, pt.position)) out.push_back(pt);
  return out;
}

namespace {

// Deterministic total order so the intersection is evaluated in one fixed
// argument order; this makes the IoU functions exactly symmetric.
bool box_before(const Box3& a, const Box3& b) {
  const double ka[7] = {a.center.x, a.center.y, a.center.z, a.h, a.l, a.w,
                        a.yaw};
  const double kb[7] = {b.center.x, b.center.y, b.center.z, b.h, b.l, b.w,
                        b.yaw};
  for (int i = 0; i < 7; ++i) {
    if (ka[i] < kb[i]) return true;
    if (ka[i] > kb[i]) return false;
  }
  return true;
}

double footprint_area(const Box3& b) {
  const auto f = footprint(b);
  return shoelace_area({f.begin(), f.end()});
}

}  // namespace

double footprint_intersection_area(const Box3& a, const Box3& b) {
  const Box3& first = box_before(a, b) ? a : b;
  const Box3& second = box_before(a, b) ? b : a;
  const auto fa = footprint(first);
  const auto fb = footprint(second);
  std::vector<Vec2> poly(fa.begin(), fa.end());
  poly = clip_convex(std::move(poly), fb);
  if (poly.size() < 3) return 0.0;
  const double area = shoelace_area(poly);
  return area < kAreaEps ? 0.0 : area;
}

// Union terms use the same shoelace area as the intersection so that
// identical boxes give exactly 1.
double iou_bev(const Box3& a, const Box3& b) {
  const double inter = footprint_intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double ua = footprint_area(a) + footprint_area(b) - inter;
  if (ua <= 0.0) return 0.0;
  return std::clamp(inter / ua, 0.0, 1.0);
}

double iou_3d(const Box3& a, const Box3& b) {
  const double inter_area = footprint_intersection_area(a, b);
  if (inter_area <= 0.0) return 0.0;
  const double oz =
      std::min(a.z_max(), b.z_max()) - std::max(a.z_min(), b.z_min());
  if (oz <= 0.0) return 0.0;
  const double vi = inter_area * oz;
  // Volumes from the same area and vertical-extent expressions as vi, so the
  // self-IoU cancels exactly.
  const double vu = footprint_area(a) * (a.z_max() - a.z_min()) +
                    footprint_area(b) * (b.z_max() - b.z_min()) - vi;
  if (vu <= 0.0) return 0.0;
  return std::clamp(vi / vu, 0.0, 1.0);
}

const char* category_name(CarCategory c) {
  switch (c) {
    case CarCategory::kSuv:
      return "suv";
    case CarCategory::kSedan:
      return "sedan";
    case CarCategory::kVan:
      return "van";
  }
  return "unknown";
}

}  // namespace frustumfit
