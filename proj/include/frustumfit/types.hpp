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

#ifndef FRUSTUMFIT_TYPES_HPP
#define FRUSTUMFIT_TYPES_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace frustumfit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr double kPi = 3.14159265358979323846;

// LiDAR sensor frame: x forward, y left, z up (right handed).
// Camera frame: x right, y down, z forward (KITTI rectified convention).
struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  double norm_xy() const { return std::hypot(x, y); }
  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Mat33 {
  // Row major.
  double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};

  static Mat33 identity() {
    Mat33 r;
    r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
    return r;
  }

  Vec3 operator*(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }

  Mat33 operator*(const Mat33& o) const {
    Mat33 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) r.m[i][j] += m[i][k] * o.m[k][j];
    return r;
  }

  Mat33 transposed() const {
    Mat33 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
    return r;
  }
};

// Normalizes an angle into (-pi, pi].
inline double normalize_yaw(double yaw) {
  double r = std::remainder(yaw, 2.0 * kPi);
  if (r <= -kPi) r = kPi;
  return r;
}

// Box dimensions in the project-wide [h, l, w] order (meters).
struct Dims {
  double h = 0.0, l = 0.0, w = 0.0;
  bool positive() const { return h > 0.0 && l > 0.0 && w > 0.0; }
};

// Oriented 3D box: geometric center, dims, yaw about the vertical (z) axis.
// The length axis is local x, the width axis local y, the height axis local z.
struct Box3 {
  Vec3 center;
  double h = 0.0, l = 0.0, w = 0.0;
  double yaw = 0.0;

  Dims dims() const { return {h, l, w}; }
  double volume() const { return h * l * w; }
  double z_min() const { return center.z - 0.5 * h; }
  double z_max() const { return center.z + 0.5 * h; }
  bool valid() const {
    return center.finite() && h > 0.0 && l > 0.0 && w > 0.0 &&
           std::isfinite(yaw);
  }
};

// Axis aligned image-plane rectangle, pixels.
struct Box2 {
  double u_min = 0.0, v_min = 0.0, u_max = 0.0, v_max = 0.0;

  double width() const { return u_max - u_min; }
  double height() const { return v_max - v_min; }
  bool valid() const { return u_min < u_max && v_min < v_max; }
  bool contains(double u, double v) const {
    return u >= u_min && u <= u_max && v >= v_min && v <= v_max;
  }
};

struct Point {
  Vec3 position;
  float reflectance = 0.0f;
};

using PointCloud = std::vector<Point>;

enum class CarCategory : uint8_t { kSuv = 0, kSedan = 1, kVan = 2 };
constexpr int kNumCategories = 3;

const char* category_name(CarCategory c);

// Which pipeline step produced a detection.
enum class DetectionStage : uint8_t { kModelFit = 0, kStage1 = 1, kStage2 = 2 };

// A scored oriented 3D box, the pipeline output unit.
struct Detection {
  Box3 box;
  double score = 0.0;
  CarCategory category = CarCategory::kSuv;
  DetectionStage stage = DetectionStage::kModelFit;
};

}  // namespace frustumfit

#endif  // FRUSTUMFIT_TYPES_HPP
