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

#include "frustumfit/kitti_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace frustumfit::kitti {

namespace {

std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path);
  return bytes;
}

float decode_f32_le(const unsigned char* b) {
  const uint32_t u = uint32_t(b[0]) | uint32_t(b[1]) << 8 |
                     uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
  return std::bit_cast<float>(u);
}

void encode_f32_le(float f, unsigned char* b) {
  const uint32_t u = std::bit_cast<uint32_t>(f);
  b[0] = u & 0xff;
  b[1] = (u >> 8) & 0xff;
  b[2] = (u >> 16) & 0xff;
  b[3] = (u >> 24) & 0xff;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw MalformedNumber("not a number: '" + tok + "'");
  return v;
}

int parse_int(const std::string& tok) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0')
    throw MalformedNumber("not an integer: '" + tok + "'");
  return static_cast<int>(v);
}

std::string format_fields(const std::vector<double>& vals) {
  std::string out;
  char buf[48];
  for (double v : vals) {
    std::snprintf(buf, sizeof(buf), " %.6f", v);
    out += buf;
  }
  return out;
}

LabelRecord parse_label_fields(const std::vector<std::string>& f) {
  LabelRecord r;
  r.type = f[0];
  r.truncation = parse_double(f[1]);
  r.occlusion = parse_int(f[2]);
  r.alpha = parse_double(f[3]);
  r.box2 = {parse_double(f[4]), parse_double(f[5]), parse_double(f[6]),
            parse_double(f[7])};
  // File order is h, w, l.
  r.h = parse_double(f[8]);
  r.w = parse_double(f[9]);
  r.l = parse_double(f[10]);
  r.location = {parse_double(f[11]), parse_double(f[12]), parse_double(f[13])};
  r.rotation_y = parse_double(f[14]);
  return r;
}

std::string format_label(const LabelRecord& r) {
  std::string out = r.type;
  out += format_fields({r.truncation});
  out += " " + std::to_string(r.occlusion);
  out += format_fields({r.alpha, r.box2.u_min, r.box2.v_min, r.box2.u_max,
                        r.box2.v_max, r.h, r.w, r.l, r.location.x,
                        r.location.y, r.location.z, r.rotation_y});
  return out;
}

}  // namespace

PointCloud load_velodyne(const std::string& path) {
  const std::vector<char> bytes = read_all(path);
  if (bytes.size() % 16 != 0)
    throw TruncatedFile(path + ": size " + std::to_string(bytes.size()) +
                        " is not a multiple of 16");
  PointCloud cloud;
  cloud.reserve(bytes.size() / 16);
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  for (size_t off = 0; off + 16 <= bytes.size(); off += 16) {
    const float x = decode_f32_le(b + off);
    const float y = decode_f32_le(b + off + 4);
    const float z = decode_f32_le(b + off + 8);
    const float r = decode_f32_le(b + off + 12);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) continue;
    Point p;
    p.position = {x, y, z};
    p.reflectance = std::isfinite(r) ? std::clamp(r, 0.0f, 1.0f) : 0.0f;
    cloud.push_back(p);
  }
  return cloud;
}

void save_velodyne(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  std::vector<unsigned char> buf(cloud.size() * 16);
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud[i];
    encode_f32_le(static_cast<float>(p.position.x), &buf[i * 16]);
    encode_f32_le(static_cast<float>(p.position.y), &buf[i * 16 + 4]);
    encode_f32_le(static_cast<float>(p.position.z), &buf[i * 16 + 8]);
    encode_f32_le(p.reflectance, &buf[i * 16 + 12]);
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for " + path);
}

Calibration load_calib(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  bool have_p2 = false, have_r0 = false, have_tr = false;
  Calibration calib;
  std::string line;
  while (std::getline(in, line)) {
    const size_t colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = line.substr(0, colon);
    const std::vector<std::string> toks = split_ws(line.substr(colon + 1));
    auto need = [&](size_t n) {
      if (toks.size() != n)
        throw MalformedNumber(path + ": key " + key + " expects " +
                              std::to_string(n) + " values, got " +
                              std::to_string(toks.size()));
    };
    if (key == "P2") {
      need(12);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
          calib.cam_projection[i][j] = parse_double(toks[i * 4 + j]);
      have_p2 = true;
    } else if (key == "R0_rect") {
      need(9);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          calib.rectification.m[i][j] = parse_double(toks[i * 3 + j]);
      have_r0 = true;
    } else if (key == "Tr_velo_to_cam") {
      need(12);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j)
          calib.lidar_rotation.m[i][j] = parse_double(toks[i * 4 + j]);
      }
      calib.lidar_translation = {parse_double(toks[3]), parse_double(toks[7]),
                                 parse_double(toks[11])};
      have_tr = true;
    }
  }
  if (!have_p2) throw MissingKey(path + ": missing P2");
  if (!have_r0) throw MissingKey(path + ": missing R0_rect");
  if (!have_tr) throw MissingKey(path + ": missing Tr_velo_to_cam");
  calib.validate();
  return calib;
}

void save_calib(const std::string& path, const Calibration& calib) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  char buf[48];
  auto emit = [&](const char* key, const double* vals, int n) {
    out << key << ":";
    for (int i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof(buf), " %.12e", vals[i]);
      out << buf;
    }
    out << "\n";
  };
  emit("P2", &calib.cam_projection[0][0], 12);
  emit("R0_rect", &calib.rectification.m[0][0], 9);
  double tr[12];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) tr[i * 4 + j] = calib.lidar_rotation.m[i][j];
  }
  tr[3] = calib.lidar_translation.x;
  tr[7] = calib.lidar_translation.y;
  tr[11] = calib.lidar_translation.z;
  emit("Tr_velo_to_cam", tr, 12);
  if (!out) throw IoError("write failed for " + path);
}

std::vector<LabelRecord> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<LabelRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::vector<std::string> f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 15)
      throw FieldCountMismatch(path + ": label line has " +
                               std::to_string(f.size()) + " fields, want 15");
    out.push_back(parse_label_fields(f));
  }
  return out;
}

void save_labels(const std::string& path,
                 const std::vector<LabelRecord>& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const LabelRecord& r : labels) out << format_label(r) << "\n";
  if (!out) throw IoError("write failed for " + path);
}

std::vector<Detection2DInput> load_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Detection2DInput> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::vector<std::string> f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 8)
      throw FieldCountMismatch(path + ": detection line has " +
                               std::to_string(f.size()) + " fields, want 8");
    Detection2DInput d;
    d.box2 = {parse_double(f[0]), parse_double(f[1]), parse_double(f[2]),
              parse_double(f[3])};
    d.confidence = parse_double(f[4]);
    d.dims = {parse_double(f[5]), parse_double(f[6]), parse_double(f[7])};
    out.push_back(d);
  }
  return out;
}

void save_detections_2d(const std::string& path,
                        const std::vector<Detection2DInput>& dets) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const Detection2DInput& d : dets) {
    std::string line = format_fields({d.box2.u_min, d.box2.v_min, d.box2.u_max,
                                      d.box2.v_max, d.confidence, d.dims.h,
                                      d.dims.l, d.dims.w});
    out << line.substr(1) << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

Box3 label_to_box3(const LabelRecord& rec, const Calibration& calib) {
  // Location is the bottom face center in camera coordinates (y down).
  const Vec3 bottom_cam = rec.location;
  const Vec3 center_cam = {bottom_cam.x, bottom_cam.y - 0.5 * rec.h,
                           bottom_cam.z};
  Box3 b;
  b.center = calib.cam_to_lidar(center_cam);
  b.h = rec.h;
  b.l = rec.l;
  b.w = rec.w;
  // Heading in camera coordinates for rotation_y about the camera y axis.
  const Vec3 heading_cam = {std::cos(rec.rotation_y), 0.0,
                            -std::sin(rec.rotation_y)};
  const Vec3 origin = calib.cam_to_lidar({0.0, 0.0, 0.0});
  const Vec3 heading = calib.cam_to_lidar(heading_cam) - origin;
  b.yaw = normalize_yaw(std::atan2(heading.y, heading.x));
  return b;
}

LabelRecord box3_to_label(const Box3& box, const Calibration& calib) {
  LabelRecord rec;
  rec.h = box.h;
  rec.l = box.l;
  rec.w = box.w;
  const Vec3 center_cam = calib.lidar_to_cam(box.center);
  rec.location = {center_cam.x, center_cam.y + 0.5 * box.h, center_cam.z};
  const Vec3 heading = {std::cos(box.yaw), std::sin(box.yaw), 0.0};
  const Vec3 origin_cam = calib.lidar_to_cam({0.0, 0.0, 0.0});
  const Vec3 heading_cam = calib.lidar_to_cam(heading) - origin_cam;
  rec.rotation_y = normalize_yaw(std::atan2(-heading_cam.z, heading_cam.x));
  rec.alpha = normalize_yaw(rec.rotation_y -
                            std::atan2(rec.location.x, rec.location.z));
  // Projected 2D box; corners behind the camera are skipped.
  double u0 = 0.0, v0 = 0.0, u1 = 0.0, v1 = 0.0;
  bool any = false;
  for (const Vec3& c : corners(box)) {
    ImagePoint ip;
    try {
      ip = project_point(calib, c);
    } catch (const BehindCamera&) {
      continue;
    }
    if (!any) {
      u0 = u1 = ip.u;
      v0 = v1 = ip.v;
      any = true;
    } else {
      u0 = std::min(u0, ip.u);
      u1 = std::max(u1, ip.u);
      v0 = std::min(v0, ip.v);
      v1 = std::max(v1, ip.v);
    }
  }
  if (any && u1 > u0 && v1 > v0) {
    rec.box2 = {u0, v0, u1, v1};
  } else {
    rec.box2 = {0.0, 0.0, 1.0, 1.0};
    rec.truncation = 1.0;
  }
  return rec;
}

void write_detections(const std::string& path,
                      const std::vector<Detection>& dets,
                      const Calibration& calib) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const Detection& d : dets) {
    LabelRecord rec = box3_to_label(d.box, calib);
    rec.type = "Car";
    out << format_label(rec) << format_fields({d.score}) << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

std::vector<ResultRecord> load_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<ResultRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::vector<std::string> f = split_ws(line);
    if (f.empty()) continue;
    if (f.size() != 16)
      throw FieldCountMismatch(path + ": result line has " +
                               std::to_string(f.size()) + " fields, want 16");
    ResultRecord r;
    r.label = parse_label_fields({f.begin(), f.begin() + 15});
    r.score = parse_double(f[15]);
    out.push_back(r);
  }
  return out;
}

}  // namespace frustumfit::kitti
