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

#include "frustumfit/car_models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>

#include "frustumfit/random.hpp"
#include "frustumfit/synth.hpp"

namespace frustumfit::models {

namespace {

constexpr char kMapMagic[4] = {'F', 'F', 'S', 'M'};
constexpr uint32_t kMapVersion = 1;

inline int clamp_index(double v, int n) {
  const int i = static_cast<int>(std::floor(v));
  return std::clamp(i, 0, n - 1);
}

FacetTag infer_facet(int ih, int il, int iw) {
  (void)ih;
  if (il == kGridL - 1) return FacetTag::kPlusL;
  if (il == 0) return FacetTag::kMinusL;
  if (iw == kGridW - 1) return FacetTag::kPlusW;
  if (iw == 0) return FacetTag::kMinusW;
  return FacetTag::kRoof;
}

FacetTag opposite(FacetTag t) {
  switch (t) {
    case FacetTag::kPlusL:
      return FacetTag::kMinusL;
    case FacetTag::kMinusL:
      return FacetTag::kPlusL;
    case FacetTag::kPlusW:
      return FacetTag::kMinusW;
    case FacetTag::kMinusW:
      return FacetTag::kPlusW;
    default:
      return t;
  }
}

// facing_away[tag] for the four vertical facets of `box` as seen from
// view_origin: dot(outward normal, facet center - view) >= 0.
std::array<bool, 6> facet_visibility(const Box3& box, const Vec3& view) {
  std::array<bool, 6> away{};
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  struct Entry {
    FacetTag tag;
    Vec3 local_normal;
    Vec3 local_center;
  };
  const Entry entries[4] = {
      {FacetTag::kPlusL, {1, 0, 0}, {0.5 * box.l, 0, 0}},
      {FacetTag::kMinusL, {-1, 0, 0}, {-0.5 * box.l, 0, 0}},
      {FacetTag::kPlusW, {0, 1, 0}, {0, 0.5 * box.w, 0}},
      {FacetTag::kMinusW, {0, -1, 0}, {0, -0.5 * box.w, 0}},
  };
  for (const Entry& e : entries) {
    const Vec3 n = {c * e.local_normal.x - s * e.local_normal.y,
                    s * e.local_normal.x + c * e.local_normal.y, 0.0};
    const Vec3 fc = {box.center.x + c * e.local_center.x - s * e.local_center.y,
                     box.center.y + s * e.local_center.x + c * e.local_center.y,
                     box.center.z};
    away[static_cast<int>(e.tag)] = n.dot(fc - view) >= 0.0;
  }
  return away;
}

double score_grid(const VoxelOccupancy& occ, const ScoreMap& map, bool flipped,
                  const std::array<bool, 6>& away, const ScoringConfig& cfg) {
  double score = 0.0;
  for (int ih = 0; ih < kGridH; ++ih)
    for (int il = 0; il < kGridL; ++il)
      for (int iw = 0; iw < kGridW; ++iw) {
        const int32_t n = occ.count[grid_index(ih, il, iw)];
        if (n == 0) continue;
        const int mi = flipped
                           ? grid_index(ih, kGridL - 1 - il, kGridW - 1 - iw)
                           : grid_index(ih, il, iw);
        double v = map.grid[mi];
        if (map.shell[mi]) {
          // Occlusion keys on the physical facet; under a flipped heading the
          // model tag sits at the mirrored physical end.
          FacetTag tag = map.facet[mi];
          if (flipped) tag = opposite(tag);
          if (tag != FacetTag::kNone && tag != FacetTag::kRoof &&
              away[static_cast<int>(tag)])
            v = -cfg.beta;
        }
        score += cfg.per_point ? n * v : v;
      }
  return score;
}

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

std::vector<int> chebyshev_distance_field(const std::vector<uint8_t>& shell,
                                          int nh, int nl, int nw) {
  const int n = nh * nl * nw;
  std::vector<int> dist(n, -1);
  std::deque<int> queue;
  for (int i = 0; i < n; ++i)
    if (shell[i]) {
      dist[i] = 0;
      queue.push_back(i);
    }
  // 26-neighborhood BFS: each ring is exactly one Chebyshev step.
  auto at = [&](int ih, int il, int iw) { return (ih * nl + il) * nw + iw; };
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    const int ih = cur / (nl * nw);
    const int il = (cur / nw) % nl;
    const int iw = cur % nw;
    for (int dh = -1; dh <= 1; ++dh)
      for (int dl = -1; dl <= 1; ++dl)
        for (int dw = -1; dw <= 1; ++dw) {
          if (dh == 0 && dl == 0 && dw == 0) continue;
          const int h2 = ih + dh, l2 = il + dl, w2 = iw + dw;
          if (h2 < 0 || h2 >= nh || l2 < 0 || l2 >= nl || w2 < 0 || w2 >= nw)
            continue;
          const int ni = at(h2, l2, w2);
          if (dist[ni] < 0) {
            dist[ni] = dist[cur] + 1;
            queue.push_back(ni);
          }
        }
  }
  return dist;
}

ScoreMap build_score_map(const PointCloud& normalized_shell,
                         CarCategory category, const ScoreMapConfig& cfg) {
  if (normalized_shell.empty())
    throw EmptyModelCloud("build_score_map: empty model cloud");

  std::vector<uint8_t> shell(kGridSize, 0);
  for (const Point& p : normalized_shell) {
    const Vec3& q = p.position;
    if (q.x < 0.0 || q.x > 1.0 || q.y < 0.0 || q.y > 1.0 || q.z < 0.0 ||
        q.z > 1.0)
      continue;
    const int il = clamp_index(q.x * kGridL, kGridL);
    const int iw = clamp_index(q.y * kGridW, kGridW);
    const int ih = clamp_index(q.z * kGridH, kGridH);
    shell[grid_index(ih, il, iw)] = 1;
  }

  const std::vector<int> dist =
      chebyshev_distance_field(shell, kGridH, kGridL, kGridW);

  ScoreMap map;
  map.category = category;
  for (int ih = 0; ih < kGridH; ++ih)
    for (int il = 0; il < kGridL; ++il)
      for (int iw = 0; iw < kGridW; ++iw) {
        const int i = grid_index(ih, il, iw);
        if (shell[i]) {
          map.grid[i] = 1.0;
          map.shell[i] = 1;
          map.facet[i] = infer_facet(ih, il, iw);
        } else {
          map.grid[i] = dist[i] > 0 ? -cfg.alpha * dist[i] : 0.0;
        }
      }

  // Bottom layer: ground and tires are indistinguishable, neither reward nor
  // penalty.
  for (int il = 0; il < kGridL; ++il)
    for (int iw = 0; iw < kGridW; ++iw) {
      const int i = grid_index(0, il, iw);
      map.grid[i] = 0.0;
      map.shell[i] = 0;
      map.facet[i] = FacetTag::kNone;
    }
  return map;
}

ScoreMap mask_self_occlusion(const ScoreMap& map, const Box3& box,
                             const Vec3& view_origin, double beta) {
  const std::array<bool, 6> away = facet_visibility(box, view_origin);
  ScoreMap out = map;
  for (int i = 0; i < kGridSize; ++i) {
    if (!out.shell[i]) continue;
    const FacetTag tag = out.facet[i];
    if (tag == FacetTag::kNone || tag == FacetTag::kRoof) continue;
    if (away[static_cast<int>(tag)]) out.grid[i] = -beta;
  }
  return out;
}

VoxelOccupancy voxelize_to_model_grid(const PointCloud& points,
                                      const Box3& box) {
  VoxelOccupancy occ;
  for (const Point& p : points) {
    if (!box_contains(box, p.position)) continue;
    const Vec3 q = to_box_frame(box, p.position);
    const int il = clamp_index((q.x / box.l + 0.5) * kGridL, kGridL);
    const int iw = clamp_index((q.y / box.w + 0.5) * kGridW, kGridW);
    const int ih = clamp_index((q.z / box.h + 0.5) * kGridH, kGridH);
    ++occ.count[grid_index(ih, il, iw)];
    ++occ.total;
  }
  return occ;
}

BoxScore score_box(const PointCloud& subset, const Box3& box,
                   const std::array<ScoreMap, kNumCategories>& maps,
                   const Vec3& view_origin, const ScoringConfig& cfg) {
  const VoxelOccupancy occ = voxelize_to_model_grid(subset, box);
  const std::array<bool, 6> away = facet_visibility(box, view_origin);

  BoxScore best;
  bool first = true;
  for (int cat = 0; cat < kNumCategories; ++cat) {
    for (int flip = 0; flip < 2; ++flip) {
      const double s = score_grid(occ, maps[cat], flip != 0, away, cfg);
      if (first || s > best.score) {
        best = {s, static_cast<CarCategory>(cat), flip != 0};
        first = false;
      }
    }
  }
  return best;
}

Detection fit_best_box(const PointCloud& subset,
                       const std::vector<Box3>& proposals,
                       const std::array<ScoreMap, kNumCategories>& maps,
                       const Vec3& view_origin, const ScoringConfig& cfg) {
  if (proposals.empty()) throw NoProposals("fit_best_box: no proposals");
  Detection best;
  double best_score = 0.0;
  for (size_t i = 0; i < proposals.size(); ++i) {
    const BoxScore s = score_box(subset, proposals[i], maps, view_origin, cfg);
    if (i == 0 || s.score > best_score) {
      best_score = s.score;
      best.box = proposals[i];
      best.score = s.score;
      best.category = s.category;
      best.stage = DetectionStage::kModelFit;
    }
  }
  return best;
}

std::array<ScoreMap, kNumCategories> build_default_score_maps(
    int samples_per_category, double density, uint64_t seed,
    const ScoreMapConfig& cfg) {
  std::array<ScoreMap, kNumCategories> maps;
  for (int cat = 0; cat < kNumCategories; ++cat) {
    const auto category = static_cast<CarCategory>(cat);
    const synth::CarProfile profile = synth::default_profile(category);
    Rng rng(seed_mix(seed, 0x5C0FE, cat));
    PointCloud aggregated;
    for (int k = 0; k < samples_per_category; ++k) {
      // Dimension spread stands in for distinct source models; normalization
      // collapses them back onto one shape per category.
      Box3 box;
      box.h = rng.uniform(1.3, 2.3);
      box.l = rng.uniform(3.8, 5.4);
      box.w = rng.uniform(1.6, 2.0);
      box.yaw = 0.0;
      const PointCloud shell =
          synth::sample_full_shell(profile, box, density, rng.next());
      for (const Point& p : shell) {
        const Vec3 q = to_box_frame(box, p.position);
        aggregated.push_back({{q.x / box.l + 0.5, q.y / box.w + 0.5,
                               q.z / box.h + 0.5},
                              p.reflectance});
      }
    }
    maps[cat] = build_score_map(aggregated, category, cfg);
  }
  return maps;
}

void save_score_maps(const std::string& path,
                     const std::array<ScoreMap, kNumCategories>& maps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write(kMapMagic, 4);
  write_pod(out, kMapVersion);
  const uint32_t count = kNumCategories;
  write_pod(out, count);
  for (const ScoreMap& map : maps) {
    const uint8_t cat = static_cast<uint8_t>(map.category);
    write_pod(out, cat);
    const uint16_t dims[3] = {kGridH, kGridL, kGridW};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    for (double v : map.grid) {
      const float f = static_cast<float>(v);
      write_pod(out, f);
    }
    out.write(reinterpret_cast<const char*>(map.shell.data()), kGridSize);
    out.write(reinterpret_cast<const char*>(map.facet.data()), kGridSize);
  }
  if (!out) throw Error("write failed for " + path);
}

std::array<ScoreMap, kNumCategories> load_score_maps(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMapMagic, 4) != 0)
    throw Error(path + ": not a score map file");
  uint32_t version = 0, count = 0;
  read_pod(in, version);
  read_pod(in, count);
  if (version != kMapVersion)
    throw Error(path + ": unsupported score map version");
  if (count != kNumCategories)
    throw Error(path + ": expected 3 categories");
  std::array<ScoreMap, kNumCategories> maps;
  for (uint32_t m = 0; m < count; ++m) {
    uint8_t cat = 0;
    read_pod(in, cat);
    uint16_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (dims[0] != kGridH || dims[1] != kGridL || dims[2] != kGridW)
      throw Error(path + ": unexpected grid shape");
    ScoreMap& map = maps[m];
    map.category = static_cast<CarCategory>(cat);
    for (double& v : map.grid) {
      float f = 0.0f;
      read_pod(in, f);
      v = f;
    }
    in.read(reinterpret_cast<char*>(map.shell.data()), kGridSize);
    in.read(reinterpret_cast<char*>(map.facet.data()), kGridSize);
  }
  if (!in) throw Error(path + ": truncated score map file");
  return maps;
}

}  // namespace frustumfit::models
