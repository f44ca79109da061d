#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "frustumfit/car_models.hpp"
#include "frustumfit/random.hpp"
#include "frustumfit/synth.hpp"

using namespace frustumfit;
using namespace frustumfit::models;

namespace {

// Every face of the unit box, for a saturated shell.
PointCloud full_box_shell(int per_axis) {
  PointCloud cloud;
  auto push = [&](double x, double y, double z) {
    cloud.push_back({{x, y, z}, 0.f});
  };
  for (int i = 0; i < per_axis; ++i)
    for (int j = 0; j < per_axis; ++j) {
      const double a = (i + 0.5) / per_axis, b = (j + 0.5) / per_axis;
      push(0.0, a, b);
      push(1.0, a, b);
      push(a, 0.0, b);
      push(a, 1.0, b);
      push(a, b, 0.0);
      push(a, b, 1.0);
    }
  return cloud;
}

std::array<ScoreMap, kNumCategories> tiny_maps() {
  return build_default_score_maps(6, 250.0, 3);
}

}  // namespace

TEST_CASE("chebyshev distance field matches brute force on a toy grid") {
  const int nh = 4, nl = 4, nw = 4;
  std::vector<uint8_t> shell(nh * nl * nw, 0);
  // Two seed cells.
  auto at = [&](int h, int l, int w) { return (h * nl + l) * nw + w; };
  shell[at(0, 0, 0)] = 1;
  shell[at(3, 2, 1)] = 1;
  const std::vector<int> dist = chebyshev_distance_field(shell, nh, nl, nw);
  for (int h = 0; h < nh; ++h)
    for (int l = 0; l < nl; ++l)
      for (int w = 0; w < nw; ++w) {
        const int d1 = std::max({std::abs(h - 0), std::abs(l - 0),
                                 std::abs(w - 0)});
        const int d2 = std::max({std::abs(h - 3), std::abs(l - 2),
                                 std::abs(w - 1)});
        CHECK(dist[at(h, l, w)] == std::min(d1, d2));
      }
}

TEST_CASE("build_score_map saturated shell") {
  const ScoreMap map = build_score_map(full_box_shell(64), CarCategory::kSuv);
  for (int ih = 0; ih < kGridH; ++ih)
    for (int il = 0; il < kGridL; ++il)
      for (int iw = 0; iw < kGridW; ++iw) {
        const bool boundary = ih == kGridH - 1 || il == 0 ||
                              il == kGridL - 1 || iw == 0 || iw == kGridW - 1;
        const int i = grid_index(ih, il, iw);
        if (ih == 0) {
          CHECK(map.grid[i] == 0.0);
          CHECK(map.shell[i] == 0);
        } else if (boundary) {
          CHECK(map.grid[i] == 1.0);
          CHECK(map.shell[i] == 1);
        }
      }
}

TEST_CASE("build_score_map distance decay from a single wall") {
  // Shell only on the il = 0 face: distance in the grid equals il.
  PointCloud cloud;
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j)
      cloud.push_back({{0.0, (i + 0.5) / 32.0, (j + 0.5) / 32.0}, 0.f});
  const ScoreMap map = build_score_map(cloud, CarCategory::kSedan, {0.1});
  CHECK(map.at(3, 0, 5) == 1.0);
  CHECK(map.at(3, 1, 5) == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(map.at(3, 3, 5) == doctest::Approx(-0.3).epsilon(1e-12));
  CHECK(map.at(0, 3, 5) == 0.0);  // bottom layer forced to zero
}

TEST_CASE("build_score_map rejects empty clouds") {
  CHECK_THROWS_AS(build_score_map({}, CarCategory::kVan), EmptyModelCloud);
}

TEST_CASE("score map invariants hold for the shipped maps") {
  for (const ScoreMap& map : tiny_maps()) {
    int shell_count = 0;
    for (int ih = 0; ih < kGridH; ++ih)
      for (int il = 0; il < kGridL; ++il)
        for (int iw = 0; iw < kGridW; ++iw) {
          const int i = grid_index(ih, il, iw);
          if (ih == 0) {
            CHECK(map.grid[i] == 0.0);
            continue;
          }
          if (map.shell[i]) {
            CHECK(map.grid[i] == 1.0);
            CHECK(map.facet[i] != FacetTag::kNone);
            ++shell_count;
          } else {
            CHECK(map.grid[i] <= 0.0);
          }
        }
    CHECK(shell_count > 100);
  }
}

TEST_CASE("mask_self_occlusion on the facing axis") {
  const ScoreMap map = build_score_map(full_box_shell(64), CarCategory::kSuv);
  const Box3 box = {{0, 0, 0}, 1.5, 4.0, 1.7, 0.0};
  const Vec3 view = {50.0, 0.0, 0.0};  // due +l
  const ScoreMap masked = mask_self_occlusion(map, box, view, 0.5);
  for (int ih = 1; ih < kGridH; ++ih)
    for (int iw = 0; iw < kGridW; ++iw) {
      const int plus_l = grid_index(ih, kGridL - 1, iw);
      const int minus_l = grid_index(ih, 0, iw);
      if (map.shell[plus_l] && map.facet[plus_l] == FacetTag::kPlusL)
        CHECK(masked.grid[plus_l] == 1.0);
      if (map.shell[minus_l] && map.facet[minus_l] == FacetTag::kMinusL)
        CHECK(masked.grid[minus_l] == -0.5);
    }
}

TEST_CASE("mask_self_occlusion at 45 degrees hits exactly two facets") {
  const ScoreMap map = build_score_map(full_box_shell(64), CarCategory::kSuv);
  const Box3 box = {{10, 10, 0}, 1.5, 4.0, 1.7, 0.0};
  const Vec3 view = {0.0, 0.0, 0.0};  // -l and -w of the box center
  const ScoreMap masked = mask_self_occlusion(map, box, view, 0.5);
  std::set<FacetTag> hit;
  for (int i = 0; i < kGridSize; ++i)
    if (map.shell[i] && masked.grid[i] != map.grid[i]) hit.insert(map.facet[i]);
  CHECK(hit.size() == 2);
  CHECK(hit.count(FacetTag::kPlusL) == 1);
  CHECK(hit.count(FacetTag::kPlusW) == 1);
}

TEST_CASE("mask_self_occlusion leaves roof voxels alone") {
  const ScoreMap map = build_score_map(full_box_shell(64), CarCategory::kSuv);
  const Box3 box = {{3, -4, 0.2}, 1.5, 4.0, 1.7, 0.9};
  Rng rng(8);
  for (int round = 0; round < 10; ++round) {
    const Vec3 view = {rng.uniform(-30, 30), rng.uniform(-30, 30),
                       rng.uniform(-2, 2)};
    const ScoreMap masked = mask_self_occlusion(map, box, view, 0.5);
    for (int i = 0; i < kGridSize; ++i)
      if (map.facet[i] == FacetTag::kRoof)
        CHECK(masked.grid[i] == map.grid[i]);
  }
}

TEST_CASE("masking never raises a voxel score") {
  const auto maps = tiny_maps();
  Rng rng(15);
  for (int round = 0; round < 20; ++round) {
    const Box3 box = {{rng.uniform(-10, 10), rng.uniform(-10, 10), 0.0},
                      1.6, 4.2, 1.8, rng.uniform(-kPi, kPi)};
    const Vec3 view = {rng.uniform(-40, 40), rng.uniform(-40, 40), 0.0};
    const ScoreMap& map = maps[round % kNumCategories];
    const ScoreMap masked = mask_self_occlusion(map, box, view, 0.5);
    for (int i = 0; i < kGridSize; ++i) CHECK(masked.grid[i] <= map.grid[i]);
  }
}

TEST_CASE("voxelize_to_model_grid corner, center and brute force") {
  const Box3 box = {{5.0, -2.0, 0.3}, 1.6, 4.4, 1.8, 0.8};
  const auto cs = corners(box);

  PointCloud minimum = {{cs[2], 0.f}};  // local (-l/2, -w/2, -h/2)
  const VoxelOccupancy occ_min = voxelize_to_model_grid(minimum, box);
  CHECK(occ_min.count[grid_index(0, 0, 0)] == 1);

  PointCloud center = {{box.center, 0.f}};
  const VoxelOccupancy occ_c = voxelize_to_model_grid(center, box);
  CHECK(occ_c.count[grid_index(kGridH / 2, kGridL / 2, kGridW / 2)] == 1);

  Rng rng(70);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i) {
    const Vec3 local = {rng.uniform(-0.5, 0.5) * box.l,
                        rng.uniform(-0.5, 0.5) * box.w,
                        rng.uniform(-0.5, 0.5) * box.h};
    cloud.push_back({from_box_frame(box, local), 0.f});
  }
  const VoxelOccupancy occ = voxelize_to_model_grid(cloud, box);
  VoxelOccupancy expect;
  for (const Point& p : cloud) {
    if (!box_contains(box, p.position)) continue;
    const Vec3 q = to_box_frame(box, p.position);
    const int il = std::min(kGridL - 1, std::max(0, int(std::floor(
                                (q.x / box.l + 0.5) * kGridL))));
    const int iw = std::min(kGridW - 1, std::max(0, int(std::floor(
                                (q.y / box.w + 0.5) * kGridW))));
    const int ih = std::min(kGridH - 1, std::max(0, int(std::floor(
                                (q.z / box.h + 0.5) * kGridH))));
    ++expect.count[grid_index(ih, il, iw)];
    ++expect.total;
  }
  CHECK(occ.total == expect.total);
  for (int i = 0; i < kGridSize; ++i) CHECK(occ.count[i] == expect.count[i]);
}

TEST_CASE("score_box on an empty subset") {
  const auto maps = tiny_maps();
  const Box3 box = {{10, 0, 0}, 1.5, 4.2, 1.8, 0.0};
  const BoxScore s = score_box({}, box, maps, {0, 0, 0});
  CHECK(s.score == 0.0);
  CHECK(s.category == CarCategory::kSuv);
  CHECK(s.flipped == false);
}

TEST_CASE("matching category wins on synthetic shells") {
  const auto maps = tiny_maps();
  Rng rng(90);
  for (int cat = 0; cat < kNumCategories; ++cat) {
    const auto category = static_cast<CarCategory>(cat);
    Box3 box;
    box.center = {14.0, rng.uniform(-3, 3), -1.0};
    box.h = 1.65;
    box.l = 4.4;
    box.w = 1.8;
    box.yaw = rng.uniform(-kPi, kPi);
    const PointCloud shell = synth::sample_car_surface(
        synth::default_profile(category), box, {0, 0, 0}, 140.0, 5 + cat);

    double by_cat[kNumCategories];
    for (int m = 0; m < kNumCategories; ++m) {
      const std::array<ScoreMap, kNumCategories> solo = {maps[m], maps[m],
                                                         maps[m]};
      by_cat[m] = score_box(shell, box, solo, {0, 0, 0}).score;
    }
    for (int m = 0; m < kNumCategories; ++m)
      if (m != cat) CHECK(by_cat[cat] > by_cat[m]);
    CHECK(score_box(shell, box, maps, {0, 0, 0}).category == category);
  }
}

TEST_CASE("points at the box center score negative") {
  const auto maps = tiny_maps();
  const Box3 box = {{12, 1, -0.5}, 1.5, 4.2, 1.8, 0.4};
  PointCloud cluster;
  Rng rng(44);
  for (int i = 0; i < 40; ++i)
    cluster.push_back({from_box_frame(box, {rng.uniform(-0.2, 0.2),
                                            rng.uniform(-0.1, 0.1),
                                            rng.uniform(-0.05, 0.15)}),
                       0.f});
  CHECK(score_box(cluster, box, maps, {0, 0, 0}).score < 0.0);
}

TEST_CASE("deeper interior points never score higher than shell points") {
  const auto maps = tiny_maps();
  const Box3 box = {{10, 0, 0}, 1.6, 4.4, 1.8, 0.0};
  // A small cluster moved from the left side shell inward, step by step.
  double prev = 1e30;
  for (int depth = 0; depth < 4; ++depth) {
    PointCloud cluster;
    for (int k = 0; k < 9; ++k) {
      const double y = -0.5 * box.w + (depth + 0.5) * box.w / kGridW;
      const double x = (k % 3 - 1) * 0.22 * box.l;
      const double z = (k / 3 - 1) * 0.2 * box.h + 0.1;
      cluster.push_back({from_box_frame(box, {x, y, z}), 0.f});
    }
    const std::array<ScoreMap, kNumCategories> solo = {maps[0], maps[0],
                                                       maps[0]};
    const double s = score_box(cluster, box, solo, {0, -50, 0}).score;
    CHECK(s <= prev + 1e-12);
    prev = s;
  }
}

TEST_CASE("flip equivalence: rotating the box by pi flips the grid") {
  const auto maps = tiny_maps();
  const Box3 box = {{13, -2, -0.8}, 1.6, 4.3, 1.8, 0.7};
  const PointCloud shell = synth::sample_car_surface(
      synth::default_profile(CarCategory::kSedan), box, {0, 0, 0}, 120.0, 21);
  Box3 flipped_box = box;
  flipped_box.yaw = normalize_yaw(box.yaw + kPi);
  const BoxScore a = score_box(shell, box, maps, {0, 0, 0});
  const BoxScore b = score_box(shell, flipped_box, maps, {0, 0, 0});
  CHECK(a.score == doctest::Approx(b.score).epsilon(1e-12));
  CHECK(a.category == b.category);
  CHECK(a.flipped != b.flipped);
}

TEST_CASE("fit_best_box picks the true box and honors tie order") {
  const auto maps = tiny_maps();
  Box3 truth = {{15, 2, -0.9}, 1.62, 4.35, 1.78, -0.5};
  const PointCloud shell = synth::sample_car_surface(
      synth::default_profile(CarCategory::kSuv), truth, {0, 0, 0}, 130.0, 33);
  Box3 shifted = truth;
  shifted.center.x += 2.0;

  const Detection best =
      fit_best_box(shell, {truth, shifted}, maps, {0, 0, 0});
  CHECK(best.box.center.x == truth.center.x);
  CHECK(best.stage == DetectionStage::kModelFit);

  const Detection best_rev =
      fit_best_box(shell, {shifted, truth}, maps, {0, 0, 0});
  CHECK(best_rev.box.center.x == truth.center.x);

  CHECK_THROWS_AS(fit_best_box(shell, {}, maps, {0, 0, 0}), NoProposals);

  const Detection single = fit_best_box(shell, {shifted}, maps, {0, 0, 0});
  CHECK(single.box.center.x == shifted.center.x);
}

TEST_CASE("score map file round trip") {
  namespace fs = std::filesystem;
  const auto maps = tiny_maps();
  const fs::path path =
      fs::temp_directory_path() / "frustumfit_unit" / "maps.bin";
  fs::create_directories(path.parent_path());
  save_score_maps(path.string(), maps);
  const auto loaded = load_score_maps(path.string());
  for (int m = 0; m < kNumCategories; ++m) {
    CHECK(loaded[m].category == maps[m].category);
    for (int i = 0; i < kGridSize; ++i) {
      CHECK(loaded[m].grid[i] ==
            doctest::Approx(maps[m].grid[i]).epsilon(1e-6));
      CHECK(loaded[m].shell[i] == maps[m].shell[i]);
      CHECK(loaded[m].facet[i] == maps[m].facet[i]);
    }
  }
  CHECK_THROWS_AS(load_score_maps("/nonexistent/maps.bin"), Error);
}

TEST_CASE("per-point scoring counts multiplicity") {
  const auto maps = tiny_maps();
  const Box3 box = {{10, 0, 0}, 1.6, 4.4, 1.8, 0.0};
  PointCloud one = {{from_box_frame(box, {0.0, -0.5 * box.w + 0.01, 0.1}),
                     0.f}};
  PointCloud three = {one[0], one[0], one[0]};
  const ScoringConfig per_voxel{0.5, false};
  const ScoringConfig per_point{0.5, true};
  const std::array<ScoreMap, kNumCategories> solo = {maps[0], maps[0],
                                                     maps[0]};
  const double v1 = score_box(one, box, solo, {0, -50, 0}, per_voxel).score;
  const double v3 = score_box(three, box, solo, {0, -50, 0}, per_voxel).score;
  CHECK(v1 == v3);
  const double p1 = score_box(one, box, solo, {0, -50, 0}, per_point).score;
  const double p3 = score_box(three, box, solo, {0, -50, 0}, per_point).score;
  CHECK(p3 == doctest::Approx(3.0 * p1).epsilon(1e-12));
}
