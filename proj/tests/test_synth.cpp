#include <doctest.h>

#include <cmath>

#include "frustumfit/geometry.hpp"
#include "frustumfit/synth.hpp"

using namespace frustumfit;
using namespace frustumfit::synth;

namespace {

Box3 demo_box() { return {{12.0, 1.5, -0.95}, 1.5, 4.4, 1.8, 0.6}; }

}  // namespace

TEST_CASE("profiles validate and differ per category") {
  for (int c = 0; c < kNumCategories; ++c) {
    const CarProfile p = default_profile(static_cast<CarCategory>(c));
    CHECK_NOTHROW(p.validate());
  }
  CHECK(default_profile(CarCategory::kSuv).silhouette.size() !=
        default_profile(CarCategory::kVan).silhouette.size());
}

TEST_CASE("profile validation rejects bad data") {
  CarProfile p;
  p.silhouette = {{0.0, 0.5}, {0.4, 1.2}, {1.0, 0.5}};
  CHECK_THROWS_AS(p.validate(), Error);
  p.silhouette = {{0.0, 0.5}, {0.6, 0.8}, {0.4, 0.9}, {1.0, 0.5}};
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("sample_car_surface is deterministic in the seed") {
  const CarProfile p = default_profile(CarCategory::kSedan);
  const Box3 box = demo_box();
  const PointCloud a = sample_car_surface(p, box, {0, 0, 0}, 80.0, 42);
  const PointCloud b = sample_car_surface(p, box, {0, 0, 0}, 80.0, 42);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].position.x == b[i].position.x);
    CHECK(a[i].position.y == b[i].position.y);
    CHECK(a[i].position.z == b[i].position.z);
  }
  const PointCloud c = sample_car_surface(p, box, {0, 0, 0}, 80.0, 43);
  bool differs = c.size() != a.size();
  for (size_t i = 0; !differs && i < std::min(a.size(), c.size()); ++i)
    differs = a[i].position.x != c[i].position.x;
  CHECK(differs);
}

TEST_CASE("sampled surface stays inside the box") {
  const CarProfile p = default_profile(CarCategory::kSuv);
  Box3 box = demo_box();
  box.yaw = -1.2;
  Box3 grown = box;
  grown.h += 2e-6;
  grown.l += 2e-6;
  grown.w += 2e-6;
  for (const Point& pt : sample_full_shell(p, box, 150.0, 7))
    CHECK(box_contains(grown, pt.position));
}

TEST_CASE("facets facing away from the view are dropped") {
  const CarProfile p = default_profile(CarCategory::kSedan);
  Box3 box = demo_box();
  box.center = {15.0, 0.0, -0.95};
  box.yaw = 0.0;
  const Vec3 view = {0.0, 0.0, 0.0};  // due -x of the box, so +x faces away
  const SurfaceSample s =
      sample_car_surface_detailed(p, box, &view, 120.0, 3);
  REQUIRE(!s.points.empty());
  bool saw_rear = false;
  for (size_t i = 0; i < s.points.size(); ++i) {
    CHECK(s.facet_normal[i].dot(view - s.points[i].position) >= 0.0);
    if (s.facet[i] == kFacetFront) FAIL("front facet faces away, must drop");
    if (s.facet[i] == kFacetRear) saw_rear = true;
  }
  CHECK(saw_rear);
}

TEST_CASE("make_scene ground only") {
  SceneSpec spec;
  spec.ground_radius = 10.0;
  spec.ground_density = 3.0;
  spec.clutter_density = 0.0;
  spec.seed = 5;
  const Scene scene = make_scene(spec);
  CHECK(!scene.cloud.empty());
  CHECK(scene.labels.empty());
  for (const Point& p : scene.cloud) CHECK(p.position.z == spec.ground_z);
}

TEST_CASE("make_scene single car containment") {
  SceneSpec spec;
  spec.ground_radius = 12.0;
  spec.ground_density = 2.0;
  spec.clutter_density = 0.0;
  spec.surface_density = 90.0;
  spec.seed = 6;
  Box3 box = demo_box();
  box.center.z = spec.ground_z + 0.5 * box.h;
  spec.cars.push_back({box, CarCategory::kSedan});
  const Scene scene = make_scene(spec);
  Box3 grown = box;
  grown.h += 2e-6;
  grown.l += 2e-6;
  grown.w += 2e-6;
  REQUIRE(scene.labels.size() == 1);
  size_t car_points = 0;
  for (size_t i = 0; i < scene.cloud.size(); ++i) {
    if (scene.source[i] == kSourceGround) continue;
    CHECK(box_contains(grown, scene.cloud[i].position));
    ++car_points;
  }
  CHECK(car_points > 100);
}

TEST_CASE("make_scene rejects overlapping footprints") {
  SceneSpec spec;
  Box3 a = demo_box();
  Box3 b = demo_box();
  b.center.x += 0.5;
  spec.cars.push_back({a, CarCategory::kSedan});
  spec.cars.push_back({b, CarCategory::kSuv});
  CHECK_THROWS_AS(make_scene(spec), OverlappingBoxes);
}

TEST_CASE("make_scene is deterministic") {
  SceneSpec spec;
  spec.ground_radius = 10.0;
  spec.clutter_density = 0.8;
  spec.seed = 11;
  spec.cars.push_back({demo_box(), CarCategory::kVan});
  const Scene a = make_scene(spec);
  const Scene b = make_scene(spec);
  REQUIRE(a.cloud.size() == b.cloud.size());
  for (size_t i = 0; i < a.cloud.size(); ++i) {
    CHECK(a.cloud[i].position.x == b.cloud[i].position.x);
    CHECK(a.cloud[i].position.y == b.cloud[i].position.y);
    CHECK(a.cloud[i].position.z == b.cloud[i].position.z);
  }
}

TEST_CASE("ground truth recovers nearly all car surface points") {
  SceneSpec spec;
  spec.ground_radius = 14.0;
  spec.clutter_density = 0.5;
  spec.seed = 12;
  Box3 box = demo_box();
  spec.cars.push_back({box, CarCategory::kSuv});
  const Scene scene = make_scene(spec);
  size_t car_total = 0, car_inside = 0;
  for (size_t i = 0; i < scene.cloud.size(); ++i) {
    if (scene.source[i] != 0) continue;
    ++car_total;
    if (box_contains(box, scene.cloud[i].position)) ++car_inside;
  }
  REQUIRE(car_total > 0);
  CHECK(double(car_inside) >= 0.99 * double(car_total));
}

TEST_CASE("clutter avoids ground-truth boxes") {
  SceneSpec spec;
  spec.ground_radius = 10.0;
  spec.clutter_density = 2.0;
  spec.seed = 13;
  const Box3 box = demo_box();
  spec.cars.push_back({box, CarCategory::kSedan});
  const Scene scene = make_scene(spec);
  for (size_t i = 0; i < scene.cloud.size(); ++i)
    if (scene.source[i] == kSourceClutter)
      CHECK(!box_contains(box, scene.cloud[i].position));
}

TEST_CASE("synthetic calibration is valid and labels are exact") {
  const Calibration calib = synthetic_calibration();
  CHECK_NOTHROW(calib.validate());

  SceneSpec spec;
  spec.ground_density = 0.5;
  spec.ground_radius = 8.0;
  spec.clutter_density = 0.0;
  spec.seed = 14;
  Box3 box = demo_box();
  box.center = {14.0, -1.0, spec.ground_z + 0.75};
  spec.cars.push_back({box, CarCategory::kSedan});
  const Scene scene = make_scene(spec);
  REQUIRE(scene.labels.size() == 1);
  const kitti::LabelRecord& rec = scene.labels[0];
  CHECK(rec.type == "Car");
  const Box3 back = kitti::label_to_box3(rec, calib);
  CHECK(back.center.x == doctest::Approx(box.center.x).epsilon(1e-9));
  CHECK(back.center.y == doctest::Approx(box.center.y).epsilon(1e-9));
  CHECK(back.center.z == doctest::Approx(box.center.z).epsilon(1e-9));
  CHECK(rec.box2.valid());
  CHECK(rec.box2.u_min >= 0.0);
  CHECK(rec.box2.u_max <= kImageWidth - 1);
}

TEST_CASE("random scene specs keep cars apart and in range") {
  SceneSetParams params;
  params.seed = 20;
  params.cars_min = 1;
  params.cars_max = 3;
  for (int i = 0; i < 30; ++i) {
    const SceneSpec spec = random_scene_spec(params, i);
    CHECK(spec.cars.size() >= 1);
    CHECK(spec.cars.size() <= 3);
    for (size_t a = 0; a < spec.cars.size(); ++a) {
      CHECK(spec.cars[a].box.center.x >= params.x_min);
      CHECK(spec.cars[a].box.center.x <= params.x_max);
      for (size_t b = a + 1; b < spec.cars.size(); ++b)
        CHECK(iou_bev(spec.cars[a].box, spec.cars[b].box) == 0.0);
    }
    CHECK_NOTHROW(make_scene(spec));
  }
}
