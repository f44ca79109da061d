#include <doctest.h>

#include <cmath>
#include <set>

#include "frustumfit/geometry.hpp"
#include "frustumfit/proposals.hpp"
#include "frustumfit/random.hpp"

using namespace frustumfit;
using namespace frustumfit::proposals;

namespace {

// Planar car-side wall plus a sparse base line, all in the plane x = 5.
PointCloud wall_scene() {
  PointCloud cloud;
  for (int iy = 0; iy <= 20; ++iy)
    for (int iz = 0; iz <= 8; ++iz)
      cloud.push_back({{5.0, -2.0 + 0.2 * iy, -1.5 + 0.18 * iz}, 0.5f});
  for (int iy = 0; iy <= 30; ++iy)
    cloud.push_back({{5.0, -3.0 + 0.2 * iy, -1.7}, 0.3f});
  return cloud;
}

}  // namespace

TEST_CASE("fit_vertical_plane axis case") {
  const VerticalPlane p = fit_vertical_plane({0, 0, 0}, {1, 0, 5});
  CHECK(p.normal.z == 0.0);
  CHECK(std::abs(p.normal.y) == doctest::Approx(1.0));
  CHECK(p.normal.x == doctest::Approx(0.0));
  CHECK(p.signed_distance({7.0, 0.0, -3.0}) == doctest::Approx(0.0));
  CHECK(std::abs(p.signed_distance({0.0, 2.0, 0.0})) == doctest::Approx(2.0));
}

TEST_CASE("fit_vertical_plane diagonal case") {
  const VerticalPlane p = fit_vertical_plane({0, 0, 0}, {1, 1, 0});
  CHECK(std::abs(p.normal.x) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(p.normal.x == doctest::Approx(-p.normal.y));
  CHECK(p.normal.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit_vertical_plane rejects vertical pairs") {
  CHECK_THROWS_AS(fit_vertical_plane({1, 2, 0}, {1, 2, 3}), DegeneratePair);
}

TEST_CASE("generate_proposals on degenerate subsets") {
  const Dims dims = {1.5, 4.0, 1.7};
  ProposalConfig cfg;
  CHECK(generate_proposals({}, dims, {0, 0, 0}, cfg).empty());
  CHECK(generate_proposals({{{1, 1, 1}, 0.f}}, dims, {0, 0, 0}, cfg).empty());
  // Two vertically stacked points leave no valid pair.
  PointCloud stacked = {{{1, 1, 0}, 0.f}, {{1, 1, 2}, 0.f}};
  CHECK(generate_proposals(stacked, dims, {0, 0, 0}, cfg).empty());
}

TEST_CASE("generate_proposals is deterministic and capped") {
  const PointCloud cloud = wall_scene();
  const Dims dims = {1.5, 4.0, 1.7};
  ProposalConfig cfg;
  cfg.iterations = 7;
  cfg.seed = 77;
  const auto a = generate_proposals(cloud, dims, {0, 0, 0}, cfg);
  const auto b = generate_proposals(cloud, dims, {0, 0, 0}, cfg);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() <= size_t(80 * cfg.iterations));
  CHECK(!a.empty());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].center.x == b[i].center.x);
    CHECK(a[i].center.y == b[i].center.y);
    CHECK(a[i].center.z == b[i].center.z);
    CHECK(a[i].yaw == b[i].yaw);
  }
}

TEST_CASE("proposals keep the estimated dims exactly") {
  const PointCloud cloud = wall_scene();
  const Dims dims = {1.47, 4.23, 1.66};
  ProposalConfig cfg;
  cfg.iterations = 5;
  cfg.seed = 3;
  for (const Box3& box : generate_proposals(cloud, dims, {0, 0, 0}, cfg)) {
    CHECK(box.h == dims.h);
    CHECK(box.l == dims.l);
    CHECK(box.w == dims.w);
  }
}

TEST_CASE("proposal boxes sit behind the visible plane") {
  const PointCloud cloud = wall_scene();
  const Dims dims = {1.5, 4.0, 1.7};
  ProposalConfig cfg;
  cfg.iterations = 10;
  cfg.seed = 5;
  const auto props =
      generate_proposals_detailed(cloud, dims, {0, 0, 0}, cfg);
  REQUIRE(!props.empty());
  for (const Proposal& p : props) {
    const double view_side = p.support_plane.signed_distance({0, 0, 0});
    const double center_side = p.support_plane.signed_distance(p.box.center);
    CHECK(view_side * center_side < 0.0);
  }
}

TEST_CASE("traced inliers match a brute-force recomputation") {
  const PointCloud cloud = wall_scene();
  const Dims dims = {1.5, 4.0, 1.7};
  ProposalConfig cfg;
  cfg.iterations = 6;
  cfg.seed = 9;
  std::vector<IterationTrace> trace;
  generate_proposals_detailed(cloud, dims, {0, 0, 0}, cfg, &trace);
  REQUIRE(!trace.empty());
  for (const IterationTrace& t : trace) {
    std::vector<int> expect;
    for (size_t i = 0; i < cloud.size(); ++i)
      if (std::abs(t.plane.signed_distance(cloud[i].position)) <
          cfg.inlier_threshold)
        expect.push_back(static_cast<int>(i));
    CHECK(t.inliers == expect);
    CHECK(t.seeds.size() <= size_t(cfg.max_seed_points));
    std::set<int> unique_seeds(t.seeds.begin(), t.seeds.end());
    CHECK(unique_seeds.size() == t.seeds.size());  // without replacement
    // p2 comes from the cube around p1.
    const Vec3& p1 = cloud[t.p1].position;
    const Vec3& p2 = cloud[t.p2].position;
    const double half = 0.5 * cfg.seed_cube_factor * dims.l;
    CHECK(std::abs(p2.x - p1.x) <= half);
    CHECK(std::abs(p2.y - p1.y) <= half);
    CHECK(std::abs(p2.z - p1.z) <= half);
  }
}

TEST_CASE("wall scene: facets land on the true plane and ground is exact") {
  const PointCloud cloud = wall_scene();
  const Dims dims = {1.5, 4.0, 1.7};
  ProposalConfig cfg;
  cfg.iterations = 12;
  cfg.seed = 1;
  const auto props =
      generate_proposals_detailed(cloud, dims, {0, 0, 0}, cfg);
  REQUIRE(!props.empty());

  // Every sampled pair lies in the x = 5 plane, so every support plane is
  // that wall; one vertical facet of each box must sit on it.
  for (const Proposal& p : props) {
    CHECK(std::abs(std::abs(p.support_plane.normal.x) - 1.0) < 1e-9);
    CHECK(std::abs(std::abs(p.support_plane.offset) - 5.0) < 1e-9);

    const auto cs = corners(p.box);
    // Vertical facets as corner index quadruples (bottom pair + top pair).
    const int facets[4][4] = {
        {0, 1, 4, 5}, {1, 2, 5, 6}, {2, 3, 6, 7}, {3, 0, 7, 4}};
    double best = 1e30;
    for (const auto& f : facets) {
      double worst = 0.0;
      for (int idx : f)
        worst = std::max(worst,
                         std::abs(p.support_plane.signed_distance(cs[idx])));
      best = std::min(best, worst);
    }
    CHECK(best < cfg.inlier_threshold);
    CHECK(best < 1e-9);  // exact by construction here

    // Ground: lowest subset point inside the footprint expanded 1.5x.
    double ground = 1e30;
    for (const Point& pt : cloud) {
      const Vec3 q = to_box_frame(p.box, pt.position);
      if (std::abs(q.x) <= 0.5 * cfg.ground_expand_factor * p.box.l &&
          std::abs(q.y) <= 0.5 * cfg.ground_expand_factor * p.box.w)
        ground = std::min(ground, pt.position.z);
    }
    if (ground == 1e30)
      for (const Point& pt : cloud) ground = std::min(ground, pt.position.z);
    CHECK(p.box.z_min() == doctest::Approx(ground).epsilon(1e-12));
  }
}
