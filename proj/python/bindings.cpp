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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "frustumfit/car_models.hpp"
#include "frustumfit/evalkit.hpp"
#include "frustumfit/geometry.hpp"
#include "frustumfit/kitti_io.hpp"
#include "frustumfit/priors.hpp"
#include "frustumfit/proposals.hpp"
#include "frustumfit/refine_net.hpp"
#include "frustumfit/synth.hpp"
#include "frustumfit/types.hpp"

namespace py = pybind11;
using namespace frustumfit;

namespace {

PointCloud cloud_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>&
        arr) {
  if (arr.ndim() != 2 || (arr.shape(1) != 3 && arr.shape(1) != 4))
    throw std::invalid_argument("point cloud must be an (N, 3) or (N, 4) array");
  PointCloud cloud(arr.shape(0));
  const auto view = arr.unchecked<2>();
  for (py::ssize_t i = 0; i < arr.shape(0); ++i) {
    cloud[i].position = {view(i, 0), view(i, 1), view(i, 2)};
    cloud[i].reflectance =
        arr.shape(1) == 4 ? static_cast<float>(view(i, 3)) : 0.0f;
  }
  return cloud;
}

py::array_t<double> cloud_to_array(const PointCloud& cloud) {
  py::array_t<double> arr({py::ssize_t(cloud.size()), py::ssize_t(4)});
  auto view = arr.mutable_unchecked<2>();
  for (size_t i = 0; i < cloud.size(); ++i) {
    view(i, 0) = cloud[i].position.x;
    view(i, 1) = cloud[i].position.y;
    view(i, 2) = cloud[i].position.z;
    view(i, 3) = cloud[i].reflectance;
  }
  return arr;
}

py::array_t<double> target_to_array(const refine::RegressionTarget7& t) {
  py::array_t<double> arr(7);
  auto view = arr.mutable_unchecked<1>();
  for (int i = 0; i < 7; ++i) view(i) = t[i];
  return arr;
}

refine::RegressionTarget7 target_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>&
        arr) {
  if (arr.ndim() != 1 || arr.shape(0) != 7)
    throw std::invalid_argument("regression target must have 7 elements");
  refine::RegressionTarget7 t;
  const auto view = arr.unchecked<1>();
  for (int i = 0; i < 7; ++i) t[i] = view(i);
  return t;
}

}  // namespace

PYBIND11_MODULE(_frustumfit, m) {
  m.doc() = "3D vehicle box fitting from 2D detections and LiDAR point clouds";

  py::register_exception<Error>(m, "FrustumFitError");

  py::class_<Vec3>(m, "Vec3")
      .def(py::init<double, double, double>(), py::arg("x") = 0.0,
           py::arg("y") = 0.0, py::arg("z") = 0.0)
      .def_readwrite("x", &Vec3::x)
      .def_readwrite("y", &Vec3::y)
      .def_readwrite("z", &Vec3::z)
      .def("__repr__", [](const Vec3& v) {
        return "Vec3(" + std::to_string(v.x) + ", " + std::to_string(v.y) +
               ", " + std::to_string(v.z) + ")";
      });

  py::enum_<CarCategory>(m, "CarCategory")
      .value("SUV", CarCategory::kSuv)
      .value("SEDAN", CarCategory::kSedan)
      .value("VAN", CarCategory::kVan);

  py::class_<Box3>(m, "Box3")
      .def(py::init([](const Vec3& center, double h, double l, double w,
                       double yaw) {
             return Box3{center, h, l, w, yaw};
           }),
           py::arg("center"), py::arg("h"), py::arg("l"), py::arg("w"),
           py::arg("yaw") = 0.0)
      .def_readwrite("center", &Box3::center)
      .def_readwrite("h", &Box3::h)
      .def_readwrite("l", &Box3::l)
      .def_readwrite("w", &Box3::w)
      .def_readwrite("yaw", &Box3::yaw)
      .def("__repr__", [](const Box3& b) {
        return "Box3(center=(" + std::to_string(b.center.x) + ", " +
               std::to_string(b.center.y) + ", " + std::to_string(b.center.z) +
               "), h=" + std::to_string(b.h) + ", l=" + std::to_string(b.l) +
               ", w=" + std::to_string(b.w) + ", yaw=" + std::to_string(b.yaw) +
               ")";
      });

  py::class_<Detection>(m, "Detection")
      .def_readonly("box", &Detection::box)
      .def_readonly("score", &Detection::score)
      .def_readonly("category", &Detection::category);

  m.def("iou_bev", &iou_bev, py::arg("a"), py::arg("b"),
        "Bird's-eye-view footprint IoU of two oriented boxes");
  m.def("iou_3d", &iou_3d, py::arg("a"), py::arg("b"));
  m.def("corners", [](const Box3& b) {
    const auto cs = corners(b);
    py::array_t<double> arr({py::ssize_t(8), py::ssize_t(3)});
    auto view = arr.mutable_unchecked<2>();
    for (int i = 0; i < 8; ++i) {
      view(i, 0) = cs[i].x;
      view(i, 1) = cs[i].y;
      view(i, 2) = cs[i].z;
    }
    return arr;
  });
  m.def("points_in_box", [](const py::array_t<double, py::array::c_style |
                                              py::array::forcecast>& pts,
                            const Box3& b) {
    return cloud_to_array(points_in_box(cloud_from_array(pts), b));
  });

  py::class_<Calibration>(m, "Calibration")
      .def_static("load", &kitti::load_calib, py::arg("path"))
      .def_static("synthetic", &synth::synthetic_calibration);
  m.def("project_point", [](const Calibration& c, const Vec3& p) {
    const ImagePoint ip = project_point(c, p);
    return py::make_tuple(ip.u, ip.v, ip.depth);
  });
  m.def("frustum_select",
        [](const py::array_t<double, py::array::c_style |
                             py::array::forcecast>& pts,
           const Calibration& calib, double u_min, double v_min, double u_max,
           double v_max) {
          return cloud_to_array(frustum_select(
              cloud_from_array(pts), calib, {u_min, v_min, u_max, v_max}));
        },
        py::arg("points"), py::arg("calib"), py::arg("u_min"),
        py::arg("v_min"), py::arg("u_max"), py::arg("v_max"));

  // Dimension priors.
  m.def("encode_dims", [](double h, double l, double w, double mh, double ml,
                          double mw) {
    const priors::DimDelta d = priors::encode_dims({h, l, w}, {mh, ml, mw});
    return py::make_tuple(d.dh, d.dl, d.dw);
  });
  m.def("decode_dims", [](double dh, double dl, double dw, double mh,
                          double ml, double mw) {
    const Dims d = priors::decode_dims({dh, dl, dw}, {mh, ml, mw});
    return py::make_tuple(d.h, d.l, d.w);
  });
  m.def("dimension_loss", [](py::sequence pred, py::sequence target,
                             bool is_car, double lambda) {
    const priors::DimDelta p{pred[0].cast<double>(), pred[1].cast<double>(),
                             pred[2].cast<double>()};
    const priors::DimDelta t{target[0].cast<double>(),
                             target[1].cast<double>(),
                             target[2].cast<double>()};
    return priors::dimension_loss(p, t, is_car, {lambda});
  }, py::arg("pred"), py::arg("target"), py::arg("is_car") = true,
     py::arg("lambda_d") = 1.0);

  // Proposals.
  py::class_<proposals::ProposalConfig>(m, "ProposalConfig")
      .def(py::init<>())
      .def_readwrite("iterations", &proposals::ProposalConfig::iterations)
      .def_readwrite("inlier_threshold",
                     &proposals::ProposalConfig::inlier_threshold)
      .def_readwrite("max_seed_points",
                     &proposals::ProposalConfig::max_seed_points)
      .def_readwrite("seed", &proposals::ProposalConfig::seed);
  m.def("generate_proposals",
        [](const py::array_t<double, py::array::c_style |
                             py::array::forcecast>& pts,
           double h, double l, double w, const Vec3& view_origin,
           const proposals::ProposalConfig& cfg) {
          return proposals::generate_proposals(cloud_from_array(pts),
                                               {h, l, w}, view_origin, cfg);
        },
        py::arg("points"), py::arg("h"), py::arg("l"), py::arg("w"),
        py::arg("view_origin") = Vec3{0, 0, 0},
        py::arg("config") = proposals::ProposalConfig{});

  // Score maps and model fitting.
  struct ScoreMaps {
    std::array<models::ScoreMap, kNumCategories> maps;
  };
  py::class_<ScoreMaps>(m, "ScoreMaps")
      .def_static("build", [](int samples, double density, uint64_t seed,
                              double alpha) {
        return ScoreMaps{models::build_default_score_maps(samples, density,
                                                          seed, {alpha})};
      }, py::arg("samples") = 24, py::arg("density") = 600.0,
         py::arg("seed") = 1, py::arg("alpha") = 0.1)
      .def_static("load", [](const std::string& path) {
        return ScoreMaps{models::load_score_maps(path)};
      }, py::arg("path"))
      .def("save", [](const ScoreMaps& maps, const std::string& path) {
        models::save_score_maps(path, maps.maps);
      });
  m.def("score_box",
        [](const py::array_t<double, py::array::c_style |
                             py::array::forcecast>& pts,
           const Box3& box, const ScoreMaps& maps, const Vec3& view_origin,
           double beta, bool per_point) {
          const models::BoxScore s =
              models::score_box(cloud_from_array(pts), box, maps.maps,
                                view_origin, {beta, per_point});
          return py::make_tuple(s.score, s.category, s.flipped);
        },
        py::arg("points"), py::arg("box"), py::arg("maps"),
        py::arg("view_origin") = Vec3{0, 0, 0}, py::arg("beta") = 0.5,
        py::arg("per_point") = false);
  m.def("fit_best_box",
        [](const py::array_t<double, py::array::c_style |
                             py::array::forcecast>& pts,
           const std::vector<Box3>& proposals_in, const ScoreMaps& maps,
           const Vec3& view_origin, double beta, bool per_point) {
          return models::fit_best_box(cloud_from_array(pts), proposals_in,
                                      maps.maps, view_origin,
                                      {beta, per_point});
        },
        py::arg("points"), py::arg("proposals"), py::arg("maps"),
        py::arg("view_origin") = Vec3{0, 0, 0}, py::arg("beta") = 0.5,
        py::arg("per_point") = false);

  // Refinement encode/decode and context voxels.
  m.def("expand_context", [](const Box3& b) {
    const refine::ContextBox ctx = refine::expand_context(b);
    return ctx.expanded;
  });
  m.def("encode_targets", [](const Box3& base, const Box3& gt) {
    return target_to_array(refine::encode_targets(
        refine::CanonicalAnchor::standard(), refine::expand_context(base),
        gt));
  }, py::arg("base"), py::arg("gt"));
  m.def("decode_box",
        [](const Box3& base,
           const py::array_t<double, py::array::c_style |
                             py::array::forcecast>& delta) {
          return refine::decode_box(refine::CanonicalAnchor::standard(),
                                    refine::expand_context(base),
                                    target_from_array(delta));
        },
        py::arg("base"), py::arg("delta"));
  m.def("voxelize_context",
        [](const py::array_t<double, py::array::c_style |
                             py::array::forcecast>& pts,
           const Box3& base) {
          const refine::ContextVoxels v = refine::voxelize_context(
              cloud_from_array(pts), refine::expand_context(base));
          py::array_t<bool> arr({py::ssize_t(refine::kCtxH),
                                 py::ssize_t(refine::kCtxL),
                                 py::ssize_t(refine::kCtxW)});
          auto view = arr.mutable_unchecked<3>();
          for (int ih = 0; ih < refine::kCtxH; ++ih)
            for (int il = 0; il < refine::kCtxL; ++il)
              for (int iw = 0; iw < refine::kCtxW; ++iw)
                view(ih, il, iw) =
                    v.occ[refine::ContextVoxels::index(ih, il, iw)] != 0;
          return arr;
        },
        py::arg("points"), py::arg("base"));

  // Synthetic scenes.
  m.def("make_scene",
        [](const std::vector<std::pair<Box3, CarCategory>>& cars,
           double ground_z, double ground_radius, double ground_density,
           double clutter_density, double surface_density, uint64_t seed) {
          synth::SceneSpec spec;
          for (const auto& [box, cat] : cars) spec.cars.push_back({box, cat});
          spec.ground_z = ground_z;
          spec.ground_radius = ground_radius;
          spec.ground_density = ground_density;
          spec.clutter_density = clutter_density;
          spec.surface_density = surface_density;
          spec.seed = seed;
          const synth::Scene scene = synth::make_scene(spec);
          return py::make_tuple(cloud_to_array(scene.cloud), scene.source);
        },
        py::arg("cars"), py::arg("ground_z") = -1.7,
        py::arg("ground_radius") = 25.0, py::arg("ground_density") = 6.0,
        py::arg("clutter_density") = 0.5, py::arg("surface_density") = 120.0,
        py::arg("seed") = 0);

  // Evaluation.
  m.def("average_precision",
        [](const std::vector<std::pair<std::vector<std::pair<Box3, double>>,
                                       std::vector<Box3>>>& scenes,
           double iou_threshold, const std::string& mode, int interp_points) {
          std::vector<evalkit::SceneDetections> in;
          for (const auto& [dets, gts] : scenes) {
            evalkit::SceneDetections s;
            for (const auto& [box, score] : dets) {
              Detection d;
              d.box = box;
              d.score = score;
              s.dets.push_back(d);
            }
            for (const Box3& g : gts) s.gts.push_back({g, false});
            in.push_back(std::move(s));
          }
          const evalkit::EvalConfig cfg{
              iou_threshold,
              mode == "3d" ? evalkit::IouMode::kBox3d : evalkit::IouMode::kBev,
              interp_points};
          return evalkit::average_precision(in, cfg);
        },
        py::arg("scenes"), py::arg("iou_threshold") = 0.5,
        py::arg("mode") = "bev", py::arg("interp_points") = 11);

  m.def("load_velodyne", [](const std::string& path) {
    return cloud_to_array(kitti::load_velodyne(path));
  });
}
