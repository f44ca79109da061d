#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "frustumfit/pipeline.hpp"

using namespace frustumfit;
namespace pl = frustumfit::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "frustumfit_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  return path.string();
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {(std::istreambuf_iterator<char>(in)),
          std::istreambuf_iterator<char>()};
}

// A small, fast synthetic set shared by the integration cases.
void make_dataset(const fs::path& dir, int scenes, uint64_t seed) {
  pl::SynthSpec spec;
  spec.set.scenes = scenes;
  spec.set.seed = seed;
  spec.set.cars_min = 1;
  spec.set.cars_max = 2;
  spec.set.ground_radius = 16.0;
  spec.set.ground_density = 3.0;
  spec.set.clutter_density = 0.3;
  spec.set.surface_density = 90.0;
  spec.set.x_min = 8.0;
  spec.set.x_max = 20.0;
  std::ostringstream sink;
  pl::run_synth(spec, dir.string(), sink);
}

}  // namespace

TEST_CASE("config file parsing with overrides") {
  const fs::path dir = work_dir("config");
  const std::string path = write_text(dir / "pipeline.cfg",
                                      "# comment\n"
                                      "seed 42\n"
                                      "proposal_iterations 17\n"
                                      "mean_h 1.50\n"
                                      "eval_thresholds 0.5,0.7\n"
                                      "conv_channels 4,8\n"
                                      "stop_after fit\n");
  pl::PipelineConfig cfg = pl::load_config(path);
  CHECK(cfg.seed == 42);
  CHECK(cfg.proposal.iterations == 17);
  CHECK(cfg.mean_dims.h == 1.50);
  CHECK(cfg.net.conv_channels == std::vector<int>{4, 8});
  CHECK(cfg.stop_after == pl::StopAfter::kFit);
  pl::apply_override(cfg, "proposal_iterations", "5");
  CHECK(cfg.proposal.iterations == 5);
  CHECK_THROWS_AS(pl::apply_override(cfg, "no_such_key", "1"),
                  pl::ConfigError);
  CHECK_THROWS_AS(pl::apply_override(cfg, "seed", "abc"), pl::ConfigError);
}

TEST_CASE("synth spec parsing") {
  const fs::path dir = work_dir("synthspec");
  const std::string path = write_text(dir / "scene.spec",
                                      "seed 9\n"
                                      "scenes 3\n"
                                      "clutter_density 0.2\n"
                                      "car 12 0.5 -1 1.6 4.4 1.8 0.3 sedan\n");
  const pl::SynthSpec spec = pl::load_synth_spec(path);
  CHECK(spec.set.scenes == 3);
  REQUIRE(spec.explicit_cars.size() == 1);
  CHECK(spec.explicit_cars[0].box.l == 4.4);
  CHECK(spec.explicit_cars[0].category == CarCategory::kSedan);

  const std::string bad =
      write_text(dir / "bad.spec", "car 1 2 3 4 5 6 7 bike\n");
  CHECK_THROWS_AS(pl::load_synth_spec(bad), pl::ConfigError);
}

TEST_CASE("synth writes a complete KITTI-format scene set") {
  const fs::path dir = work_dir("synth_out");
  make_dataset(dir / "data", 2, 31);
  CHECK(fs::exists(dir / "data/velodyne/000000.bin"));
  CHECK(fs::exists(dir / "data/velodyne/000001.bin"));
  CHECK(fs::exists(dir / "data/calib/000000.txt"));
  CHECK(fs::exists(dir / "data/label_2/000000.txt"));
  CHECK(fs::exists(dir / "data/detections_2d/000000.txt"));
  const auto ids = pl::list_scene_ids((dir / "data/velodyne").string());
  CHECK(ids == std::vector<std::string>{"000000", "000001"});

  // Same spec, same bytes.
  make_dataset(dir / "again", 2, 31);
  CHECK(read_bytes(dir / "data/velodyne/000001.bin") ==
        read_bytes(dir / "again/velodyne/000001.bin"));
  CHECK(read_bytes(dir / "data/label_2/000001.txt") ==
        read_bytes(dir / "again/label_2/000001.txt"));
}

TEST_CASE("oracle detections project the ground truth") {
  const fs::path dir = work_dir("oracle");
  make_dataset(dir / "data", 1, 7);
  const auto labels =
      kitti::load_labels((dir / "data/label_2/000000.txt").string());
  const Calibration calib =
      kitti::load_calib((dir / "data/calib/000000.txt").string());
  const auto dets = pl::oracle_detections(labels, calib, synth::kImageWidth,
                                          synth::kImageHeight);
  CHECK(dets.size() == labels.size());
  for (size_t i = 0; i < dets.size(); ++i) {
    CHECK(dets[i].box2.valid());
    CHECK(dets[i].dims.positive());
    CHECK(dets[i].confidence == 1.0);
    CHECK(dets[i].dims.h == labels[i].h);  // exact without noise
  }

  // Dimension noise: seeded, reproducible, zero-mean-ish in log space.
  const auto noisy_a = pl::oracle_detections(labels, calib, synth::kImageWidth,
                                             synth::kImageHeight, 0.1, 99);
  const auto noisy_b = pl::oracle_detections(labels, calib, synth::kImageWidth,
                                             synth::kImageHeight, 0.1, 99);
  REQUIRE(noisy_a.size() == dets.size());
  for (size_t i = 0; i < noisy_a.size(); ++i) {
    CHECK(noisy_a[i].dims.h == noisy_b[i].dims.h);
    CHECK(noisy_a[i].dims.h != labels[i].h);
    CHECK(noisy_a[i].dims.positive());
    CHECK(noisy_a[i].box2.u_min == dets[i].box2.u_min);  // boxes stay exact
  }
}

TEST_CASE("fit and eval round trip on a synthetic set") {
  const fs::path dir = work_dir("fit_eval");
  make_dataset(dir / "data", 3, 101);

  pl::PipelineConfig cfg;
  cfg.scans_dir = (dir / "data/velodyne").string();
  cfg.calib_dir = (dir / "data/calib").string();
  cfg.labels_dir = (dir / "data/label_2").string();
  cfg.detections_dir = (dir / "data/detections_2d").string();
  cfg.output_dir = (dir / "out").string();
  cfg.score_maps = (dir / "maps.bin").string();
  cfg.stop_after = pl::StopAfter::kFit;
  cfg.oracle_2d = true;
  cfg.seed = 3;
  cfg.proposal.iterations = 25;
  cfg.map_samples = 8;
  cfg.map_density = 300.0;

  pl::run_build_maps(cfg, cfg.score_maps);
  CHECK(fs::exists(cfg.score_maps));

  std::ostringstream log;
  const pl::FitSummary summary = pl::run_fit(cfg, log);
  CHECK(summary.scenes == 3);
  CHECK(summary.failed == 0);
  CHECK(summary.detections >= 3);
  CHECK(fs::exists(dir / "out/000000.txt"));

  // Determinism: the same config produces byte-identical detections.
  pl::PipelineConfig cfg2 = cfg;
  cfg2.output_dir = (dir / "out2").string();
  pl::run_fit(cfg2, log);
  for (const auto& id : {"000000", "000001", "000002"}) {
    CHECK(read_bytes(dir / "out" / (std::string(id) + ".txt")) ==
          read_bytes(dir / "out2" / (std::string(id) + ".txt")));
  }

  // Worker count must not change the output bytes.
  pl::PipelineConfig cfg4 = cfg;
  cfg4.output_dir = (dir / "out4").string();
  cfg4.workers = 4;
  pl::run_fit(cfg4, log);
  CHECK(read_bytes(dir / "out/000002.txt") ==
        read_bytes(dir / "out4/000002.txt"));

  cfg.results_dir = cfg.output_dir;
  const pl::EvalReport report = pl::run_eval(cfg, log);
  CHECK(report.scenes == 3);
  CHECK(report.cells.size() == 2 * 2 * 3);
  CHECK(fs::exists(dir / "out/report.txt"));
  CHECK(fs::exists(dir / "out/report.kv"));
  for (const auto& cell : report.cells) {
    CHECK(cell.ap >= 0.0);
    CHECK(cell.ap <= 1.0);
  }
}

TEST_CASE("eval on ground truth itself gives AP 1") {
  const fs::path dir = work_dir("perfect");
  make_dataset(dir / "data", 2, 55);

  // Write results equal to the labels with confidence 1.
  fs::create_directories(dir / "results");
  for (const auto& id : pl::list_scene_ids((dir / "data/velodyne").string())) {
    const Calibration calib =
        kitti::load_calib((dir / "data/calib" / (id + ".txt")).string());
    const auto labels =
        kitti::load_labels((dir / "data/label_2" / (id + ".txt")).string());
    std::vector<Detection> dets;
    for (const auto& rec : labels) {
      Detection d;
      d.box = kitti::label_to_box3(rec, calib);
      d.score = 1.0;
      dets.push_back(d);
    }
    kitti::write_detections((dir / "results" / (id + ".txt")).string(), dets,
                            calib);
  }

  pl::PipelineConfig cfg;
  cfg.labels_dir = (dir / "data/label_2").string();
  cfg.calib_dir = (dir / "data/calib").string();
  cfg.results_dir = (dir / "results").string();
  std::ostringstream log;
  const pl::EvalReport report = pl::run_eval(cfg, log);
  for (const auto& cell : report.cells)
    CHECK(cell.ap == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("failing scenes are reported, not fatal") {
  const fs::path dir = work_dir("failing");
  make_dataset(dir / "data", 2, 77);
  // Corrupt one scan.
  std::ofstream((dir / "data/velodyne/000001.bin").string(),
                std::ios::binary)
      << "xyz";

  pl::PipelineConfig cfg;
  cfg.scans_dir = (dir / "data/velodyne").string();
  cfg.calib_dir = (dir / "data/calib").string();
  cfg.labels_dir = (dir / "data/label_2").string();
  cfg.output_dir = (dir / "out").string();
  cfg.score_maps = (dir / "maps.bin").string();
  cfg.stop_after = pl::StopAfter::kFit;
  cfg.oracle_2d = true;
  cfg.map_samples = 6;
  cfg.map_density = 250.0;
  pl::run_build_maps(cfg, cfg.score_maps);

  std::ostringstream log;
  const pl::FitSummary summary = pl::run_fit(cfg, log);
  CHECK(summary.scenes == 2);
  CHECK(summary.failed == 1);
  CHECK(fs::exists(dir / "out/000000.txt"));
  CHECK(!fs::exists(dir / "out/000001.txt"));
  CHECK(log.str().find("000001") != std::string::npos);
}

TEST_CASE("fit configuration errors") {
  pl::PipelineConfig cfg;
  std::ostringstream log;
  CHECK_THROWS_AS(pl::run_fit(cfg, log), pl::ConfigError);
  cfg.score_maps = "/nonexistent/maps.bin";
  CHECK_THROWS_AS(pl::run_fit(cfg, log), Error);
}

TEST_CASE("train then refine end to end at toy scale") {
  const fs::path dir = work_dir("train_e2e");
  make_dataset(dir / "data", 2, 909);

  pl::PipelineConfig cfg;
  cfg.scans_dir = (dir / "data/velodyne").string();
  cfg.calib_dir = (dir / "data/calib").string();
  cfg.labels_dir = (dir / "data/label_2").string();
  cfg.output_dir = (dir / "out").string();
  cfg.score_maps = (dir / "maps.bin").string();
  cfg.stage1_params = (dir / "s1.bin").string();
  cfg.stage2_params = (dir / "s2.bin").string();
  cfg.oracle_2d = true;
  cfg.seed = 5;
  cfg.proposal.iterations = 10;
  cfg.map_samples = 6;
  cfg.map_density = 250.0;
  cfg.net.conv_channels = {4, 8};
  cfg.net.fc_dim = 16;
  cfg.train.batch_size = 16;
  cfg.train.iterations = 30;
  cfg.train.learning_rate = 0.01;
  cfg.jitter_per_gt = 6;
  pl::run_build_maps(cfg, cfg.score_maps);

  std::ostringstream log;
  pl::run_train(cfg, 1, log);
  CHECK(fs::exists(dir / "s1.bin"));
  pl::run_train(cfg, 2, log);
  CHECK(fs::exists(dir / "s2.bin"));

  cfg.stop_after = pl::StopAfter::kFull;
  const pl::FitSummary summary = pl::run_fit(cfg, log);
  CHECK(summary.failed == 0);
  CHECK(summary.detections >= 2);
  // Stage-2 provenance: scores are probabilities.
  for (const auto& rr :
       kitti::load_results((dir / "out/000000.txt").string())) {
    CHECK(rr.score >= 0.0);
    CHECK(rr.score <= 1.0);
  }
}

TEST_CASE("synth to an unwritable directory fails cleanly") {
  pl::SynthSpec spec;
  spec.set.scenes = 1;
  std::ostringstream log;
  CHECK_THROWS(pl::run_synth(spec, "/proc/nonexistent/dataset", log));
}

TEST_CASE("train needs a params path and positives") {
  const fs::path dir = work_dir("train_cfg");
  pl::PipelineConfig cfg;
  std::ostringstream log;
  CHECK_THROWS_AS(pl::run_train(cfg, 3, log), pl::ConfigError);
  CHECK_THROWS_AS(pl::run_train(cfg, 1, log), pl::ConfigError);
  cfg.stage1_params = (dir / "s1.bin").string();
  CHECK_THROWS_AS(pl::run_train(cfg, 1, log), pl::ConfigError);  // no maps
}
