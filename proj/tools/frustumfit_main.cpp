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

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "frustumfit/pipeline.hpp"

namespace pl = frustumfit::pipeline;

namespace {

// Exit codes: 0 ok, 2 config/parse, 3 I/O, 4 evaluation.
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kIoError = 3;
constexpr int kEvalError = 4;

struct CommonOpts {
  std::string config;
  std::vector<std::string> sets;  // key=value overrides, win over the file

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "key-value pipeline config file");
    cmd->add_option("--set", sets, "override a config key (key=value)")
        ->take_all();
  }

  pl::PipelineConfig build() const {
    pl::PipelineConfig cfg;
    if (!config.empty()) cfg = pl::load_config(config);
    for (const std::string& kv : sets) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw pl::ConfigError("--set wants key=value, got '" + kv + "'");
      pl::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.train.seed = cfg.seed;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frustumfit: 3D vehicle box fitting from 2D detections and "
               "LiDAR scans"};
  app.require_subcommand(1);

  // synth
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic KITTI-format dataset");
  std::string synth_spec_path, synth_out;
  synth_cmd->add_option("spec", synth_spec_path, "scene spec file")
      ->required();
  synth_cmd->add_option("out", synth_out, "output dataset directory")
      ->required();

  // build-maps
  auto* maps_cmd =
      app.add_subcommand("build-maps", "build the generalized car score maps");
  CommonOpts maps_opts;
  maps_opts.attach(maps_cmd);
  std::string maps_out;
  maps_cmd->add_option("--out", maps_out, "score map file to write")
      ->required();

  // fit
  auto* fit_cmd = app.add_subcommand(
      "fit", "run frustum selection, model fitting and refinement");
  CommonOpts fit_opts;
  fit_opts.attach(fit_cmd);
  std::string stop_after;
  bool oracle_2d = false;
  fit_cmd->add_flag("--oracle-2d", oracle_2d,
                    "derive 2D boxes from ground-truth labels");
  fit_cmd->add_option("--stop-after", stop_after,
                      "stop the pipeline early: fit or stage1");

  // train
  auto* train_cmd =
      app.add_subcommand("train", "train a refinement stage");
  CommonOpts train_opts;
  train_opts.attach(train_cmd);
  int train_stage = 1;
  train_cmd->add_option("--stage", train_stage, "stage to train (1 or 2)")
      ->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate detections against "
                                              "ground truth (AP report)");
  CommonOpts eval_opts;
  eval_opts.attach(eval_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (synth_cmd->parsed()) {
      const pl::SynthSpec spec = pl::load_synth_spec(synth_spec_path);
      pl::run_synth(spec, synth_out, std::cout);
      return kOk;
    }
    if (maps_cmd->parsed()) {
      pl::run_build_maps(maps_opts.build(), maps_out);
      std::cout << "wrote " << maps_out << "\n";
      return kOk;
    }
    if (fit_cmd->parsed()) {
      pl::PipelineConfig cfg = fit_opts.build();
      if (oracle_2d) cfg.oracle_2d = true;
      if (!stop_after.empty())
        pl::apply_override(cfg, "stop_after", stop_after);
      const pl::FitSummary summary = pl::run_fit(cfg, std::cout);
      return summary.failed == 0 ? kOk : kIoError;
    }
    if (train_cmd->parsed()) {
      pl::run_train(train_opts.build(), train_stage, std::cout);
      return kOk;
    }
    if (eval_cmd->parsed()) {
      pl::run_eval(eval_opts.build(), std::cout);
      return kOk;
    }
  } catch (const pl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const frustumfit::evalkit::NoGroundTruth& e) {
    std::cerr << "evaluation error: " << e.what() << "\n";
    return kEvalError;
  } catch (const frustumfit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << e.what() << "\n";
    return kIoError;
  }
  return kOk;
}
