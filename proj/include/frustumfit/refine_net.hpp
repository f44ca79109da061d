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

#ifndef FRUSTUMFIT_REFINE_NET_HPP
#define FRUSTUMFIT_REFINE_NET_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "frustumfit/geometry.hpp"
#include "frustumfit/types.hpp"

namespace frustumfit::refine {

struct ShapeMismatch : Error {
  using Error::Error;
};
struct NoValidSolution : Error {
  using Error::Error;
};
struct NonPositiveWidth : Error {
  using Error::Error;
};
struct EmptyDataset : Error {
  using Error::Error;
};
struct NoPositives : Error {
  using Error::Error;
};

// Context voxel grid along (h, l, w); double the model-grid resolution.
constexpr int kCtxH = 24;
constexpr int kCtxL = 54;
constexpr int kCtxW = 32;
constexpr int kCtxSize = kCtxH * kCtxL * kCtxW;

constexpr double kExpandH = 1.5;
constexpr double kExpandL = 1.5;
constexpr double kExpandW = 1.6;

// A detected box plus its context expansion (same center and yaw).
struct ContextBox {
  Box3 base;
  Box3 expanded;
};

ContextBox expand_context(const Box3& b);

struct ContextVoxels {
  std::vector<uint8_t> occ;

  ContextVoxels() : occ(kCtxSize, 0) {}
  static int index(int ih, int il, int iw) {
    return (ih * kCtxL + il) * kCtxW + iw;
  }
  double occupancy_fraction() const;
};

// Binary occupancy of the points inside ctx.expanded, normalized per axis.
ContextVoxels voxelize_context(const PointCloud& cloud, const ContextBox& ctx);

// Normalized-frame constants of the aligned base box. The normalized frame
// maps the expanded box onto the unit cube with x along length, y along
// height and z along width; the base box is centered, so these values are the
// same for every sample.
struct CanonicalAnchor {
  double xc = 0.0, yc = 0.0, zc = 0.0;  // base box center
  double xl = 0.0, yl = 0.0, zl = 0.0;  // base box left-bottom corner
  double length = 0.0, height = 0.0, width = 0.0;

  static CanonicalAnchor standard();
};

// Seven-element target: center deltas, left-bottom corner deltas, log width
// ratio. The left-bottom corner is the box's own local (-l/2, -w/2, -h/2)
// corner, which keeps the encoding invertible for any yaw.
struct RegressionTarget7 {
  double dxc = 0.0, dyc = 0.0, dzc = 0.0;
  double dxl = 0.0, dyl = 0.0, dzl = 0.0;
  double dw = 0.0;

  double& operator[](int i) { return (&dxc)[i]; }
  double operator[](int i) const { return (&dxc)[i]; }
};

RegressionTarget7 encode_targets(const CanonicalAnchor& anchor,
                                 const ContextBox& ctx, const Box3& gt);

// The same geometric box re-parameterized so its yaw lies within 90 degrees
// of reference_yaw (a box is invariant under a 180-degree heading flip).
// Training targets use this so heading-flipped candidates do not split the
// regression into two modes.
Box3 align_heading(const Box3& box, double reference_yaw);

// Inverse of encode_targets: undoes the anisometric normalization and solves
// the corner system for (length, yaw) in closed form, then validates by
// re-encoding to within 1e-6. Throws NoValidSolution when no box with
// positive dims reproduces the deltas.
Box3 decode_box(const CanonicalAnchor& anchor, const ContextBox& ctx,
                const RegressionTarget7& delta);

// Height slices become input channels over the (l, w) grid, so plain 2D
// convolutions see bird's-eye structure. Widths are configuration.
struct NetConfig {
  std::vector<int> conv_channels = {32, 64, 128, 128};
  int fc_dim = 256;
  int input_channels = kCtxH;
  int grid_rows = kCtxL;
  int grid_cols = kCtxW;
};

// Conv(3x3) + ELU + maxpool blocks, one fully connected trunk, then parallel
// regression (7) and classification (2) heads for stage 1; stage 2 keeps only
// the classification head. Head layers start at zero.
class RefineNet {
 public:
  RefineNet(const NetConfig& cfg, int stage, uint64_t seed);

  int stage() const { return stage_; }
  const NetConfig& config() const { return cfg_; }

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  CanonicalAnchor anchor = CanonicalAnchor::standard();

  struct Output {
    RegressionTarget7 target;
    std::array<double, 2> logits{};
  };

  Output forward(const ContextVoxels& voxels) const;
  Output forward_raw(const std::vector<double>& input) const;

  struct ConvLayer {
    int cin = 0, cout = 0;
    int rows = 0, cols = 0;  // input spatial extent
    size_t woff = 0, boff = 0;
  };
  struct DenseLayer {
    int nin = 0, nout = 0;
    size_t woff = 0, boff = 0;
  };

  const std::vector<ConvLayer>& conv_layers() const { return conv_; }
  const DenseLayer& trunk() const { return trunk_; }
  const DenseLayer& reg_head() const { return reg_head_; }
  const DenseLayer& cls_head() const { return cls_head_; }
  int flat_size() const { return flat_size_; }

 private:
  NetConfig cfg_;
  int stage_ = 1;
  std::vector<ConvLayer> conv_;
  DenseLayer trunk_, reg_head_, cls_head_;
  int flat_size_ = 0;
  std::vector<double> params_;
};

inline std::array<double, 2> softmax2(const std::array<double, 2>& logits) {
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

double softmax_cross_entropy(const std::array<double, 2>& logits, int label);

// 1 when the candidate's best BEV IoU against the ground truths reaches the
// threshold (0.5 for stage 1 labeling, 0.7 for stage 2).
int assign_label(const Box3& candidate, const std::vector<Box3>& gts,
                 double iou_threshold, int* best_gt = nullptr);

struct TrainSample {
  ContextVoxels voxels;
  int label = 0;
  RegressionTarget7 target;
  bool has_target = false;
};

struct TrainConfig {
  int batch_size = 128;
  double positive_fraction = 0.5;
  int iterations = 10000;
  double learning_rate = 0.0005;
  double momentum = 0.0;
  double reg_weight = 1.0;
  uint64_t seed = 0;
  int log_every = 50;
};

struct LossParts {
  double total = 0.0, cls = 0.0, reg = 0.0;
};

LossParts batch_loss(const RefineNet& net,
                     const std::vector<TrainSample>& samples,
                     const std::vector<int>& indices, double reg_weight);

// Mean loss over the batch plus the parameter gradient (same layout as
// net.parameters()).
LossParts batch_loss_grad(const RefineNet& net,
                          const std::vector<TrainSample>& samples,
                          const std::vector<int>& indices, double reg_weight,
                          std::vector<double>& grad_out);

// d loss / d input for one sample, for derivative auditing.
std::vector<double> input_gradient(const RefineNet& net, const TrainSample& s,
                                   double reg_weight);

// Plain SGD (optional momentum), minibatches with the configured positive
// fraction (resampling with replacement when positives are scarce). Emits
// `iter=<n> loss=<t> cls=<c> reg=<r>` lines to `log` when given.
// Deterministic given cfg.seed; single threaded.
void train(RefineNet& net, const std::vector<TrainSample>& samples,
           const TrainConfig& cfg, std::ostream* log = nullptr);

// Versioned binary: header, layer shapes, float32 weights, anchor constants.
void save_net(const std::string& path, const RefineNet& net);
RefineNet load_net(const std::string& path);

}  // namespace frustumfit::refine

#endif  // FRUSTUMFIT_REFINE_NET_HPP
