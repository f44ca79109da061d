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

#ifndef FRUSTUMFIT_PRIORS_HPP
#define FRUSTUMFIT_PRIORS_HPP

#include "frustumfit/types.hpp"

namespace frustumfit::priors {

struct NonPositiveDimension : Error {
  using Error::Error;
};

// Fleet average dims; the shipped default comes from KITTI car labels and is
// overridable through the pipeline config.
using MeanDims = Dims;

inline MeanDims default_mean_dims() { return {1.53, 3.88, 1.63}; }

// Log-ratio residuals of a box against the mean dims.
struct DimDelta {
  double dh = 0.0, dl = 0.0, dw = 0.0;
};

struct DimensionLossConfig {
  double lambda = 1.0;
};

// (h, l, w) -> component-wise ln(actual/mean); all dims must be positive.
DimDelta encode_dims(const Dims& actual, const MeanDims& mean);

// Inverse of encode_dims.
Dims decode_dims(const DimDelta& delta, const MeanDims& mean);

// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
inline double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double smooth_l1_grad(double x) {
  if (x > 1.0) return 1.0;
  if (x < -1.0) return -1.0;
  return x;
}

// lambda * is_car * sum_i smooth_l1(pred_i - target_i).
double dimension_loss(const DimDelta& pred, const DimDelta& target,
                      bool is_car, const DimensionLossConfig& cfg = {});

}  // namespace frustumfit::priors

#endif  // FRUSTUMFIT_PRIORS_HPP
