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

#include "frustumfit/priors.hpp"

#include <cmath>

namespace frustumfit::priors {

DimDelta encode_dims(const Dims& actual, const MeanDims& mean) {
  if (!actual.positive() || !mean.positive())
    throw NonPositiveDimension("encode_dims requires positive dims");
  return {std::log(actual.h / mean.h), std::log(actual.l / mean.l),
          std::log(actual.w / mean.w)};
}

Dims decode_dims(const DimDelta& delta, const MeanDims& mean) {
  return {mean.h * std::exp(delta.dh), mean.l * std::exp(delta.dl),
          mean.w * std::exp(delta.dw)};
}

double dimension_loss(const DimDelta& pred, const DimDelta& target,
                      bool is_car, const DimensionLossConfig& cfg) {
  if (!is_car) return 0.0;
  const double sum = smooth_l1(pred.dh - target.dh) +
                     smooth_l1(pred.dl - target.dl) +
                     smooth_l1(pred.dw - target.dw);
  return cfg.lambda * sum;
}

}  // namespace frustumfit::priors
