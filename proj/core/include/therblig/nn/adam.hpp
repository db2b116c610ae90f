// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "therblig/nn/params.hpp"

namespace tbk::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Matrix<T>> first_moment;
  std::vector<Matrix<T>> second_moment;
  long long step = 0;
};

/// One bias-corrected Adam update of every trainable parameter. `grads`
/// is aligned with `params`. A non-finite gradient throws RuntimeFault
/// naming the parameter and leaves all parameters untouched.
template <typename T>
void adam_step(ParamStore<T>& params, const std::vector<Matrix<T>>& grads, AdamState<T>& state);

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_global_norm(std::vector<Matrix<T>>& grads, double max_norm);

}  // namespace tbk::nn
