// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "therblig/nn/params.hpp"

namespace tbk::nn {

using Objective = std::function<Tensor<double>(Tape<double>&, const Binding<double>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-5;
  /// Elements checked per parameter; <= 0 checks all of them.
  long long max_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of a scalar objective against central
/// differences, in double precision, over every trainable parameter.
GradCheckResult grad_check(const Objective& f, ParamStore<double> params,
                           const GradCheckOptions& options = {});

}  // namespace tbk::nn
