// SPDX-License-Identifier: Apache-2.0
#include "therblig/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tbk::nn {
namespace {

double evaluate(const Objective& f, const ParamStore<double>& params) {
  Tape<double> tape;
  Binding<double> binding(tape, params);
  return f(tape, binding).item();
}

}  // namespace

GradCheckResult grad_check(const Objective& f, ParamStore<double> params,
                           const GradCheckOptions& options) {
  std::vector<Matrix<double>> analytic;
  {
    Tape<double> tape;
    Binding<double> binding(tape, params);
    auto loss = f(tape, binding);
    tape.backward(loss);
    analytic = binding.gradients();
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& param = params.entries()[pi];
    if (!param.trainable) continue;
    std::vector<Eigen::Index> indices(static_cast<std::size_t>(param.value.size()));
    std::iota(indices.begin(), indices.end(), Eigen::Index{0});
    if (options.max_per_param > 0 &&
        static_cast<long long>(indices.size()) > options.max_per_param) {
      rng.shuffle(indices.begin(), indices.end());
      indices.resize(static_cast<std::size_t>(options.max_per_param));
      std::sort(indices.begin(), indices.end());
    }
    for (auto idx : indices) {
      double& x = param.value.data()[idx];
      const double saved = x;
      x = saved + options.step;
      const double up = evaluate(f, params);
      x = saved - options.step;
      const double down = evaluate(f, params);
      x = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[pi].data()[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_index < 0) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        if (rel >= result.max_rel_error) {
          result.worst_param = param.name;
          result.worst_index = idx;
          result.analytic = a;
          result.numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace tbk::nn
