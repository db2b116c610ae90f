// SPDX-License-Identifier: Apache-2.0
#include "therblig/nn/adam.hpp"

#include <cmath>

#include "therblig/error.hpp"

namespace tbk::nn {

template <typename T>
void adam_step(ParamStore<T>& params, const std::vector<Matrix<T>>& grads, AdamState<T>& state) {
  auto& entries = params.entries();
  if (grads.size() != entries.size()) {
    throw ValidationError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                          std::to_string(entries.size()) + " parameters");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (grads[i].rows() != entries[i].value.rows() || grads[i].cols() != entries[i].value.cols()) {
      throw ValidationError("adam_step: gradient shape mismatch for '" + entries[i].name + "'");
    }
    if (entries[i].trainable && !grads[i].allFinite()) {
      throw RuntimeFault("non-finite gradient for parameter '" + entries[i].name + "'");
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : entries) {
      state.first_moment.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
      state.second_moment.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T step_size = static_cast<T>(c.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(c.eps);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = grads[i];
    m = b1 * m + (T(1) - b1) * g;
    v = (b2 * v.array() + (T(1) - b2) * g.array().square()).matrix();
    entries[i].value.array() -=
        step_size * m.array() / ((v.array().sqrt() * inv_sqrt_bc2) + eps);
  }
}

template <typename T>
double clip_global_norm(std::vector<Matrix<T>>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += static_cast<double>(g.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& g : grads) g *= factor;
  }
  return norm;
}

template void adam_step(ParamStore<float>&, const std::vector<Matrix<float>>&, AdamState<float>&);
template void adam_step(ParamStore<double>&, const std::vector<Matrix<double>>&,
                        AdamState<double>&);
template double clip_global_norm(std::vector<Matrix<float>>&, double);
template double clip_global_norm(std::vector<Matrix<double>>&, double);

}  // namespace tbk::nn
