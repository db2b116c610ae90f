// SPDX-License-Identifier: Apache-2.0
#include "therblig/nn/params.hpp"

#include <cmath>

namespace tbk::nn {

Matrix<float> xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix<float> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<float>(rng.uniform(-limit, limit));
  return m;
}

Matrix<float> normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev) {
  Matrix<float> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<float>(rng.normal(0.0, stddev));
  return m;
}

}  // namespace tbk::nn
