// SPDX-License-Identifier: Apache-2.0
#include "therblig/nn/layers.hpp"

#include <cmath>
#include <string>

#include "therblig/error.hpp"

namespace tbk::nn {

template <typename T>
LstmState<T> lstm_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                       const LstmParams<T>& p) {
  const auto hidden = p.w_hidden.rows();
  if (h_prev.cols() != hidden || c_prev.cols() != hidden) {
    throw ValidationError("lstm_cell: state shape " + h_prev.shape().str() +
                          " does not match hidden weights " + p.w_hidden.shape().str());
  }
  auto z = add_row(add(matmul(x, p.w_input), matmul(h_prev, p.w_hidden)), p.bias);
  auto i = sigmoid(slice(z, Axis::Cols, 0, hidden));
  auto f = sigmoid(slice(z, Axis::Cols, hidden, hidden));
  auto g = tanh(slice(z, Axis::Cols, 2 * hidden, hidden));
  auto o = sigmoid(slice(z, Axis::Cols, 3 * hidden, hidden));
  auto c = add(mul(f, c_prev), mul(i, g));
  auto h = mul(o, tanh(c));
  return {h, c};
}

template <typename T>
Tensor<T> bilstm_layer(const Tensor<T>& x, const LstmParams<T>& forward,
                       const LstmParams<T>& backward) {
  auto hf = lstm_sequence(x, forward.w_input, forward.w_hidden, forward.bias, false);
  auto hb = lstm_sequence(x, backward.w_input, backward.w_hidden, backward.bias, true);
  return concat<T>({hf, hb}, Axis::Cols);
}

template <typename T>
Matrix<T> positional_encoding(Eigen::Index n, Eigen::Index d_model, Eigen::Index offset) {
  Matrix<T> pe(n, d_model);
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    for (Eigen::Index k = 0; k < d_model; ++k) {
      const double rate = std::pow(10000.0, -static_cast<double>(k - k % 2) /
                                                static_cast<double>(d_model));
      const double angle = static_cast<double>(pos + offset) * rate;
      pe(pos, k) = static_cast<T>(k % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Tensor<T> multihead_attention(const Tensor<T>& x, int heads, const AttentionParams<T>& p,
                              std::vector<Matrix<T>>* weights) {
  const auto d_model = x.cols();
  if (heads <= 0 || d_model % heads != 0) {
    throw ValidationError("multihead_attention: d_model " + std::to_string(d_model) +
                          " not divisible by heads " + std::to_string(heads));
  }
  const auto d_head = d_model / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(d_head));
  auto q = add_row(matmul(x, p.wq), p.bq);
  auto k = add_row(matmul(x, p.wk), p.bk);
  auto v = add_row(matmul(x, p.wv), p.bv);
  std::vector<Tensor<T>> outputs;
  outputs.reserve(static_cast<std::size_t>(heads));
  if (weights) weights->clear();
  for (int h = 0; h < heads; ++h) {
    auto qh = slice(q, Axis::Cols, h * d_head, d_head);
    auto kh = slice(k, Axis::Cols, h * d_head, d_head);
    auto vh = slice(v, Axis::Cols, h * d_head, d_head);
    auto attn = softmax(scale(matmul_nt(qh, kh), inv_sqrt), Axis::Cols);
    if (weights) weights->push_back(attn.value());
    outputs.push_back(matmul(attn, vh));
  }
  auto merged = heads == 1 ? outputs.front() : concat(outputs, Axis::Cols);
  return add_row(matmul(merged, p.wo), p.bo);
}

template <typename T>
Tensor<T> encoder_block(const Tensor<T>& x, int heads, const EncoderBlockParams<T>& p) {
  auto a = multihead_attention(x, heads, p.attention);
  auto y = layer_norm(add(x, a), p.ln1_gain, p.ln1_bias);
  auto hidden = relu(add_row(matmul(y, p.ffn_w1), p.ffn_b1));
  auto f = add_row(matmul(hidden, p.ffn_w2), p.ffn_b2);
  return layer_norm(add(y, f), p.ln2_gain, p.ln2_bias);
}

#define TBK_INSTANTIATE(T)                                                                \
  template LstmState<T> lstm_cell(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                  const LstmParams<T>&);                                  \
  template Tensor<T> bilstm_layer(const Tensor<T>&, const LstmParams<T>&,                \
                                  const LstmParams<T>&);                                  \
  template Matrix<T> positional_encoding<T>(Eigen::Index, Eigen::Index, Eigen::Index);    \
  template Tensor<T> multihead_attention(const Tensor<T>&, int, const AttentionParams<T>&, \
                                         std::vector<Matrix<T>>*);                        \
  template Tensor<T> encoder_block(const Tensor<T>&, int, const EncoderBlockParams<T>&);

TBK_INSTANTIATE(float)
TBK_INSTANTIATE(double)

#undef TBK_INSTANTIATE

}  // namespace tbk::nn
