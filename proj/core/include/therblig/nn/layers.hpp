// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "therblig/nn/tensor.hpp"

namespace tbk::nn {

/// Gate layout of the packed weights is [input, forget, cell, output].
template <typename T>
struct LstmParams {
  Tensor<T> w_input;   // d x 4H
  Tensor<T> w_hidden;  // H x 4H
  Tensor<T> bias;      // 1 x 4H
};

template <typename T>
struct LstmState {
  Tensor<T> h;
  Tensor<T> c;
};

/// One LSTM step composed from primitives. Reference for lstm_sequence.
template <typename T>
LstmState<T> lstm_cell(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                       const LstmParams<T>& p);

/// Forward and backward LSTM passes concatenated per timestep: n x 2H.
template <typename T>
Tensor<T> bilstm_layer(const Tensor<T>& x, const LstmParams<T>& forward,
                       const LstmParams<T>& backward);

/// Sinusoidal encoding for absolute positions offset .. offset+n-1.
template <typename T>
Matrix<T> positional_encoding(Eigen::Index n, Eigen::Index d_model, Eigen::Index offset = 0);

template <typename T>
struct AttentionParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;  // d x d and 1 x d
};

/// Scaled dot-product attention over `heads` equal slices of d_model.
/// When `weights` is non-null it receives one n x n matrix per head.
template <typename T>
Tensor<T> multihead_attention(const Tensor<T>& x, int heads, const AttentionParams<T>& p,
                              std::vector<Matrix<T>>* weights = nullptr);

template <typename T>
struct EncoderBlockParams {
  AttentionParams<T> attention;
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor<T> ln2_gain, ln2_bias;
};

/// Post-norm encoder block: LN(x + MHA(x)) then LN(y + FFN(y)).
template <typename T>
Tensor<T> encoder_block(const Tensor<T>& x, int heads, const EncoderBlockParams<T>& p);

}  // namespace tbk::nn
