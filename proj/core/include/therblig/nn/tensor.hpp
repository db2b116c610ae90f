// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every op executed against it. Tensor is a cheap handle
// (tape pointer + node index) to a recorded value. Calling backward() on a
// scalar walks the nodes in reverse creation order, which is a reverse
// topological order because an op can only consume nodes that already
// exist. Everything is templated on the scalar so the same graph code runs
// in float for training and in double for gradient checking.
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace tbk::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Shape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

enum class Axis { Rows = 0, Cols = 1 };

template <typename T>
class Tape;

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Matrix<T>& value() const;
  const Matrix<T>& grad() const;
  Shape shape() const;
  Eigen::Index rows() const { return shape().rows; }
  Eigen::Index cols() const { return shape().cols; }
  bool requires_grad() const;
  /// Value of a 1x1 tensor.
  T item() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  /// Receives the gradient flowing into this node's output.
  using Backward = std::function<void(Tape&, const Matrix<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<T> constant(Matrix<T> value);
  /// Leaf that accumulates a gradient.
  Tensor<T> variable(Matrix<T> value);

  /// Records an op result. `requires_grad` should be the OR over inputs.
  Tensor<T> record(Matrix<T> value, bool requires_grad, Backward backward);

  /// Seeds d(root)/d(root) = 1 and runs every backward closure once.
  void backward(const Tensor<T>& root);

  const Matrix<T>& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix<T>& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// grad(id) += delta, allocating on first use. No-op for constants.
  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
  Matrix<T> empty_;
};

// ---- primitives -----------------------------------------------------------
// Shape errors throw ValidationError naming both shapes.

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a * b^T without materializing the transpose.
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
/// Adds a 1 x c row to every row of an r x c matrix.
template <typename T> Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
/// factor * a + offset, element-wise.
template <typename T> Tensor<T> affine(const Tensor<T>& a, T factor, T offset);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, Axis axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& a, Axis axis, Eigen::Index start, Eigen::Index count);
/// Reinterprets row-major storage with a new shape.
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Eigen::Index rows, Eigen::Index cols);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> softmax(const Tensor<T>& a, Axis axis = Axis::Cols);
/// Normalizes along `axis` to zero mean / unit variance, then applies
/// per-feature gain and bias (vectors along `axis`).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias,
                     Axis axis = Axis::Cols, T eps = T(1e-5));
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

/// Mean over all elements of -[y ln p + (1-y) ln(1-p)], p clamped to
/// [eps, 1-eps]. Gradient is zero where the clamp is active.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& probs, const Tensor<T>& targets, T eps = T(1e-7));

/// Whole-sequence LSTM with hand-written backpropagation through time.
/// x: n x d, w_input: d x 4H, w_hidden: H x 4H, bias: 1 x 4H, gate order
/// [input, forget, cell, output]. Returns n x H hidden states. With
/// `reverse` the sequence is consumed from the last step to the first and
/// row t of the output is still the state at input row t.
template <typename T>
Tensor<T> lstm_sequence(const Tensor<T>& x, const Tensor<T>& w_input,
                        const Tensor<T>& w_hidden, const Tensor<T>& bias, bool reverse);

/// True if every value is finite.
template <typename T> bool all_finite(const Tensor<T>& a);

}  // namespace tbk::nn
