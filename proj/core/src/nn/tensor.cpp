// SPDX-License-Identifier: Apache-2.0
#include "therblig/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "therblig/error.hpp"

namespace tbk::nn {

std::string Shape::str() const {
  return "(" + std::to_string(rows) + ", " + std::to_string(cols) + ")";
}

namespace {

[[noreturn]] void shape_error(const char* op, Shape a, Shape b) {
  throw ValidationError(std::string(op) + ": incompatible shapes " + a.str() + " and " +
                        b.str());
}

template <typename T>
bool any_grad(std::initializer_list<const Tensor<T>*> xs) {
  for (auto* x : xs)
    if (x->requires_grad()) return true;
  return false;
}

template <typename T>
Tape<T>& same_tape(const Tensor<T>& a, const Tensor<T>& b) {
  if (&a.tape() != &b.tape()) throw ValidationError("tensors belong to different tapes");
  return a.tape();
}

template <typename T>
T sigmoid_scalar(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace

// ---- Tensor / Tape ---------------------------------------------------------

template <typename T>
const Matrix<T>& Tensor<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
const Matrix<T>& Tensor<T>::grad() const {
  return tape_->grad(id_);
}

template <typename T>
Shape Tensor<T>::shape() const {
  const auto& v = value();
  return {v.rows(), v.cols()};
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

template <typename T>
T Tensor<T>::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ValidationError("item() on tensor of shape " + shape().str());
  return v(0, 0);
}

template <typename T>
Tensor<T> Tape<T>::constant(Matrix<T> value) {
  return record(std::move(value), false, nullptr);
}

template <typename T>
Tensor<T> Tape<T>::variable(Matrix<T> value) {
  return record(std::move(value), true, nullptr);
}

template <typename T>
Tensor<T> Tape<T>::record(Matrix<T> value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix<T>(), requires_grad,
                        requires_grad ? std::move(backward) : Backward{}});
  return Tensor<T>(this, nodes_.size() - 1);
}

template <typename T>
const Matrix<T>& Tape<T>::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.grad.size() == 0 ? empty_ : n.grad;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& root) {
  if (&root.tape() != this) throw ValidationError("backward: root from another tape");
  if (root.value().size() != 1)
    throw ValidationError("backward: root must be scalar, got " + root.shape().str());
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Matrix<T>::Ones(1, 1);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
  }
}

// ---- linear algebra --------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  auto& tape = same_tape(a, b);
  if (a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());
  const auto ia = a.id(), ib = b.id();
  return tape.record(a.value() * b.value(), any_grad({&a, &b}),
                     [ia, ib](Tape<T>& t, const Matrix<T>& g) {
                       if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
                       if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
                     });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  auto& tape = same_tape(a, b);
  if (a.cols() != b.cols()) shape_error("matmul_nt", a.shape(), b.shape());
  const auto ia = a.id(), ib = b.id();
  return tape.record(a.value() * b.value().transpose(), any_grad({&a, &b}),
                     [ia, ib](Tape<T>& t, const Matrix<T>& g) {
                       if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
                       if (t.requires_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
                     });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  const auto ia = a.id();
  Matrix<T> v = a.value().transpose();
  return a.tape().record(std::move(v), a.requires_grad(),
                         [ia](Tape<T>& t, const Matrix<T>& g) {
                           t.accumulate(ia, g.transpose());
                         });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  auto& tape = same_tape(a, b);
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  const auto ia = a.id(), ib = b.id();
  return tape.record(a.value() + b.value(), any_grad({&a, &b}),
                     [ia, ib](Tape<T>& t, const Matrix<T>& g) {
                       t.accumulate(ia, g);
                       t.accumulate(ib, g);
                     });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  auto& tape = same_tape(a, b);
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  const auto ia = a.id(), ib = b.id();
  return tape.record(a.value() - b.value(), any_grad({&a, &b}),
                     [ia, ib](Tape<T>& t, const Matrix<T>& g) {
                       t.accumulate(ia, g);
                       t.accumulate(ib, -g);
                     });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  auto& tape = same_tape(a, b);
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  const auto ia = a.id(), ib = b.id();
  return tape.record(a.value().cwiseProduct(b.value()), any_grad({&a, &b}),
                     [ia, ib](Tape<T>& t, const Matrix<T>& g) {
                       if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                       if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                     });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& a, const Tensor<T>& row) {
  auto& tape = same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a.shape(), row.shape());
  const auto ia = a.id(), ir = row.id();
  Matrix<T> v = a.value().rowwise() + row.value().row(0);
  return tape.record(std::move(v), any_grad({&a, &row}),
                     [ia, ir](Tape<T>& t, const Matrix<T>& g) {
                       t.accumulate(ia, g);
                       if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
                     });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return affine(a, factor, T(0));
}

template <typename T>
Tensor<T> affine(const Tensor<T>& a, T factor, T offset) {
  const auto ia = a.id();
  Matrix<T> v = (a.value().array() * factor + offset).matrix();
  return a.tape().record(std::move(v), a.requires_grad(),
                         [ia, factor](Tape<T>& t, const Matrix<T>& g) {
                           t.accumulate(ia, g * factor);
                         });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, Axis axis) {
  if (parts.empty()) throw ValidationError("concat: no inputs");
  auto& tape = parts.front().tape();
  Eigen::Index rows = parts.front().rows(), cols = parts.front().cols();
  bool needs_grad = false;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto s = parts[i].shape();
    if (&parts[i].tape() != &tape) throw ValidationError("concat: mixed tapes");
    if (axis == Axis::Cols) {
      if (s.rows != rows) shape_error("concat", parts.front().shape(), s);
      cols += s.cols;
    } else {
      if (s.cols != cols) shape_error("concat", parts.front().shape(), s);
      rows += s.rows;
    }
  }
  Matrix<T> v(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;  // (id, extent)
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    needs_grad = needs_grad || p.requires_grad();
    const auto& pv = p.value();
    if (axis == Axis::Cols) {
      v.middleCols(offset, pv.cols()) = pv;
      layout.emplace_back(p.id(), pv.cols());
      offset += pv.cols();
    } else {
      v.middleRows(offset, pv.rows()) = pv;
      layout.emplace_back(p.id(), pv.rows());
      offset += pv.rows();
    }
  }
  return tape.record(std::move(v), needs_grad,
                     [layout, axis](Tape<T>& t, const Matrix<T>& g) {
                       Eigen::Index off = 0;
                       for (const auto& [id, extent] : layout) {
                         if (axis == Axis::Cols) {
                           t.accumulate(id, g.middleCols(off, extent));
                         } else {
                           t.accumulate(id, g.middleRows(off, extent));
                         }
                         off += extent;
                       }
                     });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, Axis axis, Eigen::Index start, Eigen::Index count) {
  const auto s = a.shape();
  const auto extent = axis == Axis::Cols ? s.cols : s.rows;
  if (start < 0 || count < 0 || start + count > extent) {
    throw ValidationError("slice [" + std::to_string(start) + ", " +
                          std::to_string(start + count) + ") out of range for shape " + s.str());
  }
  Matrix<T> v = axis == Axis::Cols ? Matrix<T>(a.value().middleCols(start, count))
                                   : Matrix<T>(a.value().middleRows(start, count));
  const auto ia = a.id();
  return a.tape().record(std::move(v), a.requires_grad(),
                         [ia, s, axis, start, count](Tape<T>& t, const Matrix<T>& g) {
                           Matrix<T> full = Matrix<T>::Zero(s.rows, s.cols);
                           if (axis == Axis::Cols) {
                             full.middleCols(start, count) = g;
                           } else {
                             full.middleRows(start, count) = g;
                           }
                           t.accumulate(ia, full);
                         });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Eigen::Index rows, Eigen::Index cols) {
  const auto s = a.shape();
  if (rows * cols != s.rows * s.cols) shape_error("reshape", s, Shape{rows, cols});
  Matrix<T> v = Eigen::Map<const Matrix<T>>(a.value().data(), rows, cols);
  const auto ia = a.id();
  return a.tape().record(std::move(v), a.requires_grad(),
                         [ia, s](Tape<T>& t, const Matrix<T>& g) {
                           t.accumulate(ia, Eigen::Map<const Matrix<T>>(g.data(), s.rows, s.cols));
                         });
}

// ---- element-wise nonlinearities ------------------------------------------

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  Matrix<T> v = a.value().unaryExpr([](T x) { return sigmoid_scalar(x); });
  const auto ia = a.id();
  // Closures recompute from the input rather than holding the output.
  return a.tape().record(std::move(v), a.requires_grad(),
                         [ia](Tape<T>& t, const Matrix<T>& g) {
                           const Matrix<T> y =
                               t.value(ia).unaryExpr([](T x) { return sigmoid_scalar(x); });
                           t.accumulate(ia, (g.array() * y.array() * (T(1) - y.array())).matrix());
                         });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  Matrix<T> v = a.value().array().tanh().matrix();
  const auto ia = a.id();
  return a.tape().record(std::move(v), a.requires_grad(),
                         [ia](Tape<T>& t, const Matrix<T>& g) {
                           const auto y = t.value(ia).array().tanh();
                           t.accumulate(ia, (g.array() * (T(1) - y * y)).matrix());
                         });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Matrix<T> v = a.value().cwiseMax(T(0));
  const auto ia = a.id();
  return a.tape().record(std::move(v), a.requires_grad(),
                         [ia](Tape<T>& t, const Matrix<T>& g) {
                           const auto& x = t.value(ia);
                           t.accumulate(ia, (x.array() > T(0)).select(g, T(0)));
                         });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, Axis axis) {
  if (axis == Axis::Rows) return transpose(softmax(transpose(a), Axis::Cols));
  const auto& x = a.value();
  Matrix<T> y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  Matrix<T> y_copy = y;
  const auto ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(),
                         [ia, y = std::move(y_copy)](Tape<T>& t, const Matrix<T>& g) {
                           Matrix<T> dx(y.rows(), y.cols());
                           for (Eigen::Index r = 0; r < y.rows(); ++r) {
                             const T dot = g.row(r).dot(y.row(r));
                             dx.row(r) = (y.row(r).array() * (g.row(r).array() - dot)).matrix();
                           }
                           t.accumulate(ia, dx);
                         });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias,
                     Axis axis, T eps) {
  if (axis == Axis::Rows) {
    return transpose(layer_norm(transpose(a), transpose(gain), transpose(bias), Axis::Cols, eps));
  }
  const auto& x = a.value();
  const Eigen::Index n = x.rows(), d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d) shape_error("layer_norm gain", a.shape(), gain.shape());
  if (bias.rows() != 1 || bias.cols() != d) shape_error("layer_norm bias", a.shape(), bias.shape());

  Matrix<T> xhat(n, d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mu = x.row(r).mean();
    const T var = (x.row(r).array() - mu).square().mean();
    inv_std(r) = T(1) / std::sqrt(var + eps);
    xhat.row(r) = ((x.row(r).array() - mu) * inv_std(r)).matrix();
  }
  Matrix<T> y = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  y.rowwise() += bias.value().row(0);

  const auto ia = a.id(), ig = gain.id(), ib = bias.id();
  const bool needs = any_grad({&a, &gain, &bias});
  return a.tape().record(
      std::move(y), needs,
      [ia, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t,
                                                                         const Matrix<T>& g) {
        const auto& gv = t.value(ig);
        if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
        if (t.requires_grad(ia)) {
          Matrix<T> dxhat = (g.array().rowwise() * gv.row(0).array()).matrix();
          Matrix<T> dx(dxhat.rows(), dxhat.cols());
          for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
            const T m1 = dxhat.row(r).mean();
            const T m2 = dxhat.row(r).dot(xhat.row(r)) / T(dxhat.cols());
            dx.row(r) = ((dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r))
                            .matrix();
          }
          t.accumulate(ia, dx);
        }
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  Matrix<T> v(1, 1);
  v(0, 0) = a.value().sum();
  const auto ia = a.id();
  const auto s = a.shape();
  return a.tape().record(std::move(v), a.requires_grad(),
                         [ia, s](Tape<T>& t, const Matrix<T>& g) {
                           t.accumulate(ia, Matrix<T>::Constant(s.rows, s.cols, g(0, 0)));
                         });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / T(a.value().size()));
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& probs, const Tensor<T>& targets, T eps) {
  auto& tape = same_tape(probs, targets);
  if (probs.shape() != targets.shape()) shape_error("bce_loss", probs.shape(), targets.shape());
  const auto& p = probs.value();
  const auto& y = targets.value();
  const T lo = eps, hi = T(1) - eps;
  const T count = T(p.size());
  T total = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const T pc = std::clamp(p.data()[i], lo, hi);
    const T yi = y.data()[i];
    total -= yi * std::log(pc) + (T(1) - yi) * std::log(T(1) - pc);
  }
  Matrix<T> v(1, 1);
  v(0, 0) = total / count;
  const auto ip = probs.id(), iy = targets.id();
  return tape.record(std::move(v), any_grad({&probs, &targets}),
                     [ip, iy, lo, hi, count](Tape<T>& t, const Matrix<T>& g) {
                       const auto& pv = t.value(ip);
                       const auto& yv = t.value(iy);
                       const T scale_g = g(0, 0) / count;
                       if (t.requires_grad(ip)) {
                         Matrix<T> dp(pv.rows(), pv.cols());
                         for (Eigen::Index i = 0; i < pv.size(); ++i) {
                           const T pi = pv.data()[i];
                           const T yi = yv.data()[i];
                           dp.data()[i] = (pi < lo || pi > hi)
                                              ? T(0)
                                              : scale_g * (-yi / pi + (T(1) - yi) / (T(1) - pi));
                         }
                         t.accumulate(ip, dp);
                       }
                       if (t.requires_grad(iy)) {
                         Matrix<T> dy(pv.rows(), pv.cols());
                         for (Eigen::Index i = 0; i < pv.size(); ++i) {
                           const T pc = std::clamp(pv.data()[i], lo, hi);
                           dy.data()[i] = -scale_g * (std::log(pc) - std::log(T(1) - pc));
                         }
                         t.accumulate(iy, dy);
                       }
                     });
}

// ---- LSTM ------------------------------------------------------------------

template <typename T>
Tensor<T> lstm_sequence(const Tensor<T>& x, const Tensor<T>& w_input,
                        const Tensor<T>& w_hidden, const Tensor<T>& bias, bool reverse) {
  auto& tape = x.tape();
  const Eigen::Index n = x.rows(), d = x.cols();
  const Eigen::Index h4 = w_input.cols(), hidden = h4 / 4;
  if (w_input.rows() != d || h4 % 4 != 0) shape_error("lstm input weights", x.shape(), w_input.shape());
  if (w_hidden.rows() != hidden || w_hidden.cols() != h4)
    shape_error("lstm hidden weights", w_input.shape(), w_hidden.shape());
  if (bias.rows() != 1 || bias.cols() != h4) shape_error("lstm bias", w_input.shape(), bias.shape());

  const auto& wh = w_hidden.value();
  // Pre-activations from the input path for every step at once.
  Matrix<T> z = x.value() * w_input.value();
  z.rowwise() += bias.value().row(0);

  // Per input-row caches: activated gates [i f g o], cell, tanh(cell).
  Matrix<T> gates(n, h4), cell(n, hidden), cell_tanh(n, hidden), out(n, hidden);
  Eigen::Matrix<T, 1, Eigen::Dynamic> h_prev = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(hidden);
  Eigen::Matrix<T, 1, Eigen::Dynamic> c_prev = h_prev;
  Eigen::Matrix<T, 1, Eigen::Dynamic> pre(h4);
  for (Eigen::Index s = 0; s < n; ++s) {
    const Eigen::Index r = reverse ? n - 1 - s : s;
    pre.noalias() = z.row(r) + h_prev * wh;
    for (Eigen::Index k = 0; k < h4; ++k) {
      const bool is_cell = k >= 2 * hidden && k < 3 * hidden;
      gates(r, k) = is_cell ? std::tanh(pre(k)) : sigmoid_scalar(pre(k));
    }
    const auto ig = gates.row(r).segment(0, hidden).array();
    const auto fg = gates.row(r).segment(hidden, hidden).array();
    const auto gg = gates.row(r).segment(2 * hidden, hidden).array();
    const auto og = gates.row(r).segment(3 * hidden, hidden).array();
    cell.row(r) = (fg * c_prev.array() + ig * gg).matrix();
    cell_tanh.row(r) = cell.row(r).array().tanh().matrix();
    out.row(r) = (og * cell_tanh.row(r).array()).matrix();
    h_prev = out.row(r);
    c_prev = cell.row(r);
  }

  const auto ix = x.id(), iwx = w_input.id(), iwh = w_hidden.id(), ib = bias.id();
  Matrix<T> out_copy = out;
  return tape.record(
      std::move(out_copy), any_grad({&x, &w_input, &w_hidden, &bias}),
      [=, gates = std::move(gates), cell = std::move(cell), cell_tanh = std::move(cell_tanh),
       out = std::move(out)](Tape<T>& t, const Matrix<T>& g) {
        const auto& whv = t.value(iwh);
        Matrix<T> dz(n, h4);
        Matrix<T> dwh = Matrix<T>::Zero(hidden, h4);
        Eigen::Matrix<T, 1, Eigen::Dynamic> dh_next =
            Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(hidden);
        Eigen::Matrix<T, 1, Eigen::Dynamic> dc_next = dh_next;
        Eigen::Matrix<T, 1, Eigen::Dynamic> zero = dh_next;
        for (Eigen::Index s = n; s-- > 0;) {
          const Eigen::Index r = reverse ? n - 1 - s : s;
          const bool first = s == 0;
          const Eigen::Index prev = reverse ? r + 1 : r - 1;
          Eigen::Array<T, 1, Eigen::Dynamic> c_before = zero.array();
          if (!first) c_before = cell.row(prev).array();
          const auto ig = gates.row(r).segment(0, hidden).array();
          const auto fg = gates.row(r).segment(hidden, hidden).array();
          const auto gg = gates.row(r).segment(2 * hidden, hidden).array();
          const auto og = gates.row(r).segment(3 * hidden, hidden).array();
          const auto ct = cell_tanh.row(r).array();

          const Eigen::Array<T, 1, Eigen::Dynamic> dh = (g.row(r) + dh_next).array();
          const auto dc = (dh * og * (T(1) - ct * ct) + dc_next.array()).eval();
          dz.row(r).segment(0, hidden) = (dc * gg * ig * (T(1) - ig)).matrix();
          dz.row(r).segment(hidden, hidden) = (dc * c_before * fg * (T(1) - fg)).matrix();
          dz.row(r).segment(2 * hidden, hidden) = (dc * ig * (T(1) - gg * gg)).matrix();
          dz.row(r).segment(3 * hidden, hidden) = (dh * ct * og * (T(1) - og)).matrix();
          dc_next = (dc * fg).matrix();
          dh_next.noalias() = dz.row(r) * whv.transpose();
          if (!first) dwh.noalias() += out.row(prev).transpose() * dz.row(r);
        }
        if (t.requires_grad(iwh)) t.accumulate(iwh, dwh);
        if (t.requires_grad(ib)) t.accumulate(ib, dz.colwise().sum());
        if (t.requires_grad(iwx)) t.accumulate(iwx, t.value(ix).transpose() * dz);
        if (t.requires_grad(ix)) t.accumulate(ix, dz * t.value(iwx).transpose());
      });
}

template <typename T>
bool all_finite(const Tensor<T>& a) {
  return a.value().allFinite();
}

// ---- explicit instantiations ----------------------------------------------

#define TBK_INSTANTIATE(T)                                                                  \
  template class Tensor<T>;                                                                 \
  template class Tape<T>;                                                                   \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> transpose(const Tensor<T>&);                                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> add_row(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> affine(const Tensor<T>&, T, T);                                        \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, Axis);                           \
  template Tensor<T> slice(const Tensor<T>&, Axis, Eigen::Index, Eigen::Index);             \
  template Tensor<T> reshape(const Tensor<T>&, Eigen::Index, Eigen::Index);                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                             \
  template Tensor<T> tanh(const Tensor<T>&);                                                \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template Tensor<T> softmax(const Tensor<T>&, Axis);                                       \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Axis, \
                                T);                                                         \
  template Tensor<T> sum(const Tensor<T>&);                                                 \
  template Tensor<T> mean(const Tensor<T>&);                                                \
  template Tensor<T> bce_loss(const Tensor<T>&, const Tensor<T>&, T);                       \
  template Tensor<T> lstm_sequence(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                   const Tensor<T>&, bool);                                 \
  template bool all_finite(const Tensor<T>&);

TBK_INSTANTIATE(float)
TBK_INSTANTIATE(double)

#undef TBK_INSTANTIATE

}  // namespace tbk::nn
