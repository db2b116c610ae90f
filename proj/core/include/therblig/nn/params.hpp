// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "therblig/error.hpp"
#include "therblig/nn/tensor.hpp"
#include "therblig/rng.hpp"

namespace tbk::nn {

template <typename T>
struct Param {
  std::string name;
  Matrix<T> value;
  bool trainable = true;
};

/// Ordered, named parameter collection. Order is insertion order and is
/// what checkpoints and optimizer state are aligned to.
template <typename T>
class ParamStore {
 public:
  Param<T>& add(std::string name, Matrix<T> value, bool trainable = true) {
    if (index_of(name) != npos) throw ValidationError("duplicate parameter '" + name + "'");
    entries_.push_back({std::move(name), std::move(value), trainable});
    return entries_.back();
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    return npos;
  }
  bool contains(const std::string& name) const { return index_of(name) != npos; }

  const Param<T>& at(const std::string& name) const {
    const auto i = index_of(name);
    if (i == npos) throw ValidationError("unknown parameter '" + name + "'");
    return entries_[i];
  }
  Param<T>& at(const std::string& name) {
    return const_cast<Param<T>&>(std::as_const(*this).at(name));
  }

  std::vector<Param<T>>& entries() { return entries_; }
  const std::vector<Param<T>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count(bool trainable_only = false) const {
    std::size_t n = 0;
    for (const auto& p : entries_)
      if (!trainable_only || p.trainable) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : entries_) out.add(p.name, p.value.template cast<U>(), p.trainable);
    return out;
  }

 private:
  std::vector<Param<T>> entries_;
};

/// Materializes every parameter of a store as a leaf on one tape.
template <typename T>
class Binding {
 public:
  /// With `frozen` every parameter is a constant (inference).
  Binding(Tape<T>& tape, const ParamStore<T>& store, bool frozen = false) : store_(&store) {
    leaves_.reserve(store.size());
    for (const auto& p : store.entries())
      leaves_.push_back(p.trainable && !frozen ? tape.variable(p.value) : tape.constant(p.value));
  }

  const Tensor<T>& operator[](const std::string& name) const {
    const auto i = store_->index_of(name);
    if (i == ParamStore<T>::npos) throw ValidationError("unbound parameter '" + name + "'");
    return leaves_[i];
  }
  bool contains(const std::string& name) const { return store_->contains(name); }

  /// Gradients aligned with the store; zeros where nothing flowed.
  std::vector<Matrix<T>> gradients() const {
    std::vector<Matrix<T>> out;
    out.reserve(leaves_.size());
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
      const auto& g = leaves_[i].grad();
      const auto& v = store_->entries()[i].value;
      out.push_back(g.size() == 0 ? Matrix<T>::Zero(v.rows(), v.cols()) : g);
    }
    return out;
  }

 private:
  const ParamStore<T>* store_;
  std::vector<Tensor<T>> leaves_;
};

/// Glorot-uniform initialization.
Matrix<float> xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                             double gain = 1.0);
Matrix<float> normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double stddev);

}  // namespace tbk::nn
