// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations shared by the unit and acceptance
// tests.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "therblig/domain.hpp"
#include "therblig/mgsf.hpp"
#include "therblig/nn/gradcheck.hpp"
#include "therblig/nn/layers.hpp"
#include "therblig/nn/params.hpp"
#include "therblig/nn/tensor.hpp"
#include "therblig/rng.hpp"

namespace tbk::testing {

using namespace tbk::nn;
using Md = Matrix<double>;
using Td = Tensor<double>;

inline Md random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Md m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, scale);
  return m;
}

// Weighted sum against a fixed random matrix so every output element
// carries a distinct upstream gradient.
inline Td project(const Td& out, const Md& weights) {
  return sum(mul(out, out.tape().constant(weights)));
}

using Build = std::function<Td(const Binding<double>&, const Md& proj)>;

struct Case {
  std::string name;
  std::map<std::string, std::pair<Eigen::Index, Eigen::Index>> params;
  std::pair<Eigen::Index, Eigen::Index> out;  // {0, 0} for scalar ops
  Build build;
  double scale = 1.0;
};

inline double check_case(const Case& c, std::uint64_t seed) {
  Rng rng(derive_seed(seed, c.name));
  ParamStore<double> store;
  for (const auto& [name, shape] : c.params)
    store.add(name, random_matrix(rng, shape.first, shape.second, c.scale));
  const Md proj = c.out.first > 0 ? random_matrix(rng, c.out.first, c.out.second) : Md();
  auto f = [&](Tape<double>&, const Binding<double>& b) {
    auto out = c.build(b, proj);
    return c.out.first > 0 ? project(out, proj) : out;
  };
  GradCheckOptions opt;
  opt.seed = seed;
  const auto r = grad_check(f, store, opt);
  return r.max_rel_error;
}

inline std::vector<Case> primitive_cases() {
  using S = std::pair<Eigen::Index, Eigen::Index>;
  std::vector<Case> cs;
  cs.push_back({"matmul", {{"a", S{3, 4}}, {"b", S{4, 2}}}, {3, 2},
                [](const Binding<double>& p, const Md&) { return matmul(p["a"], p["b"]); }});
  cs.push_back({"matmul_nt", {{"a", S{3, 4}}, {"b", S{2, 4}}}, {3, 2},
                [](const Binding<double>& p, const Md&) { return matmul_nt(p["a"], p["b"]); }});
  cs.push_back({"transpose", {{"a", S{3, 4}}}, {4, 3},
                [](const Binding<double>& p, const Md&) { return transpose(p["a"]); }});
  cs.push_back({"add", {{"a", S{3, 4}}, {"b", S{3, 4}}}, {3, 4},
                [](const Binding<double>& p, const Md&) { return add(p["a"], p["b"]); }});
  cs.push_back({"sub", {{"a", S{3, 4}}, {"b", S{3, 4}}}, {3, 4},
                [](const Binding<double>& p, const Md&) { return sub(p["a"], p["b"]); }});
  cs.push_back({"mul", {{"a", S{3, 4}}, {"b", S{3, 4}}}, {3, 4},
                [](const Binding<double>& p, const Md&) { return mul(p["a"], p["b"]); }});
  cs.push_back({"add_row", {{"a", S{3, 4}}, {"r", S{1, 4}}}, {3, 4},
                [](const Binding<double>& p, const Md&) { return add_row(p["a"], p["r"]); }});
  cs.push_back({"scale", {{"a", S{3, 4}}}, {3, 4},
                [](const Binding<double>& p, const Md&) { return scale(p["a"], -1.7); }});
  cs.push_back({"affine", {{"a", S{3, 4}}}, {3, 4},
                [](const Binding<double>& p, const Md&) { return affine(p["a"], 0.3, 2.0); }});
  cs.push_back({"concat_cols", {{"a", S{3, 2}}, {"b", S{3, 3}}}, {3, 5},
                [](const Binding<double>& p, const Md&) {
                  return concat<double>({p["a"], p["b"]}, Axis::Cols);
                }});
  cs.push_back({"concat_rows", {{"a", S{2, 3}}, {"b", S{4, 3}}}, {6, 3},
                [](const Binding<double>& p, const Md&) {
                  return concat<double>({p["a"], p["b"]}, Axis::Rows);
                }});
  cs.push_back({"slice_cols", {{"a", S{3, 6}}}, {3, 2},
                [](const Binding<double>& p, const Md&) { return slice(p["a"], Axis::Cols, 3, 2); }});
  cs.push_back({"slice_rows", {{"a", S{5, 3}}}, {2, 3},
                [](const Binding<double>& p, const Md&) { return slice(p["a"], Axis::Rows, 1, 2); }});
  cs.push_back({"reshape", {{"a", S{3, 4}}}, {2, 6},
                [](const Binding<double>& p, const Md&) { return reshape(p["a"], 2, 6); }});
  cs.push_back({"sigmoid", {{"a", S{3, 4}}}, {3, 4},
                [](const Binding<double>& p, const Md&) { return sigmoid(p["a"]); }});
  cs.push_back({"tanh", {{"a", S{3, 4}}}, {3, 4},
                [](const Binding<double>& p, const Md&) { return tanh(p["a"]); }});
  cs.push_back({"relu", {{"a", S{3, 4}}}, {3, 4},
                [](const Binding<double>& p, const Md&) { return relu(p["a"]); }});
  cs.push_back({"softmax_cols", {{"a", S{3, 5}}}, {3, 5},
                [](const Binding<double>& p, const Md&) { return softmax(p["a"], Axis::Cols); }});
  cs.push_back({"softmax_rows", {{"a", S{4, 3}}}, {4, 3},
                [](const Binding<double>& p, const Md&) { return softmax(p["a"], Axis::Rows); }});
  cs.push_back({"layer_norm_cols", {{"a", S{3, 5}}, {"g", S{1, 5}}, {"b", S{1, 5}}}, {3, 5},
                [](const Binding<double>& p, const Md&) {
                  return layer_norm(p["a"], p["g"], p["b"], Axis::Cols);
                }});
  cs.push_back({"layer_norm_rows", {{"a", S{4, 3}}, {"g", S{4, 1}}, {"b", S{4, 1}}}, {4, 3},
                [](const Binding<double>& p, const Md&) {
                  return layer_norm(p["a"], p["g"], p["b"], Axis::Rows);
                }});
  cs.push_back({"sum", {{"a", S{3, 4}}}, {0, 0},
                [](const Binding<double>& p, const Md&) { return sum(mul(p["a"], p["a"])); }});
  cs.push_back({"mean", {{"a", S{3, 4}}}, {0, 0},
                [](const Binding<double>& p, const Md&) { return mean(mul(p["a"], p["a"])); }});
  cs.push_back({"bce_loss", {{"a", S{4, 7}}, {"y", S{4, 7}}}, {0, 0},
                [](const Binding<double>& p, const Md&) {
                  return bce_loss(softmax(p["a"]), sigmoid(p["y"]));
                }});
  cs.push_back({"lstm_sequence", {{"x", S{5, 4}}, {"wi", S{4, 12}}, {"wh", S{3, 12}}, {"b", S{1, 12}}},
                {5, 3},
                [](const Binding<double>& p, const Md&) {
                  return lstm_sequence(p["x"], p["wi"], p["wh"], p["b"], false);
                },
                0.7});
  cs.push_back({"lstm_sequence_reverse",
                {{"x", S{5, 4}}, {"wi", S{4, 12}}, {"wh", S{3, 12}}, {"b", S{1, 12}}},
                {5, 3},
                [](const Binding<double>& p, const Md&) {
                  return lstm_sequence(p["x"], p["wi"], p["wh"], p["b"], true);
                },
                0.7});
  cs.push_back({"lstm_cell",
                {{"x", S{1, 4}}, {"h", S{1, 3}}, {"c", S{1, 3}}, {"wi", S{4, 12}}, {"wh", S{3, 12}},
                 {"b", S{1, 12}}},
                {1, 6},
                [](const Binding<double>& p, const Md&) {
                  auto s = lstm_cell(p["x"], p["h"], p["c"], {p["wi"], p["wh"], p["b"]});
                  return concat<double>({s.h, s.c}, Axis::Cols);
                },
                0.7});
  cs.push_back({"bilstm_layer",
                {{"x", S{5, 4}}, {"fi", S{4, 12}}, {"fh", S{3, 12}}, {"fb", S{1, 12}}, {"bi", S{4, 12}},
                 {"bh", S{3, 12}}, {"bb", S{1, 12}}},
                {5, 6},
                [](const Binding<double>& p, const Md&) {
                  return bilstm_layer(p["x"], {p["fi"], p["fh"], p["fb"]}, {p["bi"], p["bh"], p["bb"]});
                },
                0.7});
  auto att = [](const Binding<double>& p) {
    return AttentionParams<double>{p["wq"], p["bq"], p["wk"], p["bk"], p["wv"], p["bv"], p["wo"], p["bo"]};
  };
  std::map<std::string, S> att_shapes{{"x", S{4, 8}},  {"wq", S{8, 8}}, {"bq", S{1, 8}}, {"wk", S{8, 8}},
                                      {"bk", S{1, 8}}, {"wv", S{8, 8}}, {"bv", S{1, 8}}, {"wo", S{8, 8}},
                                      {"bo", S{1, 8}}};
  cs.push_back({"multihead_attention", att_shapes, {4, 8},
                [att](const Binding<double>& p, const Md&) { return multihead_attention(p["x"], 2, att(p)); },
                0.5});
  auto enc_shapes = att_shapes;
  for (const char* k : {"g1", "b1", "g2", "b2", "fb2"}) enc_shapes[k] = S{1, 8};
  enc_shapes["fw1"] = S{8, 6};
  enc_shapes["fb1"] = S{1, 6};
  enc_shapes["fw2"] = S{6, 8};
  cs.push_back({"encoder_block", enc_shapes, {4, 8},
                [att](const Binding<double>& p, const Md&) {
                  EncoderBlockParams<double> e{att(p), p["g1"], p["b1"], p["fw1"], p["fb1"],
                                               p["fw2"], p["fb2"], p["g2"], p["b2"]};
                  return encoder_block(p["x"], 2, e);
                },
                0.5});
  return cs;
}

// ---- network forward pass ----------------------------------------------------

inline mgsf::MgsfConfig toy_config(mgsf::Variant v) {
  mgsf::MgsfConfig c;
  c.lstm_hidden = 4;
  c.d_model = 8;
  c.encoder_layers = 1;
  c.heads = 2;
  c.ffn_hidden = 8;
  c.fusion_steps = 2;
  c.meta_dim = 4;
  c.meta_hidden = 8;
  c.variant = v;
  return c;
}

// Worst relative gradient error of the toy network for one seed.
inline double forward_grad_error(mgsf::Variant v, std::uint64_t seed) {
  const auto cfg = toy_config(v);
  const auto model = mgsf::init_model(cfg, seed);
  Rng rng(derive_seed(seed, "x"));
  const Md x = random_matrix(rng, 6, cfg.d_input);
  const Md proj = random_matrix(rng, 6, kNumTherbligs);
  auto f = [&](Tape<double>& tape, const Binding<double>& b) {
    const auto probs = mgsf::forward_graph(cfg, b, tape.constant(x), 0, false);
    return sum(mul(probs, tape.constant(proj)));
  };
  GradCheckOptions opt;
  opt.seed = seed;
  return grad_check(f, model.params.cast<double>(), opt).max_rel_error;
}

// ---- fusion and metrics -------------------------------------------------------

inline double sigmoid_scalar(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Hand-rolled recursion over plain vectors: G = sigmoid(c W + b),
// F <- G*c + (1-G)*F, repeated `steps` times.
inline std::vector<double> fusion_oracle(const Md& c, const Md& w, const Md& b, int steps, mgsf::FusionInit init) {
  const auto d = static_cast<std::size_t>(c.cols());
  std::vector<double> g(d), f(d);
  for (std::size_t j = 0; j < d; ++j) {
    double z = b(0, static_cast<Eigen::Index>(j));
    for (std::size_t i = 0; i < d; ++i)
      z += c(0, static_cast<Eigen::Index>(i)) * w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    g[j] = sigmoid_scalar(z);
    f[j] = init == mgsf::FusionInit::Input ? c(0, static_cast<Eigen::Index>(j)) : 0.0;
  }
  for (int s = 0; s < steps; ++s)
    for (std::size_t j = 0; j < d; ++j) f[j] = g[j] * c(0, static_cast<Eigen::Index>(j)) + (1.0 - g[j]) * f[j];
  return f;
}

inline Md run_fusion(const Md& c, const Md& w, const Md& b, int steps, mgsf::FusionInit init) {
  nn::Tape<double> tape;
  mgsf::GateParams<double> g{tape.constant(w), tape.constant(b)};
  return mgsf::recursive_gated_fusion(tape.constant(c), g, steps, init).value();
}

struct Scores {
  double precision, recall, f1, kappa;
};

// Contingency counts in nested scalar loops, then the textbook formulas.
inline Scores metrics_oracle(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth) {
  long long n[7][7] = {};
  long long total = 0;
  for (std::size_t s = 0; s < pred.size(); ++s)
    for (std::size_t t = 0; t < pred[s].size(); ++t) {
      ++n[truth[s][t]][pred[s][t]];
      ++total;
    }
  double ps = 0, rs = 0, fs = 0;
  int present = 0;
  for (int k = 0; k < 7; ++k) {
    long long support = 0, predicted = 0;
    for (int j = 0; j < 7; ++j) {
      support += n[k][j];
      predicted += n[j][k];
    }
    if (support == 0) continue;
    ++present;
    const double p = predicted == 0 ? 0.0 : static_cast<double>(n[k][k]) / static_cast<double>(predicted);
    const double r = static_cast<double>(n[k][k]) / static_cast<double>(support);
    ps += p;
    rs += r;
    fs += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  double po = 0, pe = 0;
  for (int k = 0; k < 7; ++k) {
    long long row = 0, col = 0;
    for (int j = 0; j < 7; ++j) {
      row += n[k][j];
      col += n[j][k];
    }
    po += static_cast<double>(n[k][k]);
    pe += static_cast<double>(row) * static_cast<double>(col);
  }
  po /= static_cast<double>(total);
  pe /= static_cast<double>(total) * static_cast<double>(total);
  const double kappa = pe >= 1.0 ? (po >= 1.0 ? 100.0 : 0.0) : 100.0 * (po - pe) / (1.0 - pe);
  return {100.0 * ps / present, 100.0 * rs / present, 100.0 * fs / present, kappa};
}

inline std::vector<LabelSequence> to_labels(const std::vector<std::vector<int>>& codes) {
  std::vector<LabelSequence> out;
  for (const auto& c : codes) out.push_back(LabelSequence::from_codes(c));
  return out;
}

}  // namespace tbk::testing
