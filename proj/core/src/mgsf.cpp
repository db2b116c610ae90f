// SPDX-License-Identifier: Apache-2.0
#include "therblig/mgsf.hpp"

#include <algorithm>
#include <cmath>

#include "therblig/error.hpp"
#include "therblig/nn/layers.hpp"
#include "therblig/rng.hpp"

namespace tbk::mgsf {

using nn::Binding;
using nn::Matrix;
using nn::Tensor;

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoMeta: return "no_meta";
    case Variant::NoGate: return "no_gate";
    case Variant::Backbone: return "backbone";
  }
  return "full";
}

Variant variant_from_name(std::string_view name) {
  for (auto v : kAllVariants)
    if (variant_name(v) == name) return v;
  throw ValidationError("unknown variant '" + std::string(name) +
                        "' (expected full, no_meta, no_gate or backbone)");
}

int MgsfConfig::fusion_dim() const {
  return variant == Variant::Backbone ? d_model : 2 * lstm_hidden + d_model;
}

void MgsfConfig::validate() const {
  if (d_input != kNumFeatures) throw ValidationError("d_input must be 26");
  if (lstm_hidden < 1 || d_model < 1 || ffn_hidden < 1 || meta_hidden < 1 || meta_dim < 1)
    throw ValidationError("layer sizes must be positive");
  if (encoder_layers < 1) throw ValidationError("encoder_layers must be >= 1");
  if (heads < 1 || d_model % heads != 0)
    throw ValidationError("d_model " + std::to_string(d_model) + " is not divisible by heads " +
                          std::to_string(heads));
  if (fusion_steps < 1) throw ValidationError("fusion_steps must be >= 1");
  if (epochs < 1 || batch_size < 1 || patience < 1) throw ValidationError("epochs, batch_size and patience must be >= 1");
  if (!(lr > 0)) throw ValidationError("lr must be > 0");
  if (crop_length < 0) throw ValidationError("crop_length must be >= 0");
  if (smoothing_window < 1 || smoothing_window % 2 == 0)
    throw ValidationError("smoothing_window must be odd and >= 1");
}

MgsfConfig MgsfConfig::from_config(const ConfigFile& cfg) {
  MgsfConfig c;
  auto i = [&](const char* k, int& v) { v = static_cast<int>(cfg.get_int(k, v)); };
  i("lstm_hidden", c.lstm_hidden);
  i("d_model", c.d_model);
  i("encoder_layers", c.encoder_layers);
  i("heads", c.heads);
  i("ffn_hidden", c.ffn_hidden);
  i("fusion_steps", c.fusion_steps);
  i("meta_dim", c.meta_dim);
  i("meta_hidden", c.meta_hidden);
  i("epochs", c.epochs);
  i("batch_size", c.batch_size);
  i("patience", c.patience);
  i("crop_length", c.crop_length);
  i("smoothing_window", c.smoothing_window);
  i("threads", c.threads);
  c.lr = cfg.get_double("lr", c.lr);
  c.clip_norm = cfg.get_double("clip_norm", c.clip_norm);
  c.variant = variant_from_name(cfg.get_string("variant", "full"));
  const auto init = cfg.get_string("fusion_init", "zeros");
  if (init == "zeros") {
    c.fusion_init = FusionInit::Zeros;
  } else if (init == "input") {
    c.fusion_init = FusionInit::Input;
  } else {
    throw ValidationError("fusion_init must be 'zeros' or 'input'");
  }
  c.validate();
  return c;
}

ConfigFile MgsfConfig::to_config() const {
  ConfigFile c;
  auto i = [&](const char* k, int v) { c.set(k, std::to_string(v)); };
  i("lstm_hidden", lstm_hidden);
  i("d_model", d_model);
  i("encoder_layers", encoder_layers);
  i("heads", heads);
  i("ffn_hidden", ffn_hidden);
  i("fusion_steps", fusion_steps);
  i("meta_dim", meta_dim);
  i("meta_hidden", meta_hidden);
  i("epochs", epochs);
  i("batch_size", batch_size);
  i("patience", patience);
  i("crop_length", crop_length);
  i("smoothing_window", smoothing_window);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", lr);
  c.set("lr", buf);
  std::snprintf(buf, sizeof buf, "%.17g", clip_norm);
  c.set("clip_norm", buf);
  c.set("variant", std::string(variant_name(variant)));
  c.set("fusion_init", fusion_init == FusionInit::Zeros ? "zeros" : "input");
  return c;
}

// ---- initialization ------------------------------------------------------------

MgsfModel init_model(const MgsfConfig& config, std::uint64_t seed) {
  config.validate();
  MgsfModel m;
  m.config = config;
  auto& ps = m.params;
  const int d = config.d_input, H = config.lstm_hidden, D = config.d_model;
  const int dc = config.fusion_dim();
  auto stream = [&](const std::string& group) { return Rng(derive_seed(seed, "init/" + group)); };
  auto zeros = [](Eigen::Index r, Eigen::Index c) { return Matrix<float>::Zero(r, c).eval(); };
  auto ones = [](Eigen::Index r, Eigen::Index c) { return Matrix<float>::Ones(r, c).eval(); };

  ps.add("norm.mean", zeros(1, d), false);
  ps.add("norm.std", ones(1, d), false);

  if (config.variant != Variant::Backbone) {
    for (const char* dir : {"fw", "bw"}) {
      auto rng = stream(std::string("lstm.") + dir);
      const std::string p = std::string("lstm.") + dir + ".";
      ps.add(p + "wi", nn::xavier_uniform(d, 4 * H, rng));
      ps.add(p + "wh", nn::xavier_uniform(H, 4 * H, rng));
      Matrix<float> b = zeros(1, 4 * H);
      b.block(0, H, 1, H).setOnes();  // forget gate
      ps.add(p + "b", b);
    }
  }

  {
    auto rng = stream("proj");
    ps.add("proj.w", nn::xavier_uniform(d, D, rng));
    ps.add("proj.b", zeros(1, D));
  }
  for (int l = 0; l < config.encoder_layers; ++l) {
    const std::string p = "enc" + std::to_string(l) + ".";
    auto rng = stream("enc" + std::to_string(l));
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      ps.add(p + "att." + w, nn::xavier_uniform(D, D, rng));
      ps.add(p + "att.b" + std::string(w + 1), zeros(1, D));
    }
    ps.add(p + "ln1.g", ones(1, D));
    ps.add(p + "ln1.b", zeros(1, D));
    ps.add(p + "ffn.w1", nn::xavier_uniform(D, config.ffn_hidden, rng));
    ps.add(p + "ffn.b1", zeros(1, config.ffn_hidden));
    ps.add(p + "ffn.w2", nn::xavier_uniform(config.ffn_hidden, D, rng));
    ps.add(p + "ffn.b2", zeros(1, D));
    ps.add(p + "ln2.g", ones(1, D));
    ps.add(p + "ln2.b", zeros(1, D));
  }

  switch (config.variant) {
    case Variant::Full: {
      auto rng = stream("meta");
      const int hm = config.meta_hidden;
      ps.add("meta.M", nn::normal_matrix(1, config.meta_dim, rng, 1.0));
      ps.add("meta.w1", nn::xavier_uniform(config.meta_dim, hm, rng));
      ps.add("meta.b1", zeros(1, hm));
      // Scaled so the generated W_g has entries of std about 1/sqrt(d_c).
      const double sd = 1.0 / (std::sqrt(0.4 * hm) * std::sqrt(static_cast<double>(dc)));
      ps.add("meta.w2", nn::normal_matrix(hm, static_cast<Eigen::Index>(dc) * dc + dc, rng, sd));
      ps.add("meta.b2", zeros(1, static_cast<Eigen::Index>(dc) * dc + dc));
      break;
    }
    case Variant::NoMeta: {
      auto rng = stream("gate");
      ps.add("gate.w", nn::xavier_uniform(dc, dc, rng));
      ps.add("gate.b", zeros(1, dc));
      break;
    }
    case Variant::NoGate: {
      auto rng = stream("fuse");
      ps.add("fuse.w", nn::xavier_uniform(dc, dc, rng));
      ps.add("fuse.b", zeros(1, dc));
      break;
    }
    case Variant::Backbone:
      break;
  }
  {
    auto rng = stream("cls");
    ps.add("cls.w", nn::xavier_uniform(dc, kNumTherbligs, rng));
    ps.add("cls.b", zeros(1, kNumTherbligs));
  }
  return m;
}

void fit_normalization(MgsfModel& model, const std::vector<const Demonstration*>& demos) {
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(kNumFeatures), sq = sum;
  double n = 0;
  for (const auto* d : demos) {
    for (Eigen::Index t = 0; t < d->states.rows(); ++t) {
      const Eigen::ArrayXd row = d->states.row(t).transpose().array();
      sum += row;
      sq += row * row;
    }
    n += static_cast<double>(d->states.rows());
  }
  if (n == 0) throw ValidationError("cannot fit normalization on an empty set");
  const Eigen::ArrayXd mean = sum / n;
  const Eigen::ArrayXd var = (sq / n - mean * mean).max(0.0);
  auto& m = model.params.at("norm.mean").value;
  auto& s = model.params.at("norm.std").value;
  for (int f = 0; f < kNumFeatures; ++f) {
    m(0, f) = static_cast<float>(mean(f));
    s(0, f) = static_cast<float>(std::max(std::sqrt(var(f)), 1e-3));
  }
}

template <typename T>
Matrix<T> normalize_input(const nn::ParamStore<T>& params, const FeatureMatrix& x) {
  if (x.cols() != kNumFeatures)
    throw ValidationError("input has " + std::to_string(x.cols()) + " features, expected 26");
  const auto& mean = params.at("norm.mean").value;
  const auto& std = params.at("norm.std").value;
  Matrix<T> out(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    for (Eigen::Index f = 0; f < x.cols(); ++f)
      out(t, f) = (static_cast<T>(x(t, f)) - mean(0, f)) / std(0, f);
  return out;
}

// ---- forward -------------------------------------------------------------------

template <typename T>
GateParams<T> gate_parameters(const MgsfConfig& config, const Binding<T>& p) {
  const Eigen::Index dc = config.fusion_dim();
  if (config.variant == Variant::NoMeta) return {p["gate.w"], p["gate.b"]};
  if (config.variant != Variant::Full)
    throw ValidationError("variant '" + std::string(variant_name(config.variant)) + "' has no gate");
  const auto h = tanh(add_row(matmul(p["meta.M"], p["meta.w1"]), p["meta.b1"]));
  const auto theta = add_row(matmul(h, p["meta.w2"]), p["meta.b2"]);
  return {reshape(slice(theta, nn::Axis::Cols, 0, dc * dc), dc, dc),
          slice(theta, nn::Axis::Cols, dc * dc, dc)};
}

template <typename T>
Tensor<T> recursive_gated_fusion(const Tensor<T>& c, const GateParams<T>& gate, int steps,
                                 FusionInit init) {
  if (steps < 1) throw ValidationError("fusion steps must be >= 1");
  // Gate is shared across steps.
  const auto g = sigmoid(add_row(matmul(c, gate.weight), gate.bias));
  auto f = init == FusionInit::Input
               ? c
               : c.tape().constant(Matrix<T>::Zero(c.rows(), c.cols()));
  for (int s = 0; s < steps; ++s) f = add(f, mul(g, sub(c, f)));
  return f;
}

namespace {

template <typename T>
void check_stage(bool enabled, const Tensor<T>& t, const char* stage) {
  if (enabled && !nn::all_finite(t))
    throw RuntimeFault(std::string("non-finite values after stage '") + stage + "'");
}

template <typename T>
nn::LstmParams<T> lstm_params(const Binding<T>& p, const std::string& dir) {
  return {p["lstm." + dir + ".wi"], p["lstm." + dir + ".wh"], p["lstm." + dir + ".b"]};
}

template <typename T>
nn::EncoderBlockParams<T> encoder_params(const Binding<T>& p, int layer) {
  const std::string e = "enc" + std::to_string(layer) + ".";
  nn::EncoderBlockParams<T> b;
  b.attention = {p[e + "att.wq"], p[e + "att.bq"], p[e + "att.wk"], p[e + "att.bk"],
                 p[e + "att.wv"], p[e + "att.bv"], p[e + "att.wo"], p[e + "att.bo"]};
  b.ln1_gain = p[e + "ln1.g"];
  b.ln1_bias = p[e + "ln1.b"];
  b.ffn_w1 = p[e + "ffn.w1"];
  b.ffn_b1 = p[e + "ffn.b1"];
  b.ffn_w2 = p[e + "ffn.w2"];
  b.ffn_b2 = p[e + "ffn.b2"];
  b.ln2_gain = p[e + "ln2.g"];
  b.ln2_bias = p[e + "ln2.b"];
  return b;
}

}  // namespace

template <typename T>
Tensor<T> forward_graph(const MgsfConfig& config, const Binding<T>& p, const Tensor<T>& x,
                        Eigen::Index offset, bool check) {
  if (x.cols() != config.d_input)
    throw ValidationError("input has " + std::to_string(x.cols()) + " features, expected " +
                          std::to_string(config.d_input));
  check_stage(check, x, "input");
  auto& tape = x.tape();

  auto z = add_row(matmul(x, p["proj.w"]), p["proj.b"]);
  z = add(z, tape.constant(nn::positional_encoding<T>(x.rows(), config.d_model, offset)));
  for (int l = 0; l < config.encoder_layers; ++l) z = encoder_block(z, config.heads, encoder_params(p, l));
  check_stage(check, z, "transformer");

  Tensor<T> fused;
  if (config.variant == Variant::Backbone) {
    fused = z;
  } else {
    const auto hl = bilstm_layer(x, lstm_params(p, "fw"), lstm_params(p, "bw"));
    check_stage(check, hl, "bilstm");
    const auto c = concat<T>({hl, z}, nn::Axis::Cols);
    if (config.variant == Variant::NoGate) {
      fused = add_row(matmul(c, p["fuse.w"]), p["fuse.b"]);
    } else {
      fused = recursive_gated_fusion(c, gate_parameters(config, p), config.fusion_steps,
                                     config.fusion_init);
    }
    check_stage(check, fused, "fusion");
  }
  const auto logits = add_row(matmul(fused, p["cls.w"]), p["cls.b"]);
  const auto probs = softmax(logits, nn::Axis::Cols);
  check_stage(check, probs, "classifier");
  return probs;
}

Eigen::MatrixXd predict_probabilities(const MgsfModel& model, const FeatureMatrix& x) {
  nn::Tape<float> tape;
  Binding<float> b(tape, model.params, true);
  const auto xin = tape.constant(normalize_input(model.params, x));
  const auto probs = forward_graph(model.config, b, xin, 0, true);
  return probs.value().cast<double>();
}

LabelSequence median_smooth(const LabelSequence& labels, int window) {
  if (window <= 1 || labels.size() == 0) return labels;
  const auto n = static_cast<long long>(labels.size());
  const int half = window / 2;
  LabelSequence out = labels;
  std::vector<int> buf(static_cast<std::size_t>(window));
  for (long long t = 0; t < n; ++t) {
    for (int k = -half; k <= half; ++k) {
      const auto idx = std::clamp(t + k, 0LL, n - 1);
      buf[static_cast<std::size_t>(k + half)] = code_of(labels.labels[static_cast<std::size_t>(idx)]);
    }
    std::nth_element(buf.begin(), buf.begin() + half, buf.end());
    out.labels[static_cast<std::size_t>(t)] = static_cast<Therblig>(buf[static_cast<std::size_t>(half)]);
  }
  return out;
}

Segmentation segment(const MgsfModel& model, const Demonstration& demo) {
  const auto probs = predict_probabilities(model, demo.states);
  LabelSequence raw = decode_one_hot(probs);
  Segmentation s;
  s.labels = median_smooth(raw, model.config.smoothing_window);
  s.labels.probabilities = probs;
  s.segments = segments_from_labels(s.labels);
  return s;
}

#define TBK_INSTANTIATE(T)                                                                     \
  template Matrix<T> normalize_input<T>(const nn::ParamStore<T>&, const FeatureMatrix&);       \
  template GateParams<T> gate_parameters<T>(const MgsfConfig&, const Binding<T>&);             \
  template Tensor<T> recursive_gated_fusion<T>(const Tensor<T>&, const GateParams<T>&, int,    \
                                               FusionInit);                                    \
  template Tensor<T> forward_graph<T>(const MgsfConfig&, const Binding<T>&, const Tensor<T>&, \
                                      Eigen::Index, bool);

TBK_INSTANTIATE(float)
TBK_INSTANTIATE(double)

#undef TBK_INSTANTIATE

}  // namespace tbk::mgsf
