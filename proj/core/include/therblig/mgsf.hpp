// SPDX-License-Identifier: Apache-2.0
//
// Meta-gated BiLSTM/Transformer fusion network for per-step therblig
// labeling, its ablation variants, training and evaluation.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "therblig/config_file.hpp"
#include "therblig/dataset.hpp"
#include "therblig/domain.hpp"
#include "therblig/metrics.hpp"
#include "therblig/nn/params.hpp"

namespace tbk::mgsf {

enum class Variant { Full, NoMeta, NoGate, Backbone };
std::string_view variant_name(Variant v);
Variant variant_from_name(std::string_view name);
inline constexpr std::array<Variant, 4> kAllVariants = {Variant::Full, Variant::NoMeta,
                                                        Variant::NoGate, Variant::Backbone};

/// Starting value of the fusion recursion.
enum class FusionInit { Zeros, Input };

struct MgsfConfig {
  int d_input = kNumFeatures;
  int lstm_hidden = 64;
  int d_model = 64;
  int encoder_layers = 2;
  int heads = 4;
  int ffn_hidden = 128;
  int fusion_steps = 3;
  int meta_dim = 32;
  int meta_hidden = 64;
  Variant variant = Variant::Full;
  FusionInit fusion_init = FusionInit::Zeros;

  int epochs = 40;
  int batch_size = 8;
  double lr = 1e-3;
  int patience = 8;
  double clip_norm = 5.0;
  /// Training windows of this many steps; 0 trains on whole demos.
  int crop_length = 0;
  int smoothing_window = 5;
  int threads = 1;

  int fusion_dim() const;
  void validate() const;
  static MgsfConfig from_config(const ConfigFile& cfg);
  ConfigFile to_config() const;
};

struct MgsfModel {
  MgsfConfig config;
  /// Trainable groups are prefixed lstm., proj., enc<l>., meta., gate.,
  /// fuse., cls.; the non-trainable norm.mean / norm.std hold input
  /// standardization statistics.
  nn::ParamStore<float> params;
};

/// Parameter groups draw from independent streams keyed by group name, so
/// groups shared between variants start identical for one seed.
MgsfModel init_model(const MgsfConfig& config, std::uint64_t seed);

/// Sets norm.mean / norm.std from the given demonstrations.
void fit_normalization(MgsfModel& model, const std::vector<const Demonstration*>& demos);

template <typename T>
nn::Matrix<T> normalize_input(const nn::ParamStore<T>& params, const FeatureMatrix& x);

/// Gate parameters, one per fusion dimension.
template <typename T>
struct GateParams {
  nn::Tensor<T> weight;  // d_c x d_c
  nn::Tensor<T> bias;    // 1 x d_c
};

/// Meta-network output (full) or the directly learned gate (no_meta).
template <typename T>
GateParams<T> gate_parameters(const MgsfConfig& config, const nn::Binding<T>& p);

/// F(0) per config; then T times G = sigmoid(c W + b), F <- G*c + (1-G)*F.
template <typename T>
nn::Tensor<T> recursive_gated_fusion(const nn::Tensor<T>& c, const GateParams<T>& gate, int steps,
                                     FusionInit init);

/// Softmax probabilities, n x 7. `x` must already be normalized. `offset`
/// is the absolute position of row 0 for the positional encoding. With
/// `check` set, a non-finite stage output throws RuntimeFault naming it.
template <typename T>
nn::Tensor<T> forward_graph(const MgsfConfig& config, const nn::Binding<T>& p, const nn::Tensor<T>& x,
                            Eigen::Index offset = 0, bool check = true);

/// Inference on raw features; rows sum to 1.
Eigen::MatrixXd predict_probabilities(const MgsfModel& model, const FeatureMatrix& x);

/// Median filter over label codes, replicate padding at both ends.
LabelSequence median_smooth(const LabelSequence& labels, int window);

struct Segmentation {
  LabelSequence labels;  // smoothed, with probabilities attached
  std::vector<TherbligSegment> segments;
};
Segmentation segment(const MgsfModel& model, const Demonstration& demo);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_recall = 0.0;
};

struct TrainResult {
  MgsfModel model;  // best-on-validation parameters
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_recall = 0.0;
  bool diverged = false;
  std::string stop_reason;
};

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
};

/// Adam on mean BCE; data order and crops depend only on `seed`. Stops
/// early after `patience` epochs without validation improvement and aborts
/// on a non-finite loss, keeping the last good parameters either way.
TrainResult train(const MgsfConfig& config, const datagen::Corpus& corpus,
                  const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& val_idx,
                  std::uint64_t seed, const TrainHooks& hooks = {});
TrainResult train(const MgsfConfig& config, const datagen::Corpus& corpus, std::uint64_t seed,
                  const TrainHooks& hooks = {});

/// Evaluates smoothed predictions of `idx` against their labels.
Metrics evaluate(const MgsfModel& model, const datagen::Corpus& corpus,
                 const std::vector<std::size_t>& idx, int threads = 1);

void save_model(const MgsfModel& model, const std::filesystem::path& header_path);
MgsfModel load_model(const std::filesystem::path& header_path);

// ---- experiments -------------------------------------------------------------

struct AblationCell {
  Variant variant = Variant::Full;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double val_recall = 0.0;
  Metrics test;
  int best_epoch = 0;
};

struct SummaryStat {
  double mean = 0.0;
  double std = 0.0;
};
SummaryStat summarize(const std::vector<double>& values);

struct AblationResult {
  std::vector<AblationCell> cells;  // seed-major, variant order of kAllVariants
  SummaryStat recall(Variant v) const;
};

/// Trains every variant once per seed on the corpus train split with the
/// same data order; a failed cell is recorded and does not stop the rest.
AblationResult run_ablation(const MgsfConfig& base, const datagen::Corpus& corpus,
                            const std::vector<std::uint64_t>& seeds,
                            const std::function<void(const AblationCell&)>& on_cell = {});

struct SweepPoint {
  int total_demos = 0;
  std::vector<double> recalls;  // one per seed
  SummaryStat stat;
};

/// Trains on nested, template-stratified subsets of `pool` holding the
/// given total demo counts (train/validation split inside each subset by
/// the usual rounding) and scores every model on all of `heldout`.
std::vector<SweepPoint> run_size_sweep(const MgsfConfig& config, const datagen::Corpus& pool,
                                       const datagen::Corpus& heldout, const std::vector<int>& sizes,
                                       const std::vector<std::uint64_t>& seeds,
                                       const std::function<void(int, std::uint64_t, double)>& on_run = {});

std::string ablation_table(const AblationResult& r);

}  // namespace tbk::mgsf
