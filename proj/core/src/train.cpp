// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "therblig/error.hpp"
#include "therblig/mgsf.hpp"
#include "therblig/nn/adam.hpp"
#include "therblig/nn/checkpoint.hpp"
#include "therblig/parallel.hpp"
#include "therblig/rng.hpp"

namespace tbk::mgsf {

using datagen::Corpus;
using datagen::Split;
using nn::Matrix;

namespace {

struct Sample {
  std::size_t item = 0;
  Eigen::Index start = 0;
  Eigen::Index length = 0;
};

struct SampleGrad {
  double loss = 0.0;
  std::vector<Matrix<float>> grads;
};

SampleGrad sample_gradient(const MgsfModel& model, const Corpus& corpus, const Sample& s) {
  const auto& item = corpus.items[s.item];
  const FeatureMatrix x = item.demo.states.middleRows(s.start, s.length);
  Matrix<float> y(s.length, kNumTherbligs);
  y.setZero();
  for (Eigen::Index t = 0; t < s.length; ++t)
    y(t, code_of(item.labels.labels[static_cast<std::size_t>(s.start + t)])) = 1.0f;

  nn::Tape<float> tape;
  nn::Binding<float> b(tape, model.params);
  const auto xin = tape.constant(normalize_input(model.params, x));
  const auto probs = forward_graph(model.config, b, xin, s.start, true);
  const auto loss = bce_loss(probs, tape.constant(y));
  tape.backward(loss);
  return {static_cast<double>(loss.item()), b.gradients()};
}

std::vector<const Demonstration*> demos_of(const Corpus& corpus, const std::vector<std::size_t>& idx) {
  std::vector<const Demonstration*> out;
  for (auto i : idx) out.push_back(&corpus.items[i].demo);
  return out;
}

}  // namespace

Metrics evaluate(const MgsfModel& model, const Corpus& corpus, const std::vector<std::size_t>& idx,
                 int threads) {
  std::vector<LabelSequence> pred(idx.size()), truth(idx.size());
  std::vector<std::string> tasks(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t k) {
    const auto& item = corpus.items[idx[k]];
    pred[k] = segment(model, item.demo).labels;
    truth[k] = item.labels;
    tasks[k] = item.task;
  });
  return compute_metrics(pred, truth, tasks);
}

TrainResult train(const MgsfConfig& config, const Corpus& corpus,
                  const std::vector<std::size_t>& train_idx, const std::vector<std::size_t>& val_idx,
                  std::uint64_t seed, const TrainHooks& hooks) {
  config.validate();
  if (train_idx.empty() || val_idx.empty())
    throw ValidationError("training needs non-empty train and validation splits");

  TrainResult result;
  result.model = init_model(config, seed);
  auto& model = result.model;
  fit_normalization(model, demos_of(corpus, train_idx));

  nn::AdamState<float> adam;
  adam.config.lr = config.lr;
  Rng order_rng(derive_seed(seed, "train/order"));
  Rng crop_rng(derive_seed(seed, "train/crop"));

  nn::ParamStore<float> best = model.params;
  double best_recall = -1.0;
  int since_best = 0;
  result.stop_reason = "epoch limit";

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    order_rng.shuffle(order.begin(), order.end());
    std::vector<Sample> samples;
    for (auto i : order) {
      const auto n = corpus.items[i].demo.states.rows();
      Sample s{i, 0, n};
      if (config.crop_length > 0 && config.crop_length < n) {
        s.length = config.crop_length;
        s.start = static_cast<Eigen::Index>(crop_rng.uniform_int(0, n - config.crop_length));
      }
      samples.push_back(s);
    }

    double loss_sum = 0.0;
    bool diverged = false;
    for (std::size_t b0 = 0; b0 < samples.size() && !diverged; b0 += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t bn = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), samples.size() - b0);
      std::vector<SampleGrad> parts(bn);
      try {
        parallel_for(bn, config.threads,
                     [&](std::size_t k) { parts[k] = sample_gradient(model, corpus, samples[b0 + k]); });
      } catch (const RuntimeFault&) {
        diverged = true;
        break;
      }
      std::vector<Matrix<float>> grads = std::move(parts[0].grads);
      double batch_loss = parts[0].loss;
      for (std::size_t k = 1; k < bn; ++k) {
        for (std::size_t p = 0; p < grads.size(); ++p) grads[p] += parts[k].grads[p];
        batch_loss += parts[k].loss;
      }
      const float inv = 1.0f / static_cast<float>(bn);
      for (auto& g : grads) g *= inv;
      if (!std::isfinite(batch_loss)) {
        diverged = true;
        break;
      }
      nn::clip_global_norm(grads, config.clip_norm);
      try {
        nn::adam_step(model.params, grads, adam);
      } catch (const RuntimeFault&) {
        diverged = true;
        break;
      }
      loss_sum += batch_loss;
    }
    if (diverged) {
      result.diverged = true;
      result.stop_reason = "diverged in epoch " + std::to_string(epoch);
      break;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(samples.size());
    entry.val_recall = evaluate(model, corpus, val_idx, config.threads).recall;
    result.log.push_back(entry);
    if (hooks.on_epoch) hooks.on_epoch(entry);

    if (entry.val_recall > best_recall) {
      best_recall = entry.val_recall;
      best = model.params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stop_reason = "early stop at epoch " + std::to_string(epoch);
      break;
    }
  }
  if (result.best_epoch > 0) model.params = std::move(best);
  result.best_val_recall = std::max(best_recall, 0.0);
  return result;
}

TrainResult train(const MgsfConfig& config, const Corpus& corpus, std::uint64_t seed,
                  const TrainHooks& hooks) {
  return train(config, corpus, corpus.indices(Split::Train), corpus.indices(Split::Validation), seed,
               hooks);
}

// ---- checkpoints ---------------------------------------------------------------

void save_model(const MgsfModel& model, const std::filesystem::path& header_path) {
  nlohmann::json meta;
  meta["model"] = "mgsf";
  nlohmann::json cfg = nlohmann::json::object();
  const auto config = model.config.to_config();
  for (const auto& [k, v] : config.values()) cfg[k] = v;
  meta["config"] = cfg;
  nn::save_checkpoint(header_path, model.params, meta.dump());
}

MgsfModel load_model(const std::filesystem::path& header_path) {
  auto loaded = nn::load_checkpoint(header_path);
  ConfigFile cfg;
  try {
    const auto meta = nlohmann::json::parse(loaded.metadata_json);
    if (meta.value("model", std::string()) != "mgsf")
      throw ValidationError("'" + header_path.string() + "' is not an MGSF checkpoint");
    for (const auto& [k, v] : meta.at("config").items()) cfg.set(k, v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad checkpoint metadata in '" + header_path.string() + "': " + e.what());
  }
  MgsfModel model = init_model(MgsfConfig::from_config(cfg), 0);
  const auto& expected = model.params.entries();
  const auto& got = loaded.params.entries();
  if (expected.size() != got.size())
    throw ValidationError("checkpoint has " + std::to_string(got.size()) + " parameters, config needs " +
                          std::to_string(expected.size()));
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got[i].name != expected[i].name || got[i].value.rows() != expected[i].value.rows() ||
        got[i].value.cols() != expected[i].value.cols())
      throw ValidationError("checkpoint parameter '" + got[i].name + "' does not match the config");
  }
  model.params = std::move(loaded.params);
  return model;
}

// ---- experiments ---------------------------------------------------------------

SummaryStat summarize(const std::vector<double>& values) {
  SummaryStat s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

SummaryStat AblationResult::recall(Variant v) const {
  std::vector<double> r;
  for (const auto& c : cells)
    if (c.variant == v && c.ok) r.push_back(c.test.recall);
  return summarize(r);
}

AblationResult run_ablation(const MgsfConfig& base, const Corpus& corpus,
                            const std::vector<std::uint64_t>& seeds,
                            const std::function<void(const AblationCell&)>& on_cell) {
  if (seeds.size() < 2) throw ValidationError("ablation needs at least 2 seeds");
  const auto train_idx = corpus.indices(Split::Train);
  const auto val_idx = corpus.indices(Split::Validation);
  const auto test_idx = corpus.indices(Split::Test);
  AblationResult out;
  for (auto seed : seeds) {
    for (auto v : kAllVariants) {
      AblationCell cell;
      cell.variant = v;
      cell.seed = seed;
      try {
        MgsfConfig cfg = base;
        cfg.variant = v;
        auto r = train(cfg, corpus, train_idx, val_idx, seed);
        cell.val_recall = r.best_val_recall;
        cell.best_epoch = r.best_epoch;
        cell.test = evaluate(r.model, corpus, test_idx, cfg.threads);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (on_cell) on_cell(cell);
      out.cells.push_back(std::move(cell));
    }
  }
  return out;
}

std::vector<SweepPoint> run_size_sweep(const MgsfConfig& config, const Corpus& pool,
                                       const Corpus& heldout, const std::vector<int>& sizes,
                                       const std::vector<std::uint64_t>& seeds,
                                       const std::function<void(int, std::uint64_t, double)>& on_run) {
  std::map<std::string, std::vector<std::size_t>> by_task;
  std::vector<std::string> task_order;
  for (std::size_t i = 0; i < pool.items.size(); ++i) {
    auto& v = by_task[pool.items[i].task];
    if (v.empty()) task_order.push_back(pool.items[i].task);
    v.push_back(i);
  }
  if (task_order.empty()) throw ValidationError("empty demonstration pool");
  std::vector<std::size_t> all_heldout(heldout.items.size());
  for (std::size_t i = 0; i < all_heldout.size(); ++i) all_heldout[i] = i;

  std::vector<SweepPoint> out;
  for (int size : sizes) {
    const auto tasks = static_cast<int>(task_order.size());
    std::vector<std::size_t> train_idx, val_idx;
    for (int t = 0; t < tasks; ++t) {
      const auto& v = by_task[task_order[static_cast<std::size_t>(t)]];
      const int k = size / tasks + (t < size % tasks ? 1 : 0);
      if (k > static_cast<int>(v.size()))
        throw ValidationError("sweep size " + std::to_string(size) + " exceeds the pool");
      const auto counts = datagen::split_counts(k, 0.6, 0.2);
      for (int j = 0; j < k; ++j) {
        if (j < counts[0]) {
          train_idx.push_back(v[static_cast<std::size_t>(j)]);
        } else if (j < counts[0] + counts[1]) {
          val_idx.push_back(v[static_cast<std::size_t>(j)]);
        }
      }
    }
    SweepPoint pt;
    pt.total_demos = size;
    for (auto seed : seeds) {
      const auto r = train(config, pool, train_idx, val_idx, seed);
      const double recall = evaluate(r.model, heldout, all_heldout, config.threads).recall;
      pt.recalls.push_back(recall);
      if (on_run) on_run(size, seed, recall);
    }
    pt.stat = summarize(pt.recalls);
    out.push_back(std::move(pt));
  }
  return out;
}

std::string ablation_table(const AblationResult& r) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %-15s %-15s %-15s %-15s %-15s %-17s\n", "variant",
                "bce_loss", "precision", "recall", "f1", "kappa", "tp_range");
  os << line;
  for (auto v : kAllVariants) {
    std::vector<double> bce, p, rc, f1, k, lo, hi;
    int failed = 0;
    for (const auto& c : r.cells) {
      if (c.variant != v) continue;
      if (!c.ok) {
        ++failed;
        continue;
      }
      bce.push_back(c.test.bce_loss.value_or(0.0));
      p.push_back(c.test.precision);
      rc.push_back(c.test.recall);
      f1.push_back(c.test.f1);
      k.push_back(c.test.kappa);
      lo.push_back(c.test.tp_range[0]);
      hi.push_back(c.test.tp_range[1]);
    }
    auto fmt = [](const std::vector<double>& x, int prec) {
      const auto s = summarize(x);
      char b[64];
      std::snprintf(b, sizeof b, "%.*f+-%.*f", prec, s.mean, prec, s.std);
      return std::string(b);
    };
    char range[64];
    std::snprintf(range, sizeof range, "[%.2f, %.2f]", summarize(lo).mean, summarize(hi).mean);
    std::snprintf(line, sizeof line, "%-10s %-15s %-15s %-15s %-15s %-15s %-17s",
                  std::string(variant_name(v)).c_str(), fmt(bce, 4).c_str(), fmt(p, 2).c_str(),
                  fmt(rc, 2).c_str(), fmt(f1, 2).c_str(), fmt(k, 2).c_str(), range);
    os << line;
    if (failed > 0) os << "  (" << failed << " failed)";
    os << '\n';
  }
  return os.str();
}

}  // namespace tbk::mgsf
