// SPDX-License-Identifier: Apache-2.0
#include "therblig/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "therblig/error.hpp"

namespace tbk {

Confusion confusion_matrix(std::span<const LabelSequence> pred, std::span<const LabelSequence> truth) {
  if (pred.size() != truth.size())
    throw ValidationError("prediction count " + std::to_string(pred.size()) +
                          " does not match truth count " + std::to_string(truth.size()));
  Confusion c = Confusion::Zero();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != truth[i].size())
      throw ValidationError("sequence " + std::to_string(i) + ": predicted length " +
                            std::to_string(pred[i].size()) + " vs truth length " +
                            std::to_string(truth[i].size()));
    for (std::size_t t = 0; t < pred[i].size(); ++t)
      ++c(code_of(truth[i].labels[t]), code_of(pred[i].labels[t]));
  }
  return c;
}

TableScores score_table(const Confusion& table) {
  TableScores s;
  const double total = static_cast<double>(table.sum());
  if (total == 0) return s;
  int present = 0;
  for (int k = 0; k < kNumTherbligs; ++k) {
    const double support = static_cast<double>(table.row(k).sum());
    if (support == 0) continue;
    ++present;
    const double tp = static_cast<double>(table(k, k));
    const double predicted = static_cast<double>(table.col(k).sum());
    const double p = predicted > 0 ? tp / predicted : 0.0;
    const double r = tp / support;
    s.precision += p;
    s.recall += r;
    s.f1 += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  s.precision = 100.0 * s.precision / present;
  s.recall = 100.0 * s.recall / present;
  s.f1 = 100.0 * s.f1 / present;

  double po = 0, pe = 0;
  for (int k = 0; k < kNumTherbligs; ++k) {
    po += static_cast<double>(table(k, k));
    pe += static_cast<double>(table.row(k).sum()) * static_cast<double>(table.col(k).sum());
  }
  po /= total;
  pe /= total * total;
  s.kappa = pe >= 1.0 ? (po >= 1.0 ? 100.0 : 0.0) : 100.0 * (po - pe) / (1.0 - pe);
  return s;
}

Metrics compute_metrics(std::span<const LabelSequence> pred, std::span<const LabelSequence> truth,
                        std::span<const std::string> task_ids) {
  if (!task_ids.empty() && task_ids.size() != pred.size())
    throw ValidationError("task id count does not match prediction count");
  const Confusion table = confusion_matrix(pred, truth);
  Metrics m;
  m.samples = table.sum();
  const auto s = score_table(table);
  m.precision = s.precision;
  m.recall = s.recall;
  m.f1 = s.f1;
  m.kappa = s.kappa;
  for (int k = 0; k < kNumTherbligs; ++k) {
    const auto support = table.row(k).sum();
    if (support == 0) {
      m.absent_classes.push_back(k);
      m.per_class_recall[static_cast<std::size_t>(k)] = std::numeric_limits<double>::quiet_NaN();
    } else {
      m.per_class_recall[static_cast<std::size_t>(k)] =
          100.0 * static_cast<double>(table(k, k)) / static_cast<double>(support);
    }
  }

  std::map<std::string, Confusion> per_task;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::string task = task_ids.empty() ? std::string("all") : task_ids[i];
    auto [it, fresh] = per_task.try_emplace(task, Confusion::Zero());
    it->second += confusion_matrix(std::span(&pred[i], 1), std::span(&truth[i], 1));
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [task, t] : per_task) {
    if (t.sum() == 0) continue;
    const double r = score_table(t).recall;
    m.per_task_recall.push_back({task, r});
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (!m.per_task_recall.empty()) m.tp_range = {lo, hi};

  bool have_probs = !pred.empty();
  for (const auto& p : pred) have_probs = have_probs && p.probabilities.has_value();
  if (have_probs) {
    constexpr double eps = 1e-7;
    double loss = 0;
    long long count = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto& probs = *pred[i].probabilities;
      if (probs.rows() != static_cast<Eigen::Index>(truth[i].size()) || probs.cols() != kNumTherbligs)
        throw ValidationError("probability matrix shape does not match labels");
      for (Eigen::Index t = 0; t < probs.rows(); ++t) {
        const int y = code_of(truth[i].labels[static_cast<std::size_t>(t)]);
        for (int k = 0; k < kNumTherbligs; ++k) {
          const double p = std::clamp(probs(t, k), eps, 1.0 - eps);
          loss -= k == y ? std::log(p) : std::log(1.0 - p);
          ++count;
        }
      }
    }
    m.bce_loss = count > 0 ? loss / static_cast<double>(count) : 0.0;
  }
  return m;
}

std::string metrics_to_json(const Metrics& m, int indent) {
  using nlohmann::json;
  json j;
  j["bce_loss"] = m.bce_loss ? json(*m.bce_loss) : json(nullptr);
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["kappa"] = m.kappa;
  j["tp_range"] = {m.tp_range[0], m.tp_range[1]};
  json per_class = json::object();
  for (int k = 0; k < kNumTherbligs; ++k) {
    const double r = m.per_class_recall[static_cast<std::size_t>(k)];
    per_class[std::string(therblig_name(static_cast<Therblig>(k)))] =
        std::isnan(r) ? json(nullptr) : json(r);
  }
  j["per_class_recall"] = per_class;
  json per_task = json::object();
  for (const auto& t : m.per_task_recall) per_task[t.task] = t.recall;
  j["per_task_recall"] = per_task;
  json absent = json::array();
  for (int k : m.absent_classes) absent.push_back(std::string(therblig_name(static_cast<Therblig>(k))));
  j["absent_classes"] = absent;
  j["samples"] = m.samples;
  return j.dump(indent);
}

std::string metrics_to_csv(const Metrics& m) {
  std::ostringstream out;
  out.precision(17);
  out << "metric,key,value\n";
  auto row = [&](std::string_view metric, std::string_view key, double v) {
    out << metric << ',' << key << ',';
    if (!std::isnan(v)) out << v;
    out << '\n';
  };
  row("bce_loss", "", m.bce_loss ? *m.bce_loss : std::nan(""));
  row("precision", "", m.precision);
  row("recall", "", m.recall);
  row("f1", "", m.f1);
  row("kappa", "", m.kappa);
  row("tp_range", "min", m.tp_range[0]);
  row("tp_range", "max", m.tp_range[1]);
  for (int k = 0; k < kNumTherbligs; ++k)
    row("per_class_recall", therblig_name(static_cast<Therblig>(k)), m.per_class_recall[static_cast<std::size_t>(k)]);
  for (const auto& t : m.per_task_recall) row("per_task_recall", t.task, t.recall);
  for (int k : m.absent_classes) out << "absent_class," << therblig_name(static_cast<Therblig>(k)) << ",\n";
  out << "samples,," << m.samples << '\n';
  return out.str();
}

}  // namespace tbk
