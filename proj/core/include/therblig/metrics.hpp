// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "therblig/domain.hpp"

namespace tbk {

using Confusion = Eigen::Matrix<long long, kNumTherbligs, kNumTherbligs>;

/// Rows are true classes, columns predicted classes.
Confusion confusion_matrix(std::span<const LabelSequence> pred, std::span<const LabelSequence> truth);

struct TaskRecall {
  std::string task;
  double recall = 0.0;
};

/// All scores are percentages. Macro averages run over classes present in
/// the truth only; `absent_classes` lists the ones left out.
struct Metrics {
  std::optional<double> bce_loss;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double kappa = 0.0;
  std::array<double, 2> tp_range{0.0, 0.0};
  /// NaN for classes absent from the truth.
  std::array<double, kNumTherbligs> per_class_recall{};
  std::vector<TaskRecall> per_task_recall;
  std::vector<int> absent_classes;
  long long samples = 0;
};

/// `task_ids` may be empty (one pooled task) or aligned with `pred`. The
/// BCE column is filled only when every prediction carries probabilities.
Metrics compute_metrics(std::span<const LabelSequence> pred, std::span<const LabelSequence> truth,
                        std::span<const std::string> task_ids = {});

/// Macro precision/recall/F1 and kappa of one contingency table.
struct TableScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double kappa = 0.0;
};
TableScores score_table(const Confusion& table);

std::string metrics_to_json(const Metrics& m, int indent = 2);
/// Long format: metric,key,value with an empty key for scalar scores.
std::string metrics_to_csv(const Metrics& m);

}  // namespace tbk
