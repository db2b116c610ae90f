// SPDX-License-Identifier: Apache-2.0
//
// One-shot transfer trials over generated layouts, success scoring with
// failure attribution, and report assembly from run artifacts.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "therblig/actionreg.hpp"
#include "therblig/config_file.hpp"
#include "therblig/datagen.hpp"
#include "therblig/lapvc.hpp"
#include "therblig/mgsf.hpp"

namespace tbk::harness {

enum class Mode { Sim, Com };
std::string_view mode_name(Mode m);
Mode mode_from_name(std::string_view name);

struct ScenarioConfig {
  Mode mode = Mode::Sim;
  int task_objects = 2;
  /// Distractors per com layout are drawn uniformly from this range.
  int min_distractors = 3;
  int max_distractors = 6;
  int trials_per_task = 50;
  lapvc::ErrorModel error = default_error();
  lapvc::CorrectionPolicy policy;
  std::uint64_t seed = 7;
  /// Use the exact kinematic phases instead of a model.
  bool oracle = false;
  /// false keeps the demo layout for the new scene.
  bool relayout = true;
  double epsilon = 0.02;
  int threads = 1;
  /// Empty means the evaluation templates.
  std::vector<std::string> templates;

  static lapvc::ErrorModel default_error();
  void validate() const;
  /// Keys: mode, task_objects, min_distractors, max_distractors, trials,
  /// error_bias_x, error_bias_y, error_sigma, error_rotation, policy,
  /// snap_radius, seed, oracle, relayout, epsilon, threads, templates.
  static ScenarioConfig from_config(const ConfigFile& cfg);
  ConfigFile to_config() const;
};

/// Predicted segments for a generated demonstration.
using Segmenter = std::function<std::vector<TherbligSegment>(const datagen::GeneratedDemo&)>;
Segmenter oracle_segmenter();
Segmenter model_segmenter(std::shared_ptr<const mgsf::MgsfModel> model);

struct TrialResult {
  std::string task;
  int trial = 0;
  std::uint64_t seed = 0;
  bool success = false;
  actionreg::FailureCategory category = actionreg::FailureCategory::None;
  std::string detail;
  /// Distance of each warped anchor from its transformed ground truth.
  std::vector<double> anchor_errors;
  bool correction_fallback = false;
  std::vector<actionreg::TraceEntry> trace;
};

/// Builds the demo scene and one demonstration, re-poses the layout, runs
/// segmentation and transfer with corrupted-then-corrected anchors and
/// scores the warped trajectory.
TrialResult run_trial(const datagen::TaskTemplate& tmpl, const ScenarioConfig& scenario,
                      const Segmenter& segmenter, int trial,
                      std::shared_ptr<lapvc::Transport> transport = nullptr);

struct TaskSuccess {
  std::string task;
  int trials = 0;
  int successes = 0;
  double rate() const { return trials > 0 ? 100.0 * successes / trials : 0.0; }
};

inline constexpr std::array<actionreg::FailureCategory, 5> kFailureCategories = {
    actionreg::FailureCategory::TherbligSegmentation, actionreg::FailureCategory::ActionRegistration,
    actionreg::FailureCategory::ContextMatching, actionreg::FailureCategory::TrajectoryPlanning,
    actionreg::FailureCategory::Others};

struct SuccessReport {
  Mode mode = Mode::Sim;
  std::string segmenter;  // "oracle" or "model"
  std::string config_canonical;
  std::uint64_t seed = 0;
  std::vector<TaskSuccess> tasks;
  int trials = 0;
  int successes = 0;
  std::array<int, 5> failures{};  // order of kFailureCategories
  std::vector<TrialResult> results;

  double total_rate() const { return trials > 0 ? 100.0 * successes / trials : 0.0; }
  std::string to_json(int indent = 2) const;
  /// One row per trial.
  std::string to_csv() const;
  static SuccessReport from_json(const std::string& text);
};

/// Trials run in parallel; results are ordered by (template, trial).
SuccessReport run_success_suite(const ScenarioConfig& scenario, const Segmenter& segmenter,
                                const std::string& segmenter_name,
                                std::shared_ptr<lapvc::Transport> transport = nullptr);

std::string config_hash(const std::string& canonical);

std::string ablation_to_json(const mgsf::AblationResult& r, const std::string& config_canonical,
                             const std::vector<std::uint64_t>& seeds);
mgsf::AblationResult ablation_from_json(const std::string& text);

std::string sweep_to_json(const std::vector<mgsf::SweepPoint>& sweep, const std::string& config_canonical,
                          const std::vector<std::uint64_t>& seeds);

struct Report {
  std::string text;  // markdown
  std::string csv;
  std::vector<std::string> missing;
};

/// Reads ablation.json, sweep.json, success_sim.json and success_com.json
/// from `dir`; absent artifacts are listed and flagged in the text.
Report build_report(const std::filesystem::path& dir);

}  // namespace tbk::harness
