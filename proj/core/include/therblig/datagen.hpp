// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic demonstrations. Each task template is a therblig
// grammar whose contact events (Grasp, Use, Release) are bound to scene
// objects by role; the generator turns a template plus a scene into a
// 26-channel state trajectory, per-step labels and ground-truth anchors.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "therblig/domain.hpp"
#include "therblig/scene.hpp"

namespace tbk::datagen {

enum class Role { None, Source, Destination, Tool };
std::string_view role_name(Role r);

struct GrammarStep {
  Therblig therblig = Therblig::Rest;
  int min_steps = 1;
  int max_steps = 1;
  /// Object the event happens at; only meaningful for contact events.
  Role role = Role::None;
};

struct TaskTemplate {
  std::string name;
  std::vector<GrammarStep> grammar;
  /// Oscillation frequency of Use phases, Hz.
  double use_frequency_hz = 1.0;
  /// Roles in order of first appearance. Role i binds to scene.objects[i].
  std::vector<Role> roles() const;
};

/// Throws ValidationError if the template breaks the grammar rules.
void validate_template(const TaskTemplate& tmpl);

/// Ordering rules over a sequence of segment therbligs: starts and ends
/// with Rest, each Grasp is followed by TransportLoaded before its Release,
/// Use only occurs while holding (between Grasp and Release).
bool grammar_valid(std::span<const Therblig> order);

/// The six training tasks (pick-and-place, cutting, gluing, sweeping,
/// wiping, pouring).
std::vector<TaskTemplate> training_templates();
/// Five held-out tasks used by the success suite.
std::vector<TaskTemplate> evaluation_templates();
const TaskTemplate& find_template(const std::vector<TaskTemplate>& all, const std::string& name);

struct NoiseConfig {
  double state_sigma = 5e-4;      // rad, on joint channels
  double force_sigma = 0.15;      // N / Nm white noise
  double force_drift_rate = 2e-3; // N per step, max |slope| of sensor drift
  int label_jitter = 2;           // max boundary shift, steps
};

struct GroundTruthAnchor {
  Therblig therblig = Therblig::Grasp;
  std::size_t timestep = 0;
  Vec2 xy = Vec2::Zero();
  double yaw = 0.0;
  std::string object_id;
};

struct GeneratedDemo {
  Demonstration demo;
  LabelSequence labels;              // jittered, as a human labeler would mark them
  std::vector<TherbligSegment> phases;  // exact kinematic phases
  std::vector<GroundTruthAnchor> anchors;
};

/// Fixed linear "arm": joint angles = clip(A * [x y z roll pitch yaw] + b).
struct ArmMap {
  static const std::array<std::array<double, 6>, 7> kMatrix;
  static const std::array<double, 7> kOffset;
  static std::array<double, 7> joints(const std::array<double, 6>& pose);
};

/// Recomputes joint angles from the pose channels and joint speeds as
/// backward differences times the sample rate. Edits `states` in place.
void apply_arm_map(FeatureMatrix& states, double sample_rate_hz);

/// Joint speeds as backward differences of the joint angles.
void update_joint_speeds(FeatureMatrix& states, double sample_rate_hz);

inline constexpr double kHomeX = 0.40;
inline constexpr double kHomeY = 0.30;
inline constexpr double kHomeZ = 0.25;
inline constexpr double kWorkZ = 0.05;

GeneratedDemo generate_demo(const TaskTemplate& tmpl, const SceneDescriptor& scene,
                            std::uint64_t seed, const NoiseConfig& noise = {},
                            int duration = 600, double sample_rate_hz = 10.0);

struct SceneGenConfig {
  Bounds workspace{0.0, 0.0, 0.8, 0.6};
  double min_separation = 0.05;
  double edge_margin = 0.12;
  int descriptor_length = 16;
  /// Per-layout perturbation of an object's identity descriptor.
  double descriptor_noise = 0.02;
  int max_attempts = 1000;
};

/// Task objects come first (ids obj0, obj1, ...), then distractors.
SceneDescriptor generate_scene(int num_task_objects, int num_distractors, std::uint64_t seed,
                               const SceneGenConfig& config = {});

/// Same task-object identities as generate_scene(..., identity_seed) but
/// re-posed from `layout_seed`. Task objects are placed before distractors
/// so adding distractors never moves them.
SceneDescriptor generate_layout(int num_task_objects, int num_distractors,
                                std::uint64_t identity_seed, std::uint64_t layout_seed,
                                const SceneGenConfig& config = {});

}  // namespace tbk::datagen
