// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace tbk {

/// Elemental motion units. The integer codes are stable and used in every
/// file format.
enum class Therblig : std::uint8_t {
  Rest = 0,
  TransportEmpty = 1,
  Delay = 2,
  Grasp = 3,
  TransportLoaded = 4,
  Use = 5,
  Release = 6,
};

inline constexpr int kNumTherbligs = 7;
inline constexpr std::array<Therblig, kNumTherbligs> kAllTherbligs = {
    Therblig::Rest,  Therblig::TransportEmpty,  Therblig::Delay,
    Therblig::Grasp, Therblig::TransportLoaded, Therblig::Use,
    Therblig::Release};

constexpr int code_of(Therblig t) { return static_cast<int>(t); }
std::optional<Therblig> therblig_from_code(int code);
std::string_view therblig_name(Therblig t);
std::optional<Therblig> therblig_from_name(std::string_view name);

/// Grasp, Use and Release are the events that touch an object.
constexpr bool is_contact_event(Therblig t) {
  return t == Therblig::Grasp || t == Therblig::Use || t == Therblig::Release;
}

// Canonical column layout of the 26 state features.
inline constexpr int kNumFeatures = 26;
namespace feature {
inline constexpr int kJointAngles = 0;   // q0..q6
inline constexpr int kJointSpeeds = 7;   // qd0..qd6
inline constexpr int kX = 14;
inline constexpr int kY = 15;
inline constexpr int kZ = 16;
inline constexpr int kRoll = 17;
inline constexpr int kPitch = 18;
inline constexpr int kYaw = 19;
inline constexpr int kForce = 20;        // fx, fy, fz
inline constexpr int kTorque = 23;       // tx, ty, tz
}  // namespace feature

struct RobotState {
  std::array<double, 7> joint_angles{};
  std::array<double, 7> joint_speeds{};
  std::array<double, 3> ee_position{};
  std::array<double, 3> ee_orientation{};  // roll, pitch, yaw
  std::array<double, 3> force{};
  std::array<double, 3> torque{};

  std::array<double, kNumFeatures> flatten() const;
  static RobotState from_flat(std::span<const double> row);
};

using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A recorded state trajectory. Rows are timesteps, columns follow the
/// canonical feature layout. The width is not enforced at construction so
/// that malformed inputs can be reported by validate_demonstration().
struct Demonstration {
  FeatureMatrix states;
  double sample_rate_hz = 10.0;
  std::string task_id;
  std::vector<bool> gripper;  // true = closed

  std::size_t length() const { return static_cast<std::size_t>(states.rows()); }
  RobotState state(std::size_t t) const;
};

struct LabelSequence {
  std::vector<Therblig> labels;
  /// Optional n x 7 probability rows.
  std::optional<Eigen::MatrixXd> probabilities;

  std::size_t size() const { return labels.size(); }
  bool operator==(const LabelSequence& o) const { return labels == o.labels; }

  /// Throws ValidationError naming the first offending index.
  static LabelSequence from_codes(std::span<const int> codes);
  std::vector<int> codes() const;
};

/// Half-open run [start, end) of one therblig.
struct TherbligSegment {
  Therblig therblig = Therblig::Rest;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  /// Anchor convention: floor midpoint of the run.
  std::size_t midpoint() const { return start + (end - start) / 2; }
  bool operator==(const TherbligSegment&) const = default;
};

Eigen::MatrixXd one_hot(std::span<const int> codes);
Eigen::MatrixXd one_hot(const LabelSequence& labels);
/// Row-wise argmax back to labels.
LabelSequence decode_one_hot(const Eigen::MatrixXd& rows);

std::vector<TherbligSegment> segments_from_labels(const LabelSequence& labels);
LabelSequence labels_from_segments(std::span<const TherbligSegment> segments);
/// Therblig of each segment in order.
std::vector<Therblig> segment_order(std::span<const TherbligSegment> segments);

struct ValidationIssue {
  enum class Kind { TooShort, BadWidth, NonFinite, BadSampleRate, GripperLength };
  Kind kind;
  std::optional<std::size_t> timestep;
  std::optional<std::size_t> feature;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  std::string summary() const;
};

/// Reports every violation rather than stopping at the first.
ValidationReport validate_demonstration(const Demonstration& demo);

}  // namespace tbk
