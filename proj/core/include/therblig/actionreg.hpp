// SPDX-License-Identifier: Apache-2.0
//
// Anchor registration and one-shot trajectory transfer between object
// layouts in the plane.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "therblig/domain.hpp"
#include "therblig/scene.hpp"

namespace tbk::actionreg {

enum class FailureCategory {
  None,
  TherbligSegmentation,
  ActionRegistration,
  ContextMatching,
  TrajectoryPlanning,
  Others,
};
std::string_view category_name(FailureCategory c);
FailureCategory category_from_name(std::string_view name);

/// A pipeline stage could not produce a usable result.
class TransferFailure : public std::runtime_error {
 public:
  TransferFailure(FailureCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  FailureCategory category() const { return category_; }

 private:
  FailureCategory category_;
};

/// Planar homography from robot-frame to scene-frame coordinates.
class Calibration {
 public:
  Calibration();  // identity
  explicit Calibration(const Eigen::Matrix3d& h);

  const Eigen::Matrix3d& matrix() const { return h_; }
  Vec2 to_scene(const Vec2& robot) const;
  Vec2 to_robot(const Vec2& scene) const;

  static Calibration load(const std::filesystem::path& path);  // JSON 3x3
  std::string to_json() const;

 private:
  Eigen::Matrix3d h_;
  Eigen::Matrix3d inv_;
};

struct OrientationEstimate {
  double angle = 0.0;  // (-pi/2, pi/2]
  bool ill_defined = false;
  double eigen_ratio = 0.0;
};

/// Principal-axis angle of the centered point set. Ratios of the two
/// covariance eigenvalues below `min_ratio` report ill-defined with angle 0.
OrientationEstimate estimate_orientation_pca(std::span<const Vec2> points, double min_ratio = 1.05);

/// Wraps an angle difference into (-pi/2, pi/2].
double wrap_half_pi(double a);

struct Anchor {
  Therblig therblig = Therblig::Grasp;
  std::size_t timestep = 0;
  Vec2 xy = Vec2::Zero();  // scene frame
  double yaw = 0.0;
  std::optional<std::string> object_id;
  double association_distance = 0.0;
  /// Offset applied by a point-correction policy; folded into the warp.
  Vec2 correction = Vec2::Zero();
};

inline constexpr double kAssociationRadius = 0.08;

/// One anchor at the midpoint of every Grasp, Use and Release segment.
/// Throws TransferFailure(ActionRegistration) for a Grasp with no object
/// within `radius`.
std::vector<Anchor> extract_anchors(std::span<const TherbligSegment> segments, const Demonstration& demo,
                                    const SceneDescriptor& scene, const Calibration& calib,
                                    double radius = kAssociationRadius);

/// Re-runs object association for anchors whose points changed.
void associate_anchors(std::vector<Anchor>& anchors, const SceneDescriptor& scene, double radius);

struct ObjectMatch {
  std::string demo_object_id;
  std::string new_object_id;
  double descriptor_distance = 0.0;
  double confidence = 0.0;  // 1 - worst ratio of the two directions
};

struct MatchResult {
  std::vector<ObjectMatch> matches;
  std::vector<std::string> unmatched_demo;
  /// Demo objects whose best candidate failed the ratio test.
  std::vector<std::string> ambiguous;
  const ObjectMatch* find_demo(const std::string& id) const;
};

/// Mutual nearest neighbours on descriptor distance with a ratio test in
/// both directions.
MatchResult match_objects(const SceneDescriptor& demo_scene, const SceneDescriptor& new_scene,
                          double ratio = 0.8);

/// p -> R(dtheta) p + translation, with `pivot` the demo object centroid.
struct SceneTransform {
  double dtheta = 0.0;
  Vec2 translation = Vec2::Zero();
  Vec2 pivot = Vec2::Zero();

  Vec2 apply(const Vec2& p) const;
  /// Image of the pivot minus the pivot.
  Vec2 shift() const { return apply(pivot) - pivot; }
  static SceneTransform identity(const Vec2& pivot = Vec2::Zero());
  /// Rotation about `pivot` followed by a shift.
  static SceneTransform about(double dtheta, const Vec2& pivot, const Vec2& shift);
};

/// Linear interpolation of angle, pivot and shift; exact at w = 0 and 1.
SceneTransform interpolate(const SceneTransform& a, const SceneTransform& b, double w);

/// Throws TransferFailure(ContextMatching) when an anchored object has no
/// match. Anchors without an object get the identity.
std::vector<SceneTransform> compute_transforms(std::span<const Anchor> anchors, const MatchResult& matches,
                                               const SceneDescriptor& demo_scene,
                                               const SceneDescriptor& new_scene);

struct WarpKnot {
  std::size_t time = 0;
  SceneTransform transform;
  /// Demo path point at `time`, scene frame.
  Vec2 point = Vec2::Zero();
  Vec2 displacement() const { return transform.apply(point) - point; }
};

/// Interpolated warp at one timestep.
struct WarpSample {
  double dtheta = 0.0;
  Vec2 displacement = Vec2::Zero();
};

/// Intervals whose schedule grows by less than this fall back to time.
inline constexpr double kMinScheduleLength = 1e-6;

struct WarpPlan {
  std::vector<WarpKnot> knots;  // strictly increasing times, identity at both ends
  /// Optional non-decreasing schedule, one entry per timestep. Empty means
  /// the weight between knots is linear in time.
  std::vector<double> progress;

  void validate(std::size_t n) const;
  /// Schedule value at (fractional) time t.
  double position(double t) const;
  /// Angle and knot displacement interpolated linearly in the schedule
  /// between neighbouring knots; exact at knot times.
  WarpSample at(double t) const;
};

/// Cumulative scene-frame path length of the end effector.
std::vector<double> arc_length_progress(const Demonstration& demo, const Calibration& calib);

/// Knots at anchor times with corrections folded in, plus identities
/// pinned at 0 and n-1.
WarpPlan make_plan(std::span<const Anchor> anchors, std::span<const SceneTransform> transforms,
                   std::size_t n);

/// Moves the end-effector path by the interpolated displacement (in the
/// scene frame), so each anchor lands on its transformed point; turns yaw
/// by the interpolated angle and shifts joint channels by the change of the
/// arm map. z, wrench and gripper are copied. With `bounds`, leaving them
/// throws TransferFailure(TrajectoryPlanning).
Demonstration warp_trajectory(const Demonstration& demo, const WarpPlan& plan, const Calibration& calib,
                              const Bounds* bounds = nullptr);

struct TraceEntry {
  std::string stage;
  std::string status;  // ok | failed | skipped
  std::string detail;
};

using PointCorrector =
    std::function<std::vector<Vec2>(const std::vector<Anchor>&, const SceneDescriptor& demo_scene)>;

struct TransferOptions {
  double association_radius = kAssociationRadius;
  double match_ratio = 0.8;
  bool check_bounds = true;
  /// Interpolate between anchors by path length instead of time.
  bool arc_length_schedule = true;
  PointCorrector corrector;  // empty: no correction stage
};

struct TransferResult {
  Demonstration demo;
  std::vector<Anchor> anchors;
  MatchResult matches;
  std::vector<SceneTransform> transforms;
  WarpPlan plan;
  std::vector<TraceEntry> trace;
  FailureCategory failure = FailureCategory::None;
  std::string failure_detail;
  bool ok() const { return failure == FailureCategory::None; }
};

/// anchors -> (correction) -> matching -> transforms -> warp. Stops at the
/// first failing stage and records its category; never throws for a
/// stage failure.
TransferResult transfer(const Demonstration& demo, std::span<const TherbligSegment> segments,
                        const SceneDescriptor& demo_scene, const SceneDescriptor& new_scene,
                        const Calibration& calib, const TransferOptions& options = {});

std::string trace_to_json(const std::vector<TraceEntry>& trace, int indent = 2);

}  // namespace tbk::actionreg
