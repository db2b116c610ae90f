// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tbk {

using Vec2 = Eigen::Vector2d;

/// Axis-aligned workspace rectangle, meters.
struct Bounds {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  bool contains(const Vec2& p, double tol = 0.0) const {
    return p.x() >= xmin - tol && p.x() <= xmax + tol && p.y() >= ymin - tol &&
           p.y() <= ymax + tol;
  }
};

/// Stand-in for a perceived object: what segmentation, detection and
/// feature extraction would have produced.
struct SceneObject {
  std::string id;
  std::string class_name;
  Vec2 centroid = Vec2::Zero();
  double orientation = 0.0;  // radians, (-pi/2, pi/2]
  std::vector<Vec2> points;
  std::vector<double> descriptor;

  /// Diagonal of the axis-aligned bounding box of `points`.
  double bbox_diagonal() const;
};

struct SceneDescriptor {
  std::vector<SceneObject> objects;
  Bounds workspace;

  const SceneObject* find(const std::string& id) const;
  /// Object with the nearest centroid, if any lies within `radius`.
  const SceneObject* nearest(const Vec2& p, double radius) const;
};

/// Throws ValidationError describing every problem found.
void validate_scene(const SceneDescriptor& scene);

std::string scene_to_json(const SceneDescriptor& scene, int indent = 2);
SceneDescriptor scene_from_json(const std::string& text);
SceneDescriptor load_scene(const std::filesystem::path& path);
void save_scene(const SceneDescriptor& scene, const std::filesystem::path& path);

}  // namespace tbk
