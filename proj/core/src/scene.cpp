// SPDX-License-Identifier: Apache-2.0
#include "therblig/scene.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "therblig/error.hpp"

namespace tbk {

using nlohmann::json;

double SceneObject::bbox_diagonal() const {
  if (points.empty()) return 0.0;
  Vec2 lo = points.front(), hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

const SceneObject* SceneDescriptor::find(const std::string& id) const {
  for (const auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

const SceneObject* SceneDescriptor::nearest(const Vec2& p, double radius) const {
  const SceneObject* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& o : objects) {
    const double d = (o.centroid - p).norm();
    if (d <= radius && d < best_d) {
      best = &o;
      best_d = d;
    }
  }
  return best;
}

void validate_scene(const SceneDescriptor& scene) {
  std::vector<std::string> problems;
  const auto& w = scene.workspace;
  if (!(w.xmax > w.xmin && w.ymax > w.ymin)) problems.push_back("empty workspace bounds");
  std::set<std::string> ids;
  std::optional<std::size_t> descriptor_len;
  for (const auto& o : scene.objects) {
    if (!ids.insert(o.id).second) problems.push_back("duplicate object id '" + o.id + "'");
    if (!w.contains(o.centroid)) problems.push_back("centroid of '" + o.id + "' outside workspace");
    if (o.points.size() < 3) {
      problems.push_back("object '" + o.id + "' has fewer than 3 points");
    } else {
      Vec2 mean = Vec2::Zero();
      for (const auto& p : o.points) mean += p;
      mean /= static_cast<double>(o.points.size());
      double trace = 0.0;
      for (const auto& p : o.points) trace += (p - mean).squaredNorm();
      if (!(trace > 0.0)) problems.push_back("object '" + o.id + "' has degenerate points");
    }
    if (descriptor_len && *descriptor_len != o.descriptor.size())
      problems.push_back("descriptor length differs for '" + o.id + "'");
    descriptor_len = o.descriptor.size();
  }
  if (!problems.empty()) {
    std::ostringstream os;
    os << "invalid scene:";
    for (const auto& p : problems) os << "\n  - " << p;
    throw ValidationError(os.str());
  }
}

std::string scene_to_json(const SceneDescriptor& scene, int indent) {
  json doc;
  doc["workspace"] = {scene.workspace.xmin, scene.workspace.ymin, scene.workspace.xmax,
                      scene.workspace.ymax};
  doc["objects"] = json::array();
  for (const auto& o : scene.objects) {
    json pts = json::array();
    for (const auto& p : o.points) pts.push_back({p.x(), p.y()});
    doc["objects"].push_back({{"id", o.id},
                              {"class", o.class_name},
                              {"centroid", {o.centroid.x(), o.centroid.y()}},
                              {"orientation", o.orientation},
                              {"points", pts},
                              {"descriptor", o.descriptor}});
  }
  return doc.dump(indent);
}

SceneDescriptor scene_from_json(const std::string& text) {
  SceneDescriptor scene;
  try {
    const json doc = json::parse(text);
    const auto& w = doc.at("workspace");
    if (w.size() != 4) throw ValidationError("workspace must be [xmin,ymin,xmax,ymax]");
    scene.workspace = {w[0].get<double>(), w[1].get<double>(), w[2].get<double>(),
                       w[3].get<double>()};
    for (const auto& jo : doc.at("objects")) {
      SceneObject o;
      o.id = jo.at("id").get<std::string>();
      o.class_name = jo.at("class").get<std::string>();
      const auto& c = jo.at("centroid");
      o.centroid = {c.at(0).get<double>(), c.at(1).get<double>()};
      o.orientation = jo.at("orientation").get<double>();
      for (const auto& p : jo.at("points"))
        o.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      o.descriptor = jo.at("descriptor").get<std::vector<double>>();
      scene.objects.push_back(std::move(o));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scene JSON: ") + e.what());
  }
  validate_scene(scene);
  return scene;
}

SceneDescriptor load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scene file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return scene_from_json(ss.str());
}

void save_scene(const SceneDescriptor& scene, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFault("cannot write scene file " + path.string());
  out << scene_to_json(scene) << '\n';
}

}  // namespace tbk
