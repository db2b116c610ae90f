// SPDX-License-Identifier: Apache-2.0
#include "therblig/actionreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/LU>
#include <json.hpp>

#include "therblig/datagen.hpp"
#include "therblig/dataset.hpp"
#include "therblig/error.hpp"

namespace tbk::actionreg {
namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Matrix2d rot(double a) {
  Eigen::Matrix2d r;
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return r;
}

std::string fmt_point(const Vec2& p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "(%.4f, %.4f)", p.x(), p.y());
  return buf;
}

}  // namespace

std::string_view category_name(FailureCategory c) {
  switch (c) {
    case FailureCategory::None: return "none";
    case FailureCategory::TherbligSegmentation: return "TherbligSegmentation";
    case FailureCategory::ActionRegistration: return "ActionRegistration";
    case FailureCategory::ContextMatching: return "ContextMatching";
    case FailureCategory::TrajectoryPlanning: return "TrajectoryPlanning";
    case FailureCategory::Others: return "Others";
  }
  return "Others";
}

FailureCategory category_from_name(std::string_view name) {
  for (auto c : {FailureCategory::None, FailureCategory::TherbligSegmentation,
                 FailureCategory::ActionRegistration, FailureCategory::ContextMatching,
                 FailureCategory::TrajectoryPlanning, FailureCategory::Others})
    if (category_name(c) == name) return c;
  throw ValidationError("unknown failure category '" + std::string(name) + "'");
}

// ---- calibration ---------------------------------------------------------------

Calibration::Calibration() : h_(Eigen::Matrix3d::Identity()), inv_(Eigen::Matrix3d::Identity()) {}

Calibration::Calibration(const Eigen::Matrix3d& h) : h_(h) {
  if (!h.allFinite()) throw ValidationError("calibration matrix has non-finite entries");
  const double det = h.determinant();
  if (std::abs(det) <= 1e-9) throw ValidationError("calibration matrix is singular (|det| <= 1e-9)");
  inv_ = h.inverse();
}

Vec2 Calibration::to_scene(const Vec2& robot) const {
  const Eigen::Vector3d v = h_ * Eigen::Vector3d(robot.x(), robot.y(), 1.0);
  return {v.x() / v.z(), v.y() / v.z()};
}

Vec2 Calibration::to_robot(const Vec2& scene) const {
  const Eigen::Vector3d v = inv_ * Eigen::Vector3d(scene.x(), scene.y(), 1.0);
  return {v.x() / v.z(), v.y() / v.z()};
}

Calibration Calibration::load(const std::filesystem::path& path) {
  const auto text = datagen::read_file(path);
  Eigen::Matrix3d h;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& rows = j.is_object() ? j.at("H") : j;
    if (rows.size() != 3) throw ValidationError("calibration must be a 3x3 matrix");
    for (int r = 0; r < 3; ++r) {
      if (rows.at(r).size() != 3) throw ValidationError("calibration must be a 3x3 matrix");
      for (int c = 0; c < 3; ++c) h(r, c) = rows.at(r).at(c).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad calibration file '" + path.string() + "': " + e.what());
  }
  return Calibration(h);
}

std::string Calibration::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) j.push_back({h_(r, 0), h_(r, 1), h_(r, 2)});
  return nlohmann::json{{"H", j}}.dump(2);
}

// ---- orientation ---------------------------------------------------------------

double wrap_half_pi(double a) {
  double w = std::fmod(a, kPi);
  if (w <= -kPi / 2) w += kPi;
  if (w > kPi / 2) w -= kPi;
  return w;
}

OrientationEstimate estimate_orientation_pca(std::span<const Vec2> points, double min_ratio) {
  if (points.size() < 3) throw ValidationError("orientation needs at least 3 points");
  Vec2 mean = Vec2::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& p : points) {
    const Vec2 d = p - mean;
    sxx += d.x() * d.x();
    syy += d.y() * d.y();
    sxy += d.x() * d.y();
  }
  if (!(sxx + syy > 0)) throw ValidationError("degenerate point set (zero covariance trace)");
  const double disc = std::sqrt((sxx - syy) * (sxx - syy) + 4 * sxy * sxy);
  const double l1 = 0.5 * (sxx + syy + disc);
  const double l2 = 0.5 * (sxx + syy - disc);
  OrientationEstimate e;
  e.eigen_ratio = l2 > 0 ? l1 / l2 : std::numeric_limits<double>::infinity();
  if (e.eigen_ratio < min_ratio) {
    e.ill_defined = true;
    e.angle = 0.0;
    return e;
  }
  // atan2 lies in (-pi, pi], so half of it lies in (-pi/2, pi/2].
  e.angle = 0.5 * std::atan2(2 * sxy, sxx - syy);
  return e;
}

// ---- anchors -------------------------------------------------------------------

void associate_anchors(std::vector<Anchor>& anchors, const SceneDescriptor& scene, double radius) {
  for (auto& a : anchors) {
    const auto* obj = scene.nearest(a.xy, radius);
    if (obj) {
      a.object_id = obj->id;
      a.association_distance = (obj->centroid - a.xy).norm();
    } else {
      a.object_id.reset();
      a.association_distance = 0.0;
      if (a.therblig == Therblig::Grasp)
        throw TransferFailure(FailureCategory::ActionRegistration,
                              "no object within " + std::to_string(radius) + " m of Grasp anchor at t=" +
                                  std::to_string(a.timestep) + " " + fmt_point(a.xy));
    }
  }
}

std::vector<Anchor> extract_anchors(std::span<const TherbligSegment> segments, const Demonstration& demo,
                                    const SceneDescriptor& scene, const Calibration& calib,
                                    double radius) {
  if (scene.objects.empty()) throw ValidationError("scene has no objects");
  std::vector<Anchor> out;
  for (const auto& s : segments) {
    if (!is_contact_event(s.therblig)) continue;
    if (s.end > demo.length() || s.start >= s.end)
      throw ValidationError("segment outside the demonstration");
    Anchor a;
    a.therblig = s.therblig;
    a.timestep = s.midpoint();
    const auto t = static_cast<Eigen::Index>(a.timestep);
    a.xy = calib.to_scene(Vec2(demo.states(t, feature::kX), demo.states(t, feature::kY)));
    a.yaw = demo.states(t, feature::kYaw);
    out.push_back(a);
  }
  associate_anchors(out, scene, radius);
  return out;
}

// ---- matching ------------------------------------------------------------------

const ObjectMatch* MatchResult::find_demo(const std::string& id) const {
  for (const auto& m : matches)
    if (m.demo_object_id == id) return &m;
  return nullptr;
}

MatchResult match_objects(const SceneDescriptor& demo_scene, const SceneDescriptor& new_scene,
                          double ratio) {
  const auto n = demo_scene.objects.size(), m = new_scene.objects.size();
  std::size_t len = 0;
  bool have_len = false;
  for (const auto* s : {&demo_scene, &new_scene}) {
    for (const auto& o : s->objects) {
      if (!have_len) {
        len = o.descriptor.size();
        have_len = true;
      } else if (o.descriptor.size() != len) {
        throw ValidationError("descriptor lengths differ between scenes");
      }
    }
  }
  Eigen::MatrixXd dist(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const double d = demo_scene.objects[i].descriptor[k] - new_scene.objects[j].descriptor[k];
        s += d * d;
      }
      dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::sqrt(s);
    }

  // Best index and best/second ratio along one row of a distance matrix.
  auto best_of = [](const Eigen::RowVectorXd& row) {
    Eigen::Index best = -1;
    double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      if (row(j) < d1) {
        d2 = d1;
        d1 = row(j);
        best = j;
      } else if (row(j) < d2) {
        d2 = row(j);
      }
    }
    double r = 0.0;
    if (std::isfinite(d2)) r = d2 > 0 ? d1 / d2 : 1.0;
    return std::pair{best, r};
  };

  MatchResult out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& id = demo_scene.objects[i].id;
    if (m == 0) {
      out.unmatched_demo.push_back(id);
      continue;
    }
    const auto [j, r_fwd] = best_of(dist.row(static_cast<Eigen::Index>(i)));
    const auto [back, r_bwd] = best_of(dist.col(j).transpose());
    if (back != static_cast<Eigen::Index>(i)) {
      out.unmatched_demo.push_back(id);
      continue;
    }
    if (r_fwd >= ratio || r_bwd >= ratio) {
      out.ambiguous.push_back(id);
      out.unmatched_demo.push_back(id);
      continue;
    }
    out.matches.push_back({id, new_scene.objects[static_cast<std::size_t>(j)].id,
                           dist(static_cast<Eigen::Index>(i), j), 1.0 - std::max(r_fwd, r_bwd)});
  }
  return out;
}

// ---- transforms ----------------------------------------------------------------

Vec2 SceneTransform::apply(const Vec2& p) const { return rot(dtheta) * p + translation; }

SceneTransform SceneTransform::identity(const Vec2& pivot) { return {0.0, Vec2::Zero(), pivot}; }

SceneTransform SceneTransform::about(double dtheta, const Vec2& pivot, const Vec2& shift) {
  return {dtheta, pivot + shift - rot(dtheta) * pivot, pivot};
}

SceneTransform interpolate(const SceneTransform& a, const SceneTransform& b, double w) {
  if (w <= 0.0) return a;
  if (w >= 1.0) return b;
  const double th = (1 - w) * a.dtheta + w * b.dtheta;
  const Vec2 pivot = (1 - w) * a.pivot + w * b.pivot;
  const Vec2 shift = (1 - w) * a.shift() + w * b.shift();
  return SceneTransform::about(th, pivot, shift);
}

std::vector<SceneTransform> compute_transforms(std::span<const Anchor> anchors, const MatchResult& matches,
                                               const SceneDescriptor& demo_scene,
                                               const SceneDescriptor& new_scene) {
  std::vector<SceneTransform> out;
  for (const auto& a : anchors) {
    if (!a.object_id) {
      out.push_back(SceneTransform::identity(a.xy));
      continue;
    }
    const auto* m = matches.find_demo(*a.object_id);
    if (!m)
      throw TransferFailure(FailureCategory::ContextMatching,
                            "object '" + *a.object_id + "' has no match in the new scene");
    const auto* od = demo_scene.find(m->demo_object_id);
    const auto* on = new_scene.find(m->new_object_id);
    if (!od || !on) throw TransferFailure(FailureCategory::ContextMatching, "matched object missing");
    const double dth = wrap_half_pi(on->orientation - od->orientation);
    SceneTransform t;
    t.dtheta = dth;
    t.pivot = od->centroid;
    t.translation = on->centroid - rot(dth) * od->centroid;
    out.push_back(t);
  }
  return out;
}

// ---- warping -------------------------------------------------------------------

void WarpPlan::validate(std::size_t n) const {
  if (knots.size() < 2) throw ValidationError("warp plan needs at least two knots");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (knots[i].time >= n) throw ValidationError("warp knot outside the trajectory");
    if (i > 0 && knots[i].time <= knots[i - 1].time)
      throw ValidationError("warp knot times must be strictly increasing");
  }
  const auto& f = knots.front().transform;
  const auto& l = knots.back().transform;
  if (knots.front().time != 0 || knots.back().time != n - 1 || f.dtheta != 0 ||
      !f.translation.isZero(0) || l.dtheta != 0 || !l.translation.isZero(0))
    throw ValidationError("warp plan must be pinned to identity at both ends");
}

double WarpPlan::position(double t) const {
  if (progress.empty()) return t;
  const double last = static_cast<double>(progress.size() - 1);
  t = std::clamp(t, 0.0, last);
  const auto i = static_cast<std::size_t>(std::floor(t));
  if (static_cast<double>(i) == t || i + 1 >= progress.size()) return progress[i];
  const double f = t - static_cast<double>(i);
  return (1 - f) * progress[i] + f * progress[i + 1];
}

WarpSample WarpPlan::at(double t) const {
  auto sample = [](const WarpKnot& k) { return WarpSample{k.transform.dtheta, k.displacement()}; };
  if (t <= static_cast<double>(knots.front().time)) return sample(knots.front());
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double a = static_cast<double>(knots[i].time), b = static_cast<double>(knots[i + 1].time);
    if (t > b) continue;
    double w = (t - a) / (b - a);
    if (!progress.empty()) {
      const double pa = position(a), pb = position(b);
      if (pb - pa > kMinScheduleLength) w = (position(t) - pa) / (pb - pa);
    }
    if (w <= 0.0) return sample(knots[i]);
    if (w >= 1.0) return sample(knots[i + 1]);
    return {(1 - w) * knots[i].transform.dtheta + w * knots[i + 1].transform.dtheta,
            (1 - w) * knots[i].displacement() + w * knots[i + 1].displacement()};
  }
  return sample(knots.back());
}

std::vector<double> arc_length_progress(const Demonstration& demo, const Calibration& calib) {
  std::vector<double> out(demo.length(), 0.0);
  Vec2 prev = Vec2::Zero();
  for (std::size_t i = 0; i < demo.length(); ++i) {
    const auto t = static_cast<Eigen::Index>(i);
    const Vec2 p = calib.to_scene(Vec2(demo.states(t, feature::kX), demo.states(t, feature::kY)));
    if (i > 0) out[i] = out[i - 1] + (p - prev).norm();
    prev = p;
  }
  return out;
}

WarpPlan make_plan(std::span<const Anchor> anchors, std::span<const SceneTransform> transforms,
                   std::size_t n) {
  if (anchors.size() != transforms.size()) throw ValidationError("one transform per anchor required");
  if (n < 2) throw ValidationError("trajectory too short to warp");
  std::vector<WarpKnot> inner;
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    SceneTransform t = transforms[k];
    t.translation += rot(t.dtheta) * anchors[k].correction;
    inner.push_back({anchors[k].timestep, t, anchors[k].xy - anchors[k].correction});
  }
  std::sort(inner.begin(), inner.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  WarpPlan plan;
  plan.knots.push_back({0, SceneTransform::identity(), Vec2::Zero()});
  for (auto& k : inner) {
    if (k.time == 0 || k.time >= n - 1)
      throw TransferFailure(FailureCategory::ActionRegistration, "anchor at a trajectory endpoint");
    if (k.time == plan.knots.back().time)
      throw TransferFailure(FailureCategory::ActionRegistration, "two anchors share a timestep");
    plan.knots.push_back(k);
  }
  plan.knots.push_back({n - 1, SceneTransform::identity(), Vec2::Zero()});
  return plan;
}

Demonstration warp_trajectory(const Demonstration& demo, const WarpPlan& plan, const Calibration& calib,
                              const Bounds* bounds) {
  const auto n = demo.length();
  plan.validate(n);
  if (!plan.progress.empty() && plan.progress.size() != n)
    throw ValidationError("warp schedule must have one entry per timestep");
  if (demo.states.cols() != kNumFeatures) throw ValidationError("demonstration must have 26 features");
  Demonstration out = demo;
  Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 7);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = static_cast<Eigen::Index>(i);
    const auto tr = plan.at(static_cast<double>(i));
    const Vec2 p_robot(demo.states(t, feature::kX), demo.states(t, feature::kY));
    const Vec2 p_scene = calib.to_scene(p_robot) + tr.displacement;
    if (bounds && !bounds->contains(p_scene))
      throw TransferFailure(FailureCategory::TrajectoryPlanning,
                            "warped path leaves the workspace at t=" + std::to_string(i) + " " +
                                fmt_point(p_scene));
    const Vec2 q = calib.to_robot(p_scene);
    out.states(t, feature::kX) = q.x();
    out.states(t, feature::kY) = q.y();
    out.states(t, feature::kYaw) = demo.states(t, feature::kYaw) + tr.dtheta;

    std::array<double, 6> before{}, after{};
    for (int k = 0; k < 6; ++k) {
      before[k] = demo.states(t, feature::kX + k);
      after[k] = out.states(t, feature::kX + k);
    }
    if (before != after) {
      const auto qb = datagen::ArmMap::joints(before);
      const auto qa = datagen::ArmMap::joints(after);
      for (int j = 0; j < 7; ++j) dq(t, j) = qa[j] - qb[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = static_cast<Eigen::Index>(i);
    for (int j = 0; j < 7; ++j) {
      out.states(t, feature::kJointAngles + j) += dq(t, j);
      if (i > 0) out.states(t, feature::kJointSpeeds + j) += (dq(t, j) - dq(t - 1, j)) * demo.sample_rate_hz;
    }
  }
  return out;
}

// ---- pipeline ------------------------------------------------------------------

TransferResult transfer(const Demonstration& demo, std::span<const TherbligSegment> segments,
                        const SceneDescriptor& demo_scene, const SceneDescriptor& new_scene,
                        const Calibration& calib, const TransferOptions& options) {
  TransferResult r;
  std::string stage = "segments";
  auto fail = [&](FailureCategory c, const std::string& detail) {
    r.failure = c;
    r.failure_detail = detail;
    r.trace.push_back({stage, "failed", std::string(category_name(c)) + ": " + detail});
  };
  try {
    std::vector<Therblig> order;
    for (const auto& s : segments) order.push_back(s.therblig);
    if (std::none_of(order.begin(), order.end(), [](Therblig t) { return is_contact_event(t); })) {
      fail(FailureCategory::TherbligSegmentation, "no Grasp, Use or Release segment");
      return r;
    }
    r.trace.push_back({stage, "ok", std::to_string(segments.size()) + " segments"});

    stage = "anchors";
    r.anchors = extract_anchors(segments, demo, demo_scene, calib, options.association_radius);
    r.trace.push_back({stage, "ok", std::to_string(r.anchors.size()) + " anchors"});

    stage = "correction";
    if (options.corrector) {
      const auto corrected = options.corrector(r.anchors, demo_scene);
      if (corrected.size() != r.anchors.size())
        throw TransferFailure(FailureCategory::Others, "correction changed the point count");
      double moved = 0;
      for (std::size_t k = 0; k < corrected.size(); ++k) {
        r.anchors[k].correction = corrected[k] - r.anchors[k].xy;
        r.anchors[k].xy = corrected[k];
        moved = std::max(moved, r.anchors[k].correction.norm());
      }
      associate_anchors(r.anchors, demo_scene, options.association_radius);
      char buf[64];
      std::snprintf(buf, sizeof buf, "max shift %.4f m", moved);
      r.trace.push_back({stage, "ok", buf});
    } else {
      r.trace.push_back({stage, "skipped", "no policy"});
    }

    stage = "matching";
    r.matches = match_objects(demo_scene, new_scene, options.match_ratio);
    r.trace.push_back({stage, "ok", std::to_string(r.matches.matches.size()) + " matches, " +
                                        std::to_string(r.matches.unmatched_demo.size()) + " unmatched"});

    stage = "transforms";
    r.transforms = compute_transforms(r.anchors, r.matches, demo_scene, new_scene);
    r.trace.push_back({stage, "ok", std::to_string(r.transforms.size()) + " transforms"});

    stage = "warp";
    r.plan = make_plan(r.anchors, r.transforms, demo.length());
    if (options.arc_length_schedule) r.plan.progress = arc_length_progress(demo, calib);
    r.demo = warp_trajectory(demo, r.plan, calib, options.check_bounds ? &new_scene.workspace : nullptr);
    r.trace.push_back({stage, "ok", std::to_string(r.plan.knots.size()) + " knots"});
  } catch (const TransferFailure& e) {
    fail(e.category(), e.what());
  } catch (const std::exception& e) {
    fail(FailureCategory::Others, e.what());
  }
  return r;
}

std::string trace_to_json(const std::vector<TraceEntry>& trace, int indent) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : trace) j.push_back({{"stage", t.stage}, {"status", t.status}, {"detail", t.detail}});
  return j.dump(indent);
}

}  // namespace tbk::actionreg
