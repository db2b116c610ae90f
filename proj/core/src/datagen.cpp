// SPDX-License-Identifier: Apache-2.0
#include "therblig/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "therblig/error.hpp"
#include "therblig/rng.hpp"

namespace tbk::datagen {
namespace {

using T = Therblig;
constexpr double kPi = std::numbers::pi;

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

/// Maps [-pi/2, pi/2) draws onto (-pi/2, pi/2].
double half_open_orientation(double a) { return a <= -kPi / 2 ? kPi / 2 : a; }

double min_jerk(double tau) {
  const double t = std::clamp(tau, 0.0, 1.0);
  return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

GrammarStep step(Therblig t, int lo, int hi, Role role = Role::None) { return {t, lo, hi, role}; }

struct Pose {
  Vec2 xy;
  double z;
  double yaw;
};

}  // namespace

std::string_view role_name(Role r) {
  switch (r) {
    case Role::None: return "none";
    case Role::Source: return "source";
    case Role::Destination: return "destination";
    case Role::Tool: return "tool";
  }
  return "none";
}

std::vector<Role> TaskTemplate::roles() const {
  std::vector<Role> out;
  for (const auto& s : grammar) {
    if (!is_contact_event(s.therblig) || s.role == Role::None) continue;
    if (std::find(out.begin(), out.end(), s.role) == out.end()) out.push_back(s.role);
  }
  return out;
}

bool grammar_valid(std::span<const Therblig> order) {
  if (order.empty() || order.front() != T::Rest || order.back() != T::Rest) return false;
  bool holding = false;
  bool transported = false;
  for (const auto t : order) {
    switch (t) {
      case T::Rest:
      case T::TransportEmpty:
      case T::Delay:
        break;
      case T::Grasp:
        if (holding) return false;
        holding = true;
        transported = false;
        break;
      case T::TransportLoaded:
        if (!holding) return false;
        transported = true;
        break;
      case T::Use:
        if (!holding) return false;
        break;
      case T::Release:
        if (!holding || !transported) return false;
        holding = false;
        break;
    }
  }
  return !holding;
}

void validate_template(const TaskTemplate& tmpl) {
  if (tmpl.grammar.empty()) throw ValidationError("template '" + tmpl.name + "' has no steps");
  std::vector<Therblig> order;
  for (const auto& s : tmpl.grammar) {
    if (s.min_steps < 1 || s.max_steps < s.min_steps) {
      throw ValidationError("template '" + tmpl.name + "': bad duration range for " +
                            std::string(therblig_name(s.therblig)));
    }
    if (is_contact_event(s.therblig) && s.role == Role::None) {
      throw ValidationError("template '" + tmpl.name + "': contact event without role");
    }
    if (!order.empty() && order.back() == s.therblig) {
      throw ValidationError("template '" + tmpl.name + "': repeated adjacent therblig " +
                            std::string(therblig_name(s.therblig)));
    }
    order.push_back(s.therblig);
  }
  if (!grammar_valid(order)) {
    throw ValidationError("template '" + tmpl.name + "' violates the therblig grammar");
  }
}

std::vector<TaskTemplate> training_templates() {
  const auto S = Role::Source, D = Role::Destination, K = Role::Tool;
  return {
      {"tool_pick_place",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, S),
        step(T::TransportLoaded, 50, 75), step(T::Delay, 20, 35),
        step(T::Release, 18, 30, D), step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       1.0},
      {"crossbeam_cutting",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, K),
        step(T::TransportLoaded, 50, 75), step(T::Use, 90, 140, S),
        step(T::TransportLoaded, 50, 75), step(T::Release, 18, 30, K),
        step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       1.5},
      {"bricks_gluing",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, S),
        step(T::TransportLoaded, 50, 75), step(T::Use, 50, 80, D), step(T::Delay, 20, 35),
        step(T::Release, 18, 30, D), step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       0.5},
      {"tissue_sweeping",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, K),
        step(T::TransportLoaded, 50, 75), step(T::Use, 80, 120, S),
        step(T::TransportLoaded, 50, 75), step(T::Release, 18, 30, K),
        step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       0.8},
      {"surface_wiping",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, K),
        step(T::TransportLoaded, 50, 75), step(T::Use, 90, 130, S), step(T::Delay, 20, 35),
        step(T::TransportLoaded, 50, 75), step(T::Release, 18, 30, K),
        step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       0.6},
      {"cup_pouring",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, S),
        step(T::TransportLoaded, 50, 75), step(T::Use, 50, 70, D),
        step(T::TransportLoaded, 50, 75), step(T::Release, 18, 30, S),
        step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       0.3},
  };
}

std::vector<TaskTemplate> evaluation_templates() {
  const auto S = Role::Source, D = Role::Destination, K = Role::Tool;
  return {
      {"board_rolling",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, K),
        step(T::TransportLoaded, 50, 75), step(T::Use, 70, 100, S),
        step(T::TransportLoaded, 50, 75), step(T::Release, 18, 30, K),
        step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       0.7},
      {"foamblock_flipping",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, S),
        step(T::Use, 30, 50, S), step(T::TransportLoaded, 50, 75),
        step(T::Release, 18, 30, D), step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       0.4},
      {"plate_scrubbing",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, K),
        step(T::TransportLoaded, 50, 75), step(T::Use, 90, 120, S),
        step(T::TransportLoaded, 50, 75), step(T::Release, 18, 30, K),
        step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       1.2},
      {"spoon_tilting",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, S),
        step(T::TransportLoaded, 50, 75), step(T::Use, 40, 60, D), step(T::Delay, 20, 35),
        step(T::TransportLoaded, 50, 75), step(T::Release, 18, 30, S),
        step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       0.3},
      {"paper_stamping",
       {step(T::Rest, 20, 20), step(T::TransportEmpty, 50, 75), step(T::Grasp, 20, 35, K),
        step(T::TransportLoaded, 50, 75), step(T::Use, 25, 40, S),
        step(T::TransportLoaded, 50, 75), step(T::Release, 18, 30, D),
        step(T::TransportEmpty, 50, 75), step(T::Rest, 20, 20)},
       0.5},
  };
}

const TaskTemplate& find_template(const std::vector<TaskTemplate>& all, const std::string& name) {
  for (const auto& t : all)
    if (t.name == name) return t;
  throw ValidationError("unknown task template '" + name + "'");
}

// ---- arm map ---------------------------------------------------------------

const std::array<std::array<double, 6>, 7> ArmMap::kMatrix = {{
    {1.10, -0.60, 0.40, 0.00, 0.10, 0.20},
    {0.50, 0.90, -0.70, 0.05, 0.00, -0.10},
    {-0.40, 0.30, 1.20, 0.00, 0.15, 0.05},
    {0.80, -0.20, 0.60, 0.10, 0.00, 0.30},
    {0.20, 0.70, -0.30, 0.00, 0.20, -0.40},
    {-0.60, 0.50, 0.90, 0.05, 0.10, 0.60},
    {0.30, -0.40, 0.20, 0.00, 0.00, 1.00},
}};
const std::array<double, 7> ArmMap::kOffset = {0.1, -0.3, 0.2, -1.2, 0.0, 0.5, -0.2};

std::array<double, 7> ArmMap::joints(const std::array<double, 6>& pose) {
  std::array<double, 7> q{};
  for (int j = 0; j < 7; ++j) {
    double v = kOffset[j];
    for (int k = 0; k < 6; ++k) v += kMatrix[j][k] * pose[k];
    q[j] = std::clamp(v, -kPi, kPi);
  }
  return q;
}

void apply_arm_map(FeatureMatrix& states, double sample_rate_hz) {
  const Eigen::Index n = states.rows();
  for (Eigen::Index t = 0; t < n; ++t) {
    std::array<double, 6> pose{};
    for (int k = 0; k < 6; ++k) pose[k] = states(t, feature::kX + k);
    const auto q = ArmMap::joints(pose);
    for (int j = 0; j < 7; ++j) states(t, feature::kJointAngles + j) = q[j];
  }
  update_joint_speeds(states, sample_rate_hz);
}

void update_joint_speeds(FeatureMatrix& states, double sample_rate_hz) {
  const Eigen::Index n = states.rows();
  for (Eigen::Index t = 0; t < n; ++t) {
    for (int j = 0; j < 7; ++j) {
      states(t, feature::kJointSpeeds + j) =
          t == 0 ? 0.0
                 : (states(t, feature::kJointAngles + j) -
                    states(t - 1, feature::kJointAngles + j)) *
                       sample_rate_hz;
    }
  }
}

// ---- demonstrations ----------------------------------------------------------

GeneratedDemo generate_demo(const TaskTemplate& tmpl, const SceneDescriptor& scene,
                            std::uint64_t seed, const NoiseConfig& noise, int duration,
                            double sample_rate_hz) {
  validate_template(tmpl);
  const auto roles = tmpl.roles();
  if (scene.objects.size() < roles.size()) {
    throw ValidationError("template '" + tmpl.name + "' needs " + std::to_string(roles.size()) +
                          " task objects, scene has " + std::to_string(scene.objects.size()));
  }
  std::map<Role, const SceneObject*> bound;
  for (std::size_t i = 0; i < roles.size(); ++i) bound[roles[i]] = &scene.objects[i];

  Rng rng(derive_seed(seed, "demo"));

  // Durations: non-Rest steps drawn from their ranges, the bracketing Rest
  // steps absorb the remainder.
  const auto& g = tmpl.grammar;
  std::vector<int> len(g.size(), 0);
  int fixed = 0, rest_min = 0;
  std::vector<std::size_t> rest_steps;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i].therblig == T::Rest) {
      rest_steps.push_back(i);
      rest_min += g[i].min_steps;
    } else {
      len[i] = static_cast<int>(rng.uniform_int(g[i].min_steps, g[i].max_steps));
      fixed += len[i];
    }
  }
  const int remainder = duration - fixed;
  if (remainder < rest_min) {
    throw ValidationError("template '" + tmpl.name + "' cannot fit in " +
                          std::to_string(duration) + " steps (needs at least " +
                          std::to_string(fixed + rest_min) + ")");
  }
  {
    int left = remainder;
    for (std::size_t k = 0; k < rest_steps.size(); ++k) {
      const auto i = rest_steps[k];
      if (k + 1 == rest_steps.size()) {
        len[i] = left;
      } else {
        int others = 0;
        for (std::size_t j = k + 1; j < rest_steps.size(); ++j) others += g[rest_steps[j]].min_steps;
        const double even = static_cast<double>(left) / static_cast<double>(rest_steps.size() - k);
        const int share = static_cast<int>(std::lround(even * rng.uniform(0.6, 1.4)));
        len[i] = std::clamp(share, g[i].min_steps, left - others);
      }
      left -= len[i];
    }
  }

  GeneratedDemo out;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.phases.push_back({g[i].therblig, cursor, cursor + static_cast<std::size_t>(len[i])});
    cursor += static_cast<std::size_t>(len[i]);
  }

  const auto n = static_cast<Eigen::Index>(duration);
  FeatureMatrix states = FeatureMatrix::Zero(n, kNumFeatures);
  const Pose home{{kHomeX, kHomeY}, kHomeZ, 0.0};
  Pose pose = home;
  const double dt = 1.0 / sample_rate_hz;

  auto contact_pose = [&](std::size_t step_index) {
    const auto* obj = bound.at(g[step_index].role);
    return Pose{obj->centroid, kWorkZ, obj->orientation};
  };
  auto next_target = [&](std::size_t from) {
    for (std::size_t j = from + 1; j < g.size(); ++j)
      if (is_contact_event(g[j].therblig)) return contact_pose(j);
    return home;
  };

  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& ph = out.phases[i];
    const auto L = static_cast<int>(ph.length());
    const auto mid = static_cast<int>(ph.midpoint() - ph.start);
    const Pose start = pose;
    Pose target = pose;
    if (g[i].therblig == T::TransportEmpty || g[i].therblig == T::TransportLoaded) {
      target = next_target(i);
    } else if (is_contact_event(g[i].therblig)) {
      target = contact_pose(i);
    } else if (g[i].therblig == T::Rest) {
      target = home;
    }
    const Vec2 axis(std::cos(target.yaw), std::sin(target.yaw));
    for (int k = 0; k < L; ++k) {
      const auto t = static_cast<Eigen::Index>(ph.start) + k;
      Pose p = target;
      double fx = 0, fy = 0, fz = 0, tz = 0;
      switch (g[i].therblig) {
        case T::TransportEmpty:
        case T::TransportLoaded: {
          const double tau = static_cast<double>(k + 1) / L;
          const double s = min_jerk(tau);
          p.xy = start.xy + s * (target.xy - start.xy);
          p.z = start.z + s * (target.z - start.z) + 0.08 * std::sin(kPi * s);
          p.yaw = start.yaw + s * (target.yaw - start.yaw);
          break;
        }
        case T::Grasp:
          fz = -6.0 * (k + 1) / L;
          break;
        case T::Release:
          fz = -3.0 * (1.0 - static_cast<double>(k + 1) / L);
          break;
        case T::Use: {
          const double phase = 2.0 * kPi * tmpl.use_frequency_hz * (k - mid) * dt;
          p.xy = target.xy + 0.01 * std::sin(phase) * axis;
          fx = 3.0 * std::sin(phase) * axis.x();
          fy = 3.0 * std::sin(phase) * axis.y();
          fz = -4.0 + 1.5 * std::sin(2.0 * phase);
          tz = 0.3 * std::sin(phase);
          break;
        }
        case T::Delay:
        case T::Rest:
          break;
      }
      states(t, feature::kX) = p.xy.x();
      states(t, feature::kY) = p.xy.y();
      states(t, feature::kZ) = p.z;
      states(t, feature::kRoll) = kPi;
      states(t, feature::kPitch) = 0.0;
      states(t, feature::kYaw) = p.yaw;
      states(t, feature::kForce + 0) = fx;
      states(t, feature::kForce + 1) = fy;
      states(t, feature::kForce + 2) = fz;
      states(t, feature::kTorque + 2) = tz;
      if (k == L - 1) pose = p;
    }
    if (is_contact_event(g[i].therblig)) {
      const auto t = static_cast<Eigen::Index>(ph.midpoint());
      out.anchors.push_back({g[i].therblig, ph.midpoint(),
                             Vec2(round_f32(states(t, feature::kX)), round_f32(states(t, feature::kY))),
                             round_f32(states(t, feature::kYaw)), bound.at(g[i].role)->id});
    }
  }

  // Force noise and drift, then noisy joints from the pose.
  std::array<double, 6> slopes{};
  for (auto& s : slopes) s = rng.uniform(-noise.force_drift_rate, noise.force_drift_rate);
  for (Eigen::Index t = 0; t < n; ++t) {
    for (int k = 0; k < 6; ++k) {
      states(t, feature::kForce + k) +=
          rng.normal(0.0, noise.force_sigma) + slopes[k] * static_cast<double>(t);
    }
  }
  apply_arm_map(states, sample_rate_hz);
  for (Eigen::Index t = 0; t < n; ++t)
    for (int j = 0; j < 7; ++j)
      states(t, feature::kJointAngles + j) += rng.normal(0.0, noise.state_sigma);
  update_joint_speeds(states, sample_rate_hz);
  states = states.unaryExpr([](double v) { return round_f32(v); });

  out.demo.states = std::move(states);
  out.demo.sample_rate_hz = sample_rate_hz;
  out.demo.task_id = tmpl.name;

  // Gripper closes at the Grasp midpoint and opens at the Release midpoint.
  out.demo.gripper.assign(static_cast<std::size_t>(duration), false);
  bool closed = false;
  std::size_t last = 0;
  for (const auto& ph : out.phases) {
    if (ph.therblig == T::Grasp || ph.therblig == T::Release) {
      const auto m = ph.midpoint();
      for (std::size_t t = last; t < m; ++t) out.demo.gripper[t] = closed;
      last = m;
      closed = ph.therblig == T::Grasp;
    }
  }
  for (std::size_t t = last; t < out.demo.gripper.size(); ++t) out.demo.gripper[t] = closed;

  // Labels: the exact phases with every internal boundary shifted by up to
  // `label_jitter` steps, keeping each run non-empty.
  std::vector<std::size_t> bounds;
  for (std::size_t i = 1; i < out.phases.size(); ++i) bounds.push_back(out.phases[i].start);
  std::size_t prev = 0;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const long long shift =
        noise.label_jitter > 0 ? rng.uniform_int(-noise.label_jitter, noise.label_jitter) : 0;
    const std::size_t next = i + 1 < bounds.size() ? bounds[i + 1] : out.phases.back().end;
    const auto lo = static_cast<long long>(prev) + 1;
    const auto hi = static_cast<long long>(next) - 1;
    bounds[i] = static_cast<std::size_t>(
        std::clamp(static_cast<long long>(bounds[i]) + shift, lo, std::max(lo, hi)));
    prev = bounds[i];
  }
  std::vector<TherbligSegment> jittered;
  std::size_t start = 0;
  for (std::size_t i = 0; i < out.phases.size(); ++i) {
    const std::size_t end = i < bounds.size() ? bounds[i] : out.phases.back().end;
    jittered.push_back({out.phases[i].therblig, start, end});
    start = end;
  }
  out.labels = labels_from_segments(jittered);
  return out;
}

// ---- scenes ------------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 10> kTaskClasses = {
    "tool", "beam", "brick", "brush", "sponge", "cup", "roller", "plate", "spoon", "stamp"};
constexpr std::array<std::string_view, 8> kDistractorClasses = {
    "box", "bottle", "tape", "marker", "block", "bowl", "can", "cloth"};

struct Identity {
  std::string class_name;
  double length = 0.0;
  double width = 0.0;
  std::vector<double> descriptor;
};

Identity draw_identity(Rng& rng, std::string_view cls, int descriptor_length) {
  Identity id;
  id.class_name = std::string(cls);
  id.length = rng.uniform(0.05, 0.10);
  id.width = id.length * rng.uniform(0.4, 0.6);
  id.descriptor.resize(static_cast<std::size_t>(descriptor_length));
  for (auto& d : id.descriptor) d = rng.normal();
  return id;
}

/// 5 x 3 grid over the footprint; symmetric, so its mean is the centroid and
/// its principal axis is the orientation.
std::vector<Vec2> footprint(const Vec2& c, double yaw, double length, double width) {
  std::vector<Vec2> pts;
  const Vec2 ax(std::cos(yaw), std::sin(yaw));
  const Vec2 ay(-ax.y(), ax.x());
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double u = (i - 2) / 4.0 * length;
      const double v = (j - 1) / 2.0 * width;
      const Vec2 p = c + u * ax + v * ay;
      pts.emplace_back(round_f32(p.x()), round_f32(p.y()));
    }
  }
  return pts;
}

SceneObject place(const Identity& id, std::string obj_id, Rng& layout,
                  const std::vector<SceneObject>& placed, const SceneGenConfig& cfg,
                  double descriptor_noise) {
  const auto& w = cfg.workspace;
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const Vec2 c(round_f32(layout.uniform(w.xmin + cfg.edge_margin, w.xmax - cfg.edge_margin)),
                 round_f32(layout.uniform(w.ymin + cfg.edge_margin, w.ymax - cfg.edge_margin)));
    bool ok = true;
    for (const auto& o : placed) {
      if ((o.centroid - c).norm() < cfg.min_separation) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    SceneObject obj;
    obj.id = std::move(obj_id);
    obj.class_name = id.class_name;
    obj.centroid = c;
    obj.orientation = round_f32(half_open_orientation(layout.uniform(-kPi / 2, kPi / 2)));
    obj.points = footprint(c, obj.orientation, id.length, id.width);
    obj.descriptor = id.descriptor;
    for (auto& d : obj.descriptor) d = round_f32(d + layout.normal(0.0, descriptor_noise));
    return obj;
  }
  throw ValidationError("could not place object after " + std::to_string(cfg.max_attempts) +
                        " attempts; use a larger workspace or fewer objects");
}

}  // namespace

SceneDescriptor generate_layout(int num_task_objects, int num_distractors,
                                std::uint64_t identity_seed, std::uint64_t layout_seed,
                                const SceneGenConfig& config) {
  if (num_task_objects < 0 || num_distractors < 0)
    throw ValidationError("object counts must be non-negative");
  SceneDescriptor scene;
  scene.workspace = config.workspace;

  Rng task_layout(derive_seed(layout_seed, "task-layout"));
  for (int k = 0; k < num_task_objects; ++k) {
    Rng ident(derive_seed(identity_seed, "task-" + std::to_string(k)));
    const auto cls = kTaskClasses[static_cast<std::size_t>(
        ident.uniform_int(0, static_cast<long long>(kTaskClasses.size()) - 1))];
    const auto id = draw_identity(ident, cls, config.descriptor_length);
    scene.objects.push_back(place(id, "obj" + std::to_string(k), task_layout, scene.objects,
                                  config, config.descriptor_noise));
  }
  Rng distractor_rng(derive_seed(layout_seed, "distractors"));
  for (int k = 0; k < num_distractors; ++k) {
    const auto cls = kDistractorClasses[static_cast<std::size_t>(
        distractor_rng.uniform_int(0, static_cast<long long>(kDistractorClasses.size()) - 1))];
    const auto id = draw_identity(distractor_rng, cls, config.descriptor_length);
    scene.objects.push_back(place(id, "distractor" + std::to_string(k), distractor_rng,
                                  scene.objects, config, 0.0));
  }
  validate_scene(scene);
  return scene;
}

SceneDescriptor generate_scene(int num_task_objects, int num_distractors, std::uint64_t seed,
                               const SceneGenConfig& config) {
  return generate_layout(num_task_objects, num_distractors, seed, seed, config);
}

}  // namespace tbk::datagen
