// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "therblig/actionreg.hpp"
#include "therblig/datagen.hpp"
#include "therblig/error.hpp"
#include "therblig/rng.hpp"

using namespace tbk;
using namespace tbk::actionreg;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

Vec2 rotate(const Vec2& p, double a) {
  return {std::cos(a) * p.x() - std::sin(a) * p.y(), std::sin(a) * p.x() + std::cos(a) * p.y()};
}

// Rectangle of 9 x 3 points, long side along `angle`.
SceneObject make_object(const std::string& id, const Vec2& c, double angle, std::vector<double> descriptor) {
  SceneObject o;
  o.id = id;
  o.class_name = "block";
  o.centroid = c;
  o.orientation = angle;
  for (int i = -4; i <= 4; ++i)
    for (int j = -1; j <= 1; ++j) o.points.push_back(c + rotate(Vec2(0.01 * i, 0.01 * j), angle));
  o.descriptor = std::move(descriptor);
  return o;
}

std::vector<double> descriptor(double base) {
  std::vector<double> d(8);
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = base + 0.1 * static_cast<double>(k);
  return d;
}

SceneDescriptor two_object_scene() {
  SceneDescriptor s;
  s.workspace = {0.0, 0.0, 0.8, 0.6};
  s.objects.push_back(make_object("a", Vec2(0.25, 0.30), 0.2, descriptor(0.0)));
  s.objects.push_back(make_object("b", Vec2(0.55, 0.25), -0.4, descriptor(5.0)));
  return s;
}

// Direction maximizing projected variance, searched on a 1 degree grid.
double grid_orientation(const std::vector<Vec2>& pts) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double best = -1, best_angle = 0;
  for (int deg = -89; deg <= 90; ++deg) {
    const double a = deg * kPi / 180.0;
    const Vec2 u(std::cos(a), std::sin(a));
    double v = 0;
    for (const auto& p : pts) v += std::pow((p - mean).dot(u), 2);
    if (v > best) {
      best = v;
      best_angle = a;
    }
  }
  return best_angle;
}

std::set<std::pair<std::string, std::string>> pairs(const MatchResult& r, bool swap) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& m : r.matches)
    out.insert(swap ? std::pair{m.new_object_id, m.demo_object_id} : std::pair{m.demo_object_id, m.new_object_id});
  return out;
}

struct Fixture {
  datagen::TaskTemplate tmpl;
  SceneDescriptor scene;
  datagen::GeneratedDemo g;
};

Fixture pick_place(std::uint64_t seed) {
  Fixture f;
  f.tmpl = datagen::training_templates().front();
  f.scene = datagen::generate_scene(2, 0, seed);
  f.g = datagen::generate_demo(f.tmpl, f.scene, seed);
  return f;
}

SceneDescriptor translated(SceneDescriptor s, const Vec2& d) {
  for (auto& o : s.objects) {
    o.centroid += d;
    for (auto& p : o.points) p += d;
  }
  return s;
}

double ee_step(const Demonstration& d, Eigen::Index t) {
  return std::hypot(d.states(t, feature::kX) - d.states(t - 1, feature::kX),
                    d.states(t, feature::kY) - d.states(t - 1, feature::kY));
}

}  // namespace

TEST_SUITE("actionreg") {

TEST_CASE("principal axis of simple point sets") {
  std::vector<Vec2> xaxis, diag, yaxis;
  for (int i = -5; i <= 5; ++i) {
    xaxis.emplace_back(0.1 * i, 0.0);
    diag.emplace_back(0.1 * i, 0.1 * i);
    yaxis.emplace_back(0.0, 0.1 * i);
  }
  CHECK(std::abs(estimate_orientation_pca(xaxis).angle) <= 1e-9);
  CHECK(std::abs(estimate_orientation_pca(diag).angle - kPi / 4) <= 1e-9);
  CHECK(std::abs(estimate_orientation_pca(yaxis).angle - kPi / 2) <= 1e-9);

  std::vector<Vec2> square{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  const auto e = estimate_orientation_pca(square);
  CHECK(e.ill_defined);
  CHECK(e.angle == 0.0);
  CHECK_THROWS_AS(estimate_orientation_pca(std::vector<Vec2>{{0, 0}, {1, 1}}), ValidationError);
  CHECK_THROWS_AS(estimate_orientation_pca(std::vector<Vec2>(4, Vec2(0.3, 0.3))), ValidationError);
}

TEST_CASE("principal axis matches a grid search") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double angle = rng.uniform(-kPi, kPi);
    const double sx = rng.uniform(0.02, 0.06), sy = rng.uniform(0.003, 0.012);
    std::vector<Vec2> pts;
    for (int i = 0; i < 200; ++i) pts.push_back(rotate(Vec2(rng.normal(0, sx), rng.normal(0, sy)), angle) + Vec2(0.4, 0.3));
    const auto e = estimate_orientation_pca(pts);
    REQUIRE_FALSE(e.ill_defined);
    CHECK(e.angle > -kPi / 2);
    CHECK(e.angle <= kPi / 2);
    CHECK(std::abs(wrap_half_pi(e.angle - grid_orientation(pts))) <= 0.02);
  }
}

TEST_CASE("principal axis is rotation equivariant") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vec2> pts;
    for (int i = 0; i < 50; ++i) pts.emplace_back(rng.normal(0, 0.05), rng.normal(0, 0.01));
    const double phi = rng.uniform(-kPi, kPi);
    std::vector<Vec2> turned;
    for (const auto& p : pts) turned.push_back(rotate(p, phi));
    const double a = estimate_orientation_pca(pts).angle;
    const double b = estimate_orientation_pca(turned).angle;
    CHECK(std::abs(wrap_half_pi(b - a - phi)) <= 1e-6);
  }
}

TEST_CASE("half-pi wrapping") {
  CHECK(wrap_half_pi(0.0) == 0.0);
  CHECK(wrap_half_pi(kPi / 2) == doctest::Approx(kPi / 2));
  CHECK(wrap_half_pi(-kPi / 2) == doctest::Approx(kPi / 2));
  CHECK(wrap_half_pi(kPi) == doctest::Approx(0.0));
  CHECK(wrap_half_pi(3.0) == doctest::Approx(3.0 - kPi));
}

TEST_CASE("object matching") {
  const auto scene = two_object_scene();

  SUBCASE("identical scenes") {
    const auto r = match_objects(scene, scene);
    REQUIRE(r.matches.size() == 2);
    for (const auto& m : r.matches) {
      CHECK(m.demo_object_id == m.new_object_id);
      CHECK(m.confidence == 1.0);
      CHECK(m.descriptor_distance == 0.0);
    }
    CHECK(r.unmatched_demo.empty());
  }

  SUBCASE("distractors stay unmatched") {
    Rng rng(3);
    auto bigger = scene;
    for (auto& o : bigger.objects)
      for (auto& d : o.descriptor) d += rng.normal(0, 0.01);
    for (int k = 0; k < 5; ++k)
      bigger.objects.push_back(make_object("d" + std::to_string(k), Vec2(0.1 + 0.12 * k, 0.5), 0.0,
                                           descriptor(20.0 + 10.0 * k)));
    const auto r = match_objects(scene, bigger);
    REQUIRE(r.matches.size() == 2);
    CHECK(r.find_demo("a")->new_object_id == "a");
    CHECK(r.find_demo("b")->new_object_id == "b");
    for (const auto& m : r.matches) CHECK(m.new_object_id.front() != 'd');
    CHECK(pairs(r, false) == pairs(match_objects(bigger, scene), true));
  }

  SUBCASE("identical descriptors are ambiguous") {
    auto twin = scene;
    twin.objects[1].descriptor = twin.objects[0].descriptor;
    const auto r = match_objects(scene, twin);
    CHECK(r.find_demo("a") == nullptr);
    CHECK(std::find(r.ambiguous.begin(), r.ambiguous.end(), "a") != r.ambiguous.end());
    CHECK(std::find(r.unmatched_demo.begin(), r.unmatched_demo.end(), "a") != r.unmatched_demo.end());
  }

  SUBCASE("descriptor length mismatch") {
    auto bad = scene;
    bad.objects[0].descriptor.pop_back();
    CHECK_THROWS_AS(match_objects(scene, bad), ValidationError);
  }

  SUBCASE("symmetric under argument order") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      SceneDescriptor x, y;
      for (int k = 0; k < 4; ++k) {
        std::vector<double> d(8);
        for (auto& v : d) v = rng.normal(0, 1);
        x.objects.push_back(make_object("x" + std::to_string(k), Vec2(0.1 * k, 0.1), 0.0, d));
        for (auto& v : d) v += rng.normal(0, 0.3);
        y.objects.push_back(make_object("y" + std::to_string(k), Vec2(0.1 * k, 0.3), 0.0, d));
      }
      CHECK(pairs(match_objects(x, y), false) == pairs(match_objects(y, x), true));
    }
  }
}

TEST_CASE("per-anchor transforms") {
  auto demo = two_object_scene();
  Anchor a;
  a.object_id = "a";
  a.xy = demo.objects[0].centroid;

  SUBCASE("translation only") {
    demo.objects[0] = make_object("a", Vec2(0, 0), 0.2, descriptor(0.0));
    auto moved = demo;
    moved.objects[0] = make_object("a", Vec2(1, 2), 0.2, descriptor(0.0));
    const std::vector<Anchor> anchors{a};
    const auto t = compute_transforms(anchors, match_objects(demo, moved), demo, moved);
    REQUIRE(t.size() == 1);
    CHECK(t[0].dtheta == 0.0);
    CHECK((t[0].translation - Vec2(1, 2)).norm() <= 1e-12);
  }

  SUBCASE("rotation about the object centroid") {
    auto turned = demo;
    const Vec2 c = demo.objects[0].centroid;
    turned.objects[0] = make_object("a", c, 0.2 + kPi / 6, descriptor(0.0));
    Anchor on_object = a;
    on_object.xy = c + Vec2(0.03, 0.01);
    const std::vector<Anchor> anchors{on_object};
    const auto t = compute_transforms(anchors, match_objects(demo, turned), demo, turned);
    CHECK(std::abs(t[0].dtheta - kPi / 6) <= 1e-12);
    const Vec2 expected = c + rotate(on_object.xy - c, kPi / 6);
    CHECK((t[0].apply(on_object.xy) - expected).norm() <= 1e-9);
    CHECK((t[0].apply(c) - c).norm() <= 1e-9);
  }

  SUBCASE("unchanged scene gives identities") {
    Anchor free;
    free.xy = Vec2(0.7, 0.1);
    const std::vector<Anchor> anchors{a, free};
    const auto t = compute_transforms(anchors, match_objects(demo, demo), demo, demo);
    for (const auto& x : t) {
      CHECK(x.dtheta == 0.0);
      CHECK(x.translation.norm() <= 1e-15);
    }
  }

  SUBCASE("unmatched anchored object") {
    auto gone = demo;
    gone.objects.erase(gone.objects.begin());
    const std::vector<Anchor> anchors{a};
    try {
      compute_transforms(anchors, match_objects(demo, gone), demo, gone);
      FAIL("expected a transfer failure");
    } catch (const TransferFailure& e) {
      CHECK(e.category() == FailureCategory::ContextMatching);
    }
  }
}

TEST_CASE("transform interpolation is exact at the ends") {
  const auto a = SceneTransform::about(0.3, Vec2(0.1, 0.2), Vec2(0.05, -0.02));
  const auto b = SceneTransform::about(-0.1, Vec2(0.4, 0.3), Vec2(-0.1, 0.0));
  const Vec2 p(0.33, 0.27);
  CHECK((interpolate(a, b, 0.0).apply(p) - a.apply(p)).norm() == 0.0);
  CHECK((interpolate(a, b, 1.0).apply(p) - b.apply(p)).norm() == 0.0);
  const auto mid = interpolate(a, b, 0.5);
  CHECK(mid.dtheta == doctest::Approx(0.1));
  CHECK((mid.shift() - 0.5 * (a.shift() + b.shift())).norm() <= 1e-12);
}

TEST_CASE("anchor extraction") {
  const auto f = pick_place(21);
  const auto anchors = extract_anchors(f.g.phases, f.g.demo, f.scene, Calibration());
  REQUIRE(anchors.size() == f.g.anchors.size());
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    CHECK(anchors[k].timestep == f.g.anchors[k].timestep);
    REQUIRE(anchors[k].object_id.has_value());
    CHECK(*anchors[k].object_id == f.g.anchors[k].object_id);
    CHECK(anchors[k].association_distance <= 1e-6);
  }
  CHECK(*anchors.front().object_id == f.scene.objects[0].id);

  SUBCASE("rotated calibration") {
    Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
    h.topLeftCorner<2, 2>() << 0, -1, 1, 0;
    SceneDescriptor wide = f.scene;
    for (auto& o : wide.objects) o.centroid = rotate(o.centroid, kPi / 2);
    const auto r = extract_anchors(f.g.phases, f.g.demo, wide, Calibration(h));
    for (std::size_t k = 0; k < r.size(); ++k) {
      const auto t = static_cast<Eigen::Index>(r[k].timestep);
      const Vec2 ee(f.g.demo.states(t, feature::kX), f.g.demo.states(t, feature::kY));
      CHECK((r[k].xy - rotate(ee, kPi / 2)).norm() <= 1e-12);
    }
  }

  SUBCASE("grasp far from every object") {
    SceneDescriptor empty_table = f.scene;
    empty_table.objects = {make_object("far", Vec2(5, 5), 0.0, descriptor(0.0))};
    try {
      extract_anchors(f.g.phases, f.g.demo, empty_table, Calibration());
      FAIL("expected a transfer failure");
    } catch (const TransferFailure& e) {
      CHECK(e.category() == FailureCategory::ActionRegistration);
    }
  }
}

TEST_CASE("identity warp") {
  const auto f = pick_place(22);
  const auto r = transfer(f.g.demo, f.g.phases, f.scene, f.scene, Calibration());
  REQUIRE(r.ok());
  CHECK((r.demo.states - f.g.demo.states).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(r.demo.gripper == f.g.demo.gripper);

  WarpPlan plan;
  plan.knots = {{0, SceneTransform::identity(), Vec2::Zero()},
                {f.g.demo.length() - 1, SceneTransform::identity(), Vec2::Zero()}};
  const auto w = warp_trajectory(f.g.demo, plan, Calibration());
  CHECK((w.states - f.g.demo.states).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("translated layout shifts every anchor") {
  const Vec2 shift(0.1, -0.2);
  for (std::uint64_t seed : {31, 32, 33}) {
    const auto f = pick_place(seed);
    auto moved = translated(f.scene, shift);
    moved.workspace = {-1.0, -1.0, 2.0, 2.0};
    const auto r = transfer(f.g.demo, f.g.phases, f.scene, moved, Calibration());
    REQUIRE(r.ok());
    for (const auto& a : r.anchors) {
      const auto t = static_cast<Eigen::Index>(a.timestep);
      const Vec2 before(f.g.demo.states(t, feature::kX), f.g.demo.states(t, feature::kY));
      const Vec2 after(r.demo.states(t, feature::kX), r.demo.states(t, feature::kY));
      CHECK((after - before - shift).norm() <= 1e-6);
    }
    const auto last = static_cast<Eigen::Index>(f.g.demo.length() - 1);
    for (Eigen::Index t : {Eigen::Index{0}, last}) {
      CHECK(r.demo.states(t, feature::kX) == f.g.demo.states(t, feature::kX));
      CHECK(r.demo.states(t, feature::kY) == f.g.demo.states(t, feature::kY));
    }
    for (Eigen::Index t = 0; t <= last; ++t) {
      CHECK(r.demo.states(t, feature::kZ) == f.g.demo.states(t, feature::kZ));
      CHECK(r.demo.states(t, feature::kForce) == f.g.demo.states(t, feature::kForce));
    }
  }
}

TEST_CASE("anchors land on their transformed points") {
  Rng rng(41);
  const auto tmpl = datagen::training_templates()[1];
  for (int trial = 0; trial < 20; ++trial) {
    const auto seed = static_cast<std::uint64_t>(100 + trial);
    const auto demo_scene = datagen::generate_layout(2, 0, seed, seed);
    const auto new_scene = datagen::generate_layout(2, 0, seed, seed + 1000);
    const auto g = datagen::generate_demo(tmpl, demo_scene, seed);
    TransferOptions opt;
    opt.check_bounds = false;
    const auto r = transfer(g.demo, g.phases, demo_scene, new_scene, Calibration(), opt);
    REQUIRE(r.ok());
    for (std::size_t k = 0; k < r.anchors.size(); ++k) {
      const auto t = static_cast<Eigen::Index>(r.anchors[k].timestep);
      const Vec2 warped(r.demo.states(t, feature::kX), r.demo.states(t, feature::kY));
      CHECK((warped - r.transforms[k].apply(r.anchors[k].xy)).norm() <= 1e-9);
    }
  }
}

TEST_CASE("time-linear warp obeys the continuity bound") {
  const auto tmpl = datagen::training_templates()[2];
  for (int trial = 0; trial < 20; ++trial) {
    const auto seed = static_cast<std::uint64_t>(200 + trial);
    const auto demo_scene = datagen::generate_layout(2, 0, seed, seed);
    const auto new_scene = datagen::generate_layout(2, 0, seed, seed + 7);
    const auto g = datagen::generate_demo(tmpl, demo_scene, seed);
    TransferOptions opt;
    opt.check_bounds = false;
    opt.arc_length_schedule = false;
    const auto r = transfer(g.demo, g.phases, demo_scene, new_scene, Calibration(), opt);
    REQUIRE(r.ok());
    double demo_max = 0, warped_max = 0, jump = 0;
    for (Eigen::Index t = 1; t < g.demo.states.rows(); ++t) {
      demo_max = std::max(demo_max, ee_step(g.demo, t));
      warped_max = std::max(warped_max, ee_step(r.demo, t));
    }
    const auto& k = r.plan.knots;
    for (std::size_t i = 0; i + 1 < k.size(); ++i)
      jump = std::max(jump, (k[i + 1].displacement() - k[i].displacement()).norm() /
                                static_cast<double>(k[i + 1].time - k[i].time));
    CHECK(warped_max <= demo_max + jump + 1e-12);
  }
}

TEST_CASE("one-shot transfer to a new layout") {
  const auto tmpl = datagen::training_templates().front();
  for (std::uint64_t seed : {51, 52, 53, 54, 55}) {
    const auto demo_scene = datagen::generate_layout(2, 0, seed, seed);
    const auto new_scene = datagen::generate_layout(2, 0, seed, seed + 500);
    const auto g = datagen::generate_demo(tmpl, demo_scene, seed);
    const auto r = transfer(g.demo, g.phases, demo_scene, new_scene, Calibration());
    REQUIRE(r.ok());
    const auto& grasp = r.anchors.front();
    REQUIRE(grasp.therblig == Therblig::Grasp);
    const auto t = static_cast<Eigen::Index>(grasp.timestep);
    const Vec2 warped(r.demo.states(t, feature::kX), r.demo.states(t, feature::kY));
    CHECK((warped - new_scene.objects[0].centroid).norm() <= 1e-6);

    const auto cluttered = datagen::generate_layout(2, 5, seed, seed + 500);
    const auto rc = transfer(g.demo, g.phases, demo_scene, cluttered, Calibration());
    REQUIRE(rc.ok());
    CHECK((rc.demo.states - r.demo.states).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("transfer reports the failing stage") {
  const auto f = pick_place(61);

  SUBCASE("no contact segments") {
    const std::vector<TherbligSegment> rest{{Therblig::Rest, 0, f.g.demo.length()}};
    const auto r = transfer(f.g.demo, rest, f.scene, f.scene, Calibration());
    CHECK(r.failure == FailureCategory::TherbligSegmentation);
    REQUIRE(!r.trace.empty());
    CHECK(r.trace.back().status == "failed");
  }

  SUBCASE("task object missing from the new scene") {
    auto gone = f.scene;
    gone.objects.erase(gone.objects.begin());
    const auto r = transfer(f.g.demo, f.g.phases, f.scene, gone, Calibration());
    CHECK(r.failure == FailureCategory::ContextMatching);
    CHECK(r.trace.back().stage == "transforms");
  }

  SUBCASE("path leaves the workspace") {
    auto far = translated(f.scene, Vec2(0.5, 0.0));
    const auto r = transfer(f.g.demo, f.g.phases, f.scene, far, Calibration());
    CHECK(r.failure == FailureCategory::TrajectoryPlanning);
  }

  SUBCASE("corrector changing the point count") {
    TransferOptions opt;
    opt.corrector = [](const std::vector<Anchor>&, const SceneDescriptor&) { return std::vector<Vec2>{}; };
    const auto r = transfer(f.g.demo, f.g.phases, f.scene, f.scene, Calibration(), opt);
    CHECK(r.failure == FailureCategory::Others);
  }

  SUBCASE("trace json") {
    const auto r = transfer(f.g.demo, f.g.phases, f.scene, f.scene, Calibration());
    const auto j = trace_to_json(r.trace);
    CHECK(j.find("\"stage\": \"warp\"") != std::string::npos);
    CHECK(j.find("\"status\": \"skipped\"") != std::string::npos);
  }
}

TEST_CASE("failure category names") {
  for (auto c : {FailureCategory::None, FailureCategory::TherbligSegmentation, FailureCategory::ActionRegistration,
                 FailureCategory::ContextMatching, FailureCategory::TrajectoryPlanning, FailureCategory::Others})
    CHECK(category_from_name(category_name(c)) == c);
}

TEST_CASE("calibration") {
  Rng rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Matrix3d h;
    h << std::cos(0.3 * trial), -std::sin(0.3 * trial), rng.uniform(-1, 1), std::sin(0.3 * trial),
        std::cos(0.3 * trial), rng.uniform(-1, 1), 0, 0, 1;
    h.topLeftCorner<2, 2>() *= rng.uniform(0.5, 2.0);
    const Calibration c(h);
    const Vec2 p(rng.uniform(-1, 1), rng.uniform(-1, 1));
    CHECK((c.to_robot(c.to_scene(p)) - p).norm() <= 1e-9);
  }
  Eigen::Matrix3d quarter = Eigen::Matrix3d::Identity();
  quarter.topLeftCorner<2, 2>() << 0, -1, 1, 0;
  CHECK((Calibration(quarter).to_scene(Vec2(0.2, 0.1)) - Vec2(-0.1, 0.2)).norm() <= 1e-15);
  CHECK_THROWS_AS(Calibration(Eigen::Matrix3d::Zero()), ValidationError);

  const auto path = fs::temp_directory_path() / "tbk_calib_test.json";
  {
    std::ofstream out(path);
    out << Calibration(quarter).to_json();
  }
  CHECK(Calibration::load(path).matrix() == quarter);
  fs::remove(path);
}

}  // TEST_SUITE
