// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <nlohmann/json.hpp>

#include "therblig/error.hpp"
#include "therblig/lapvc.hpp"
#include "therblig/rng.hpp"

using namespace tbk;
using namespace tbk::lapvc;
using namespace std::chrono_literals;

namespace {

SceneObject square(const std::string& id, const Vec2& c, double side) {
  SceneObject o;
  o.id = id;
  o.class_name = "block";
  o.centroid = c;
  for (int i = 0; i <= 4; ++i)
    for (int j = 0; j <= 4; ++j) o.points.push_back(c + Vec2(side * (i / 4.0 - 0.5), side * (j / 4.0 - 0.5)));
  o.descriptor = {1.0, 2.0};
  return o;
}

SceneDescriptor table() {
  SceneDescriptor s;
  s.workspace = {0.0, 0.0, 0.8, 0.6};
  s.objects.push_back(square("cup", Vec2(0.2, 0.3), 0.04));
  s.objects.push_back(square("plate", Vec2(0.6, 0.25), 0.08));
  return s;
}

class CountingTransport : public Transport {
 public:
  std::string post(const std::string&, const std::string&, const std::string&, std::chrono::milliseconds) override {
    ++calls;
    throw TransportError("network disabled in tests");
  }
  int calls = 0;
};

// Replays canned payloads; an empty string means a transport fault.
class ScriptedTransport : public Transport {
 public:
  explicit ScriptedTransport(std::vector<std::string> script) : script_(std::move(script)) {}
  std::string post(const std::string&, const std::string& body, const std::string&, std::chrono::milliseconds) override {
    last_body = body;
    const auto& next = script_[std::min(calls++, script_.size() - 1)];
    if (next.empty()) throw TransportError("connection refused");
    return next;
  }
  std::size_t calls = 0;
  std::string last_body;

 private:
  std::vector<std::string> script_;
};

ExternalConfig live_config(int retries) {
  ExternalConfig c;
  c.endpoint = "http://127.0.0.1:9/never";
  c.retries = retries;
  return c;
}

std::vector<TaggedPoint> tagged(std::initializer_list<Vec2> pts) {
  std::vector<TaggedPoint> out;
  for (const auto& p : pts) out.push_back({Therblig::Grasp, p});
  return out;
}

}  // namespace

TEST_SUITE("lapvc") {

TEST_CASE("error injection") {
  const std::vector<Vec2> pts{{0.1, 0.2}, {0.5, 0.4}, {0.0, 0.0}};
  CHECK(inject_error(pts, ErrorModel{}) == pts);

  ErrorModel bias;
  bias.bias = Vec2(0.02, 0.0);
  const auto shifted = inject_error(pts, bias);
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK(shifted[i] == pts[i] + Vec2(0.02, 0.0));

  ErrorModel turn;
  turn.rotation = std::acos(-1.0) / 2;
  CHECK((inject_error(std::vector<Vec2>{{1.0, 0.0}}, turn)[0] - Vec2(0.0, 1.0)).norm() <= 1e-15);

  ErrorModel noisy;
  noisy.sigma = 0.01;
  noisy.seed = 5;
  const std::vector<Vec2> zeros(10000, Vec2::Zero());
  const auto out = inject_error(zeros, noisy);
  double sx = 0, sy = 0, mx = 0, my = 0;
  for (const auto& p : out) {
    mx += p.x();
    my += p.y();
  }
  mx /= out.size();
  my /= out.size();
  for (const auto& p : out) {
    sx += (p.x() - mx) * (p.x() - mx);
    sy += (p.y() - my) * (p.y() - my);
  }
  CHECK(std::abs(std::sqrt(sx / (out.size() - 1)) - 0.01) <= 0.05 * 0.01);
  CHECK(std::abs(std::sqrt(sy / (out.size() - 1)) - 0.01) <= 0.05 * 0.01);
  CHECK(inject_error(zeros, noisy) == out);
  noisy.seed = 6;
  CHECK(inject_error(zeros, noisy) != out);

  ErrorModel bad;
  bad.sigma = -1.0;
  CHECK_THROWS_AS(inject_error(pts, bad), ValidationError);
}

TEST_CASE("alignment score") {
  const auto scene = table();
  const std::vector<Vec2> truth{{0.2, 0.3}, {0.6, 0.25}};
  CHECK(alignment_score(truth, truth, scene) == 1.0);

  const double cup_ref = scene.objects[0].bbox_diagonal();
  CHECK(cup_ref == doctest::Approx(0.04 * std::sqrt(2.0)));
  const std::vector<Vec2> off{{0.2 + cup_ref, 0.3}, {0.6, 0.25}};
  CHECK(alignment_score(off, truth, scene) == doctest::Approx(0.5));

  double prev = 1.0;
  for (int k = 1; k <= 50; ++k) {
    const std::vector<Vec2> p{{0.6 + 0.003 * k, 0.25}};
    const std::vector<Vec2> t{{0.6, 0.25}};
    const double s = alignment_score(p, t, scene);
    CHECK(s <= prev);
    CHECK(s >= 0.0);
    prev = s;
  }
  CHECK(prev == 0.0);

  // Far from every object the reference length is 10 cm.
  const std::vector<Vec2> lone{{0.4, 0.55}}, lone_off{{0.45, 0.55}};
  CHECK(alignment_score(lone_off, lone, scene) == doctest::Approx(0.5));
  CHECK_THROWS_AS(alignment_score(lone, truth, scene), ValidationError);
}

TEST_CASE("rule-based policies") {
  const auto scene = table();
  const auto pts = tagged({{0.23, 0.3}, {0.2, 0.37}, {0.7, 0.55}});
  const auto same = passthrough(pts);
  REQUIRE(same.points.size() == 3);
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK(same.points[i] == pts[i].xy);

  const auto s = snap(pts, scene);
  REQUIRE(s.points.size() == 3);
  CHECK(s.points[0] == scene.objects[0].centroid);
  CHECK(s.points[1] == pts[1].xy);
  CHECK(s.points[2] == pts[2].xy);
  CHECK(s.rationale.size() == 3);
}

TEST_CASE("prompt and request contents") {
  const auto scene = table();
  std::vector<TaggedPoint> pts{{Therblig::Grasp, {0.21, 0.3}}, {Therblig::Release, {0.59, 0.26}}};
  const auto prompt = build_prompt(pts, scene);
  for (const char* needle : {"x in [0.0000, 0.8000]", "y in [0.0000, 0.6000]", "cup (block) centroid (0.2000, 0.3000)",
                             "plate (block) centroid (0.6000, 0.2500)", "0. Grasp at (0.2100, 0.3000)",
                             "1. Release at (0.5900, 0.2600)", "\"corrected_points\"", "strict JSON"})
    CHECK_MESSAGE(prompt.find(needle) != std::string::npos, needle);

  const auto req = nlohmann::json::parse(build_request(pts, scene));
  CHECK(req.at("protocol_version") == kProtocolVersion);
  CHECK(req.at("prompt") == prompt);
  CHECK(req.at("points").size() == 2);
  CHECK(req.at("points")[1].at("therblig") == "Release");
  CHECK(scene_from_json(req.at("scene").dump()).objects.size() == 2);
}

TEST_CASE("response parsing") {
  const Bounds b{0.0, 0.0, 0.8, 0.6};
  const auto ok = parse_response(R"({"corrected_points": [[0.1, 0.2]]})", 1, b);
  REQUIRE(ok.points.size() == 1);
  CHECK(ok.points[0] == Vec2(0.1, 0.2));
  CHECK(ok.rationale.size() == 1);

  auto reason = [&](const std::string& payload, std::size_t n) {
    try {
      parse_response(payload, n, b);
    } catch (const ProtocolError& e) {
      CHECK(e.raw() == payload);
      return std::pair{e.reason(), std::string(e.what())};
    }
    FAIL("payload was accepted: " << payload);
    return std::pair{ParseFailure::InvalidJson, std::string()};
  };
  const auto [count, msg] = reason(R"({"corrected_points": [[0.1, 0.2]]})", 2);
  CHECK(count == ParseFailure::CountMismatch);
  CHECK(msg.find("expected 2") != std::string::npos);
  CHECK(msg.find("got 1") != std::string::npos);
  CHECK(reason(R"({"corrected_points": [["a", 0.2]]})", 1).first == ParseFailure::NonNumeric);
  CHECK(reason(R"({"corrected_points": [[0.1]]})", 1).first == ParseFailure::NonNumeric);
  CHECK(reason(R"({"corrected_points": [[1.5, 0.2]]})", 1).first == ParseFailure::OutOfBounds);
  CHECK(reason("not json", 1).first == ParseFailure::InvalidJson);
  CHECK(reason(R"({"points": []})", 0).first == ParseFailure::InvalidJson);
  CHECK(parse_failure_name(ParseFailure::CountMismatch) != parse_failure_name(ParseFailure::OutOfBounds));
}

TEST_CASE("mock endpoint") {
  const auto scene = table();
  const auto pts = tagged({{0.23, 0.3}, {0.2, 0.37}, {0.62, 0.27}, {0.05, 0.05}});

  ExternalConfig cfg;
  cfg.mock = true;
  cfg.mock_mode = MockEndpoint::Mode::Centroid;
  const auto snapped = snap(pts, scene);
  const auto mocked = ExternalClient(cfg).correct(pts, scene);
  CHECK_FALSE(mocked.fallback);
  CHECK(mocked.points == snapped.points);

  cfg.mock_mode = MockEndpoint::Mode::Echo;
  const auto echoed = ExternalClient(cfg).correct(pts, scene);
  REQUIRE(echoed.points.size() == pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK(echoed.points[i] == pts[i].xy);
}

TEST_CASE("mock flag never touches the transport") {
  auto counting = std::make_shared<CountingTransport>();
  CorrectionPolicy policy;
  policy.kind = PolicyKind::External;
  policy.external.mock = true;
  const auto scene = table();
  for (int i = 0; i < 20; ++i) {
    const auto c = correct_points(tagged({{0.21, 0.31}}), scene, policy, counting);
    CHECK_FALSE(c.fallback);
  }
  const auto summary = evaluate_correction(10, ErrorModel{}, policy, 1, counting);
  CHECK(summary.trials.size() == 10);
  CHECK(counting->calls == 0);
}

TEST_CASE("retries, backoff and fallback") {
  const auto scene = table();
  const auto pts = tagged({{0.23, 0.3}, {0.4, 0.5}});
  std::vector<std::chrono::milliseconds> sleeps;
  Sleeper record = [&](std::chrono::milliseconds d) { sleeps.push_back(d); };

  SUBCASE("transport faults exhaust the retries") {
    auto t = std::make_shared<ScriptedTransport>(std::vector<std::string>{""});
    const auto c = ExternalClient(live_config(1), t, record).correct(pts, scene);
    CHECK(t->calls == 2);
    CHECK(sleeps == std::vector<std::chrono::milliseconds>{1000ms});
    CHECK(c.fallback);
    CHECK(c.points == snap(pts, scene).points);
    REQUIRE(c.rationale.size() == 2);
    CHECK(c.rationale[0].find("fallback") != std::string::npos);
  }

  SUBCASE("exponential backoff") {
    auto t = std::make_shared<ScriptedTransport>(std::vector<std::string>{""});
    ExternalClient(live_config(3), t, record).correct(pts, scene);
    CHECK(t->calls == 4);
    CHECK(sleeps == std::vector<std::chrono::milliseconds>{1000ms, 2000ms, 4000ms});
  }

  SUBCASE("malformed reply then a good one") {
    auto t = std::make_shared<ScriptedTransport>(
        std::vector<std::string>{R"({"corrected_points": [[0.1, 0.2]]})", R"({"corrected_points": [[0.1, 0.2], [0.3, 0.4]]})"});
    const auto c = ExternalClient(live_config(1), t, record).correct(pts, scene);
    CHECK_FALSE(c.fallback);
    CHECK(c.points == std::vector<Vec2>{{0.1, 0.2}, {0.3, 0.4}});
    CHECK(sleeps.size() == 1);
    CHECK(nlohmann::json::parse(t->last_body).at("protocol_version") == kProtocolVersion);
  }

  SUBCASE("malformed replies keep the raw payload") {
    auto t = std::make_shared<ScriptedTransport>(std::vector<std::string>{"garbage"});
    const auto c = ExternalClient(live_config(0), t, record).correct(pts, scene);
    CHECK(c.fallback);
    CHECK(c.raw_payload == "garbage");
    CHECK(c.points.size() == pts.size());
    CHECK(sleeps.empty());
  }
}

TEST_CASE("policy parsing") {
  CHECK(CorrectionPolicy::parse("snap").kind == PolicyKind::Snap);
  CHECK(CorrectionPolicy::parse("passthrough").kind == PolicyKind::Passthrough);
  const auto mock = CorrectionPolicy::parse("external,mock");
  CHECK(mock.kind == PolicyKind::External);
  CHECK(mock.external.mock);
  CHECK(CorrectionPolicy::parse("snap").name() == "snap");
  CHECK_THROWS_AS(CorrectionPolicy::parse("magic"), ValidationError);

  ::unsetenv("TBK_LLM_ENDPOINT");
  const auto live = CorrectionPolicy::parse("external");
  CHECK_THROWS_AS(correct_points(tagged({{0.2, 0.3}}), table(), live), ValidationError);
  ExternalConfig bad;
  bad.mock = true;
  bad.max_in_flight = 0;
  CHECK_THROWS_AS(ExternalClient{bad}, ValidationError);
}

TEST_CASE("snap beats passthrough under biased noise") {
  ErrorModel em;
  em.bias = Vec2(0.03, 0.0);
  em.sigma = 0.01;
  em.seed = 17;
  const auto pass = evaluate_correction(100, em, CorrectionPolicy::parse("passthrough"), 3);
  const auto snapped = evaluate_correction(100, em, CorrectionPolicy::parse("snap"), 3);
  const auto mocked = evaluate_correction(100, em, CorrectionPolicy::parse("external,mock"), 3);
  CHECK(snapped.mean_after > pass.mean_after);
  CHECK(pass.mean_after == pass.mean_before);
  REQUIRE(mocked.trials.size() == snapped.trials.size());
  for (std::size_t i = 0; i < mocked.trials.size(); ++i) CHECK(mocked.trials[i].score_after == snapped.trials[i].score_after);
  CHECK(mocked.mean_after == snapped.mean_after);
}

}  // TEST_SUITE
