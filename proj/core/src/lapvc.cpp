// SPDX-License-Identifier: Apache-2.0
#include "therblig/lapvc.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "therblig/datagen.hpp"
#include "therblig/error.hpp"
#include "therblig/rng.hpp"

namespace tbk::lapvc {

using nlohmann::json;

void ErrorModel::validate() const {
  if (!(sigma >= 0) || !std::isfinite(sigma)) throw ValidationError("error sigma must be finite and >= 0");
  if (!bias.allFinite() || !std::isfinite(rotation)) throw ValidationError("error model must be finite");
}

std::vector<Vec2> inject_error(std::span<const Vec2> points, const ErrorModel& model) {
  model.validate();
  Rng rng(derive_seed(model.seed, "inject"));
  const double c = std::cos(model.rotation), s = std::sin(model.rotation);
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    Vec2 q(c * p.x() - s * p.y(), s * p.x() + c * p.y());
    q += model.bias;
    if (model.sigma > 0) {
      const double nx = rng.normal(0.0, model.sigma);
      const double ny = rng.normal(0.0, model.sigma);
      q += Vec2(nx, ny);
    }
    out.push_back(q);
  }
  return out;
}

double alignment_score(std::span<const Vec2> corrected, std::span<const Vec2> truth,
                       const SceneDescriptor& scene, double radius) {
  if (corrected.size() != truth.size())
    throw ValidationError("alignment score needs equal counts (" + std::to_string(corrected.size()) +
                          " vs " + std::to_string(truth.size()) + ")");
  if (truth.empty()) return 1.0;
  double sum = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto* obj = scene.nearest(truth[i], radius);
    const double ref = obj ? obj->bbox_diagonal() : kReferenceFallback;
    sum += std::max(0.0, 1.0 - (corrected[i] - truth[i]).norm() / ref);
  }
  return sum / static_cast<double>(truth.size());
}

Correction passthrough(std::span<const TaggedPoint> points) {
  Correction c;
  for (const auto& p : points) {
    c.points.push_back(p.xy);
    c.rationale.push_back("unchanged");
  }
  return c;
}

Correction snap(std::span<const TaggedPoint> points, const SceneDescriptor& scene, double radius) {
  Correction c;
  for (const auto& p : points) {
    const auto* obj = scene.nearest(p.xy, radius);
    if (obj) {
      c.points.push_back(obj->centroid);
      c.rationale.push_back("snapped to " + obj->id);
    } else {
      c.points.push_back(p.xy);
      c.rationale.push_back("no object within snap radius");
    }
  }
  return c;
}

// ---- protocol --------------------------------------------------------------------

std::string build_prompt(std::span<const TaggedPoint> points, const SceneDescriptor& scene) {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  const auto& w = scene.workspace;
  os << "You correct end-effector contact points for a tabletop robot.\n";
  os << "Workspace bounds (m): x in [" << w.xmin << ", " << w.xmax << "], y in [" << w.ymin << ", "
     << w.ymax << "].\n";
  os << "Objects:\n";
  for (const auto& o : scene.objects)
    os << "- " << o.id << " (" << o.class_name << ") centroid (" << o.centroid.x() << ", "
       << o.centroid.y() << "), orientation " << o.orientation << " rad\n";
  os << "Predicted points:\n";
  for (std::size_t i = 0; i < points.size(); ++i)
    os << i << ". " << therblig_name(points[i].therblig) << " at (" << points[i].xy.x() << ", "
       << points[i].xy.y() << ")\n";
  os << "Each point should lie on the object its action involves. Return exactly " << points.size()
     << " points in the same order, inside the workspace.\n";
  os << "Reply with strict JSON only: {\"corrected_points\": [[x, y], ...], \"rationale\": [\"...\"]}\n";
  return os.str();
}

std::string build_request(std::span<const TaggedPoint> points, const SceneDescriptor& scene) {
  json j;
  j["protocol_version"] = kProtocolVersion;
  j["prompt"] = build_prompt(points, scene);
  j["scene"] = json::parse(scene_to_json(scene, -1));
  j["points"] = json::array();
  for (const auto& p : points)
    j["points"].push_back({{"therblig", std::string(therblig_name(p.therblig))}, {"xy", {p.xy.x(), p.xy.y()}}});
  return j.dump();
}

std::string_view parse_failure_name(ParseFailure f) {
  switch (f) {
    case ParseFailure::InvalidJson: return "invalid_json";
    case ParseFailure::CountMismatch: return "count_mismatch";
    case ParseFailure::NonNumeric: return "non_numeric";
    case ParseFailure::OutOfBounds: return "out_of_bounds";
  }
  return "invalid_json";
}

ParsedResponse parse_response(const std::string& payload, std::size_t expected, const Bounds& bounds) {
  json j;
  try {
    j = json::parse(payload);
  } catch (const json::exception& e) {
    throw ProtocolError(ParseFailure::InvalidJson, std::string("response is not JSON: ") + e.what(), payload);
  }
  if (!j.is_object() || !j.contains("corrected_points") || !j["corrected_points"].is_array())
    throw ProtocolError(ParseFailure::InvalidJson, "response lacks a corrected_points array", payload);
  const auto& pts = j["corrected_points"];
  if (pts.size() != expected)
    throw ProtocolError(ParseFailure::CountMismatch,
                        "expected " + std::to_string(expected) + " points, got " + std::to_string(pts.size()),
                        payload);
  ParsedResponse out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw ProtocolError(ParseFailure::NonNumeric, "point " + std::to_string(i) + " is not [x, y]", payload);
    const Vec2 v(p[0].get<double>(), p[1].get<double>());
    if (!v.allFinite())
      throw ProtocolError(ParseFailure::NonNumeric, "point " + std::to_string(i) + " is not finite", payload);
    if (!bounds.contains(v))
      throw ProtocolError(ParseFailure::OutOfBounds, "point " + std::to_string(i) + " is outside the workspace",
                          payload);
    out.points.push_back(v);
  }
  if (j.contains("rationale") && j["rationale"].is_array())
    for (const auto& r : j["rationale"]) out.rationale.push_back(r.is_string() ? r.get<std::string>() : r.dump());
  out.rationale.resize(out.points.size());
  return out;
}

// ---- transport -------------------------------------------------------------------

std::string HttpTransport::post(const std::string& url, const std::string& body, const std::string& token,
                                std::chrono::milliseconds timeout) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("endpoint '" + url + "' has no scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);
  httplib::Client cli(base);
  if (!cli.is_valid()) throw TransportError("unsupported endpoint '" + url + "'");
  const auto secs = timeout.count() / 1000;
  const auto usecs = (timeout.count() % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
  auto res = cli.Post(path, headers, body, "application/json");
  if (!res) throw TransportError("request to '" + url + "' failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
  return res->body;
}

std::string MockEndpoint::post(const std::string&, const std::string& body, const std::string&,
                               std::chrono::milliseconds) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    throw TransportError(std::string("mock endpoint got invalid JSON: ") + e.what());
  }
  const auto scene = scene_from_json(req.at("scene").dump());
  json pts = json::array(), why = json::array();
  for (const auto& p : req.at("points")) {
    const Vec2 xy(p.at("xy").at(0).get<double>(), p.at("xy").at(1).get<double>());
    if (mode_ == Mode::Centroid) {
      const auto* obj = scene.nearest(xy, radius_);
      const Vec2 out = obj ? obj->centroid : xy;
      pts.push_back({out.x(), out.y()});
      why.push_back(obj ? "moved onto " + obj->id : std::string("left in place"));
    } else {
      pts.push_back({xy.x(), xy.y()});
      why.push_back("echo");
    }
  }
  return json{{"corrected_points", pts}, {"rationale", why}}.dump();
}

ExternalConfig ExternalConfig::from_env() {
  ExternalConfig c;
  if (const char* e = std::getenv("TBK_LLM_ENDPOINT")) c.endpoint = e;
  if (const char* t = std::getenv("TBK_LLM_TOKEN")) c.token = t;
  if (const char* s = std::getenv("TBK_LLM_TIMEOUT")) {
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || !(v > 0)) throw ValidationError("TBK_LLM_TIMEOUT must be a positive number of seconds");
    c.timeout = std::chrono::milliseconds(static_cast<long long>(v * 1000));
  }
  return c;
}

ExternalClient::ExternalClient(ExternalConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  if (config_.max_in_flight < 1 || config_.max_in_flight > 1024)
    throw ValidationError("max_in_flight must be in [1, 1024]");
  if (config_.retries < 0) throw ValidationError("retries must be >= 0");
  if (config_.mock) {
    transport_ = std::make_shared<MockEndpoint>(config_.mock_mode);
  } else if (!transport_) {
    if (config_.endpoint.empty()) throw ValidationError("external policy needs TBK_LLM_ENDPOINT or the mock flag");
    transport_ = std::make_shared<HttpTransport>();
  }
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  in_flight_ = std::make_unique<std::counting_semaphore<1024>>(config_.max_in_flight);
}

Correction ExternalClient::correct(std::span<const TaggedPoint> points, const SceneDescriptor& scene) {
  const auto request = build_request(points, scene);
  std::string last_error, last_raw;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) sleeper_(config_.backoff_base * (1LL << (attempt - 1)));
    try {
      in_flight_->acquire();
      std::string payload;
      try {
        payload = transport_->post(config_.endpoint, request, config_.token, config_.timeout);
      } catch (...) {
        in_flight_->release();
        throw;
      }
      in_flight_->release();
      last_raw = payload;
      auto parsed = parse_response(payload, points.size(), scene.workspace);
      Correction c;
      c.points = std::move(parsed.points);
      c.rationale = std::move(parsed.rationale);
      c.raw_payload = std::move(payload);
      return c;
    } catch (const ProtocolError& e) {
      last_error = std::string(parse_failure_name(e.reason())) + ": " + e.what();
    } catch (const TransportError& e) {
      last_error = std::string("transport: ") + e.what();
    }
  }
  Correction c = snap(points, scene);
  c.fallback = true;
  c.raw_payload = last_raw;
  for (auto& r : c.rationale) r = "fallback to snap after " + last_error + "; " + r;
  return c;
}

CorrectionPolicy CorrectionPolicy::parse(const std::string& text) {
  CorrectionPolicy p;
  if (text == "passthrough") {
    p.kind = PolicyKind::Passthrough;
  } else if (text == "snap") {
    p.kind = PolicyKind::Snap;
  } else if (text == "external" || text == "external,mock") {
    p.kind = PolicyKind::External;
    p.external = ExternalConfig::from_env();
    p.external.mock = text == "external,mock";
  } else {
    throw ValidationError("unknown policy '" + text + "' (expected passthrough, snap, external or external,mock)");
  }
  return p;
}

std::string CorrectionPolicy::name() const {
  switch (kind) {
    case PolicyKind::Passthrough: return "passthrough";
    case PolicyKind::Snap: return "snap";
    case PolicyKind::External: return external.mock ? "external,mock" : "external";
  }
  return "snap";
}

Correction correct_points(std::span<const TaggedPoint> points, const SceneDescriptor& scene,
                          const CorrectionPolicy& policy, std::shared_ptr<Transport> transport) {
  switch (policy.kind) {
    case PolicyKind::Passthrough: return passthrough(points);
    case PolicyKind::Snap: return snap(points, scene, policy.snap_radius);
    case PolicyKind::External: {
      ExternalClient client(policy.external, std::move(transport));
      return client.correct(points, scene);
    }
  }
  return passthrough(points);
}

CorrectionSummary evaluate_correction(int trials, const ErrorModel& error, const CorrectionPolicy& policy,
                                      std::uint64_t seed, std::shared_ptr<Transport> transport) {
  if (trials < 1) throw ValidationError("trials must be >= 1");
  const auto templates = datagen::evaluation_templates();
  CorrectionSummary s;
  for (int i = 0; i < trials; ++i) {
    const auto ts = derive_seed(seed, static_cast<std::uint64_t>(i));
    const auto& tmpl = templates[static_cast<std::size_t>(i) % templates.size()];
    const auto scene = datagen::generate_scene(static_cast<int>(tmpl.roles().size()), 0, derive_seed(ts, "scene"));
    const auto g = datagen::generate_demo(tmpl, scene, ts);
    std::vector<Vec2> truth;
    for (const auto& a : g.anchors) truth.push_back(a.xy);
    ErrorModel em = error;
    em.seed = derive_seed(error.seed, static_cast<std::uint64_t>(i));
    const auto noisy = inject_error(truth, em);
    std::vector<TaggedPoint> tagged;
    for (std::size_t k = 0; k < noisy.size(); ++k) tagged.push_back({g.anchors[k].therblig, noisy[k]});
    const auto c = correct_points(tagged, scene, policy, transport);
    CorrectionTrial t;
    t.score_before = alignment_score(noisy, truth, scene);
    t.score_after = alignment_score(c.points, truth, scene);
    t.fallback = c.fallback;
    s.mean_before += t.score_before;
    s.mean_after += t.score_after;
    s.trials.push_back(t);
  }
  s.mean_before /= trials;
  s.mean_after /= trials;
  return s;
}

}  // namespace tbk::lapvc
