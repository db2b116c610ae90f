// SPDX-License-Identifier: Apache-2.0
//
// Point correction for predicted anchor points: rule-based policies, an
// external language-model endpoint protocol with an in-process mock, an
// error-injection model and the alignment score.
#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <semaphore>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "therblig/domain.hpp"
#include "therblig/scene.hpp"

namespace tbk::lapvc {

struct ErrorModel {
  Vec2 bias = Vec2::Zero();
  double sigma = 0.0;
  double rotation = 0.0;  // radians, about the scene origin
  std::uint64_t seed = 0;
  void validate() const;
};

/// p' = R(rotation) p + bias + N(0, sigma^2) per coordinate.
std::vector<Vec2> inject_error(std::span<const Vec2> points, const ErrorModel& model);

inline constexpr double kReferenceFallback = 0.10;

/// Mean over points of max(0, 1 - |p - p*| / d_ref), with d_ref the bbox
/// diagonal of the object nearest p* (within `radius`), else 10 cm.
double alignment_score(std::span<const Vec2> corrected, std::span<const Vec2> truth,
                       const SceneDescriptor& scene, double radius = 0.08);

struct TaggedPoint {
  Therblig therblig = Therblig::Grasp;
  Vec2 xy = Vec2::Zero();
};

struct Correction {
  std::vector<Vec2> points;
  std::vector<std::string> rationale;
  bool fallback = false;
  std::string raw_payload;  // last external response, if any
};

Correction passthrough(std::span<const TaggedPoint> points);

inline constexpr double kSnapRadius = 0.06;
Correction snap(std::span<const TaggedPoint> points, const SceneDescriptor& scene,
                double radius = kSnapRadius);

// ---- wire protocol ---------------------------------------------------------------

inline constexpr int kProtocolVersion = 1;

std::string build_prompt(std::span<const TaggedPoint> points, const SceneDescriptor& scene);
/// {"protocol_version", "prompt", "scene", "points": [{"therblig", "xy"}]}
std::string build_request(std::span<const TaggedPoint> points, const SceneDescriptor& scene);

enum class ParseFailure { InvalidJson, CountMismatch, NonNumeric, OutOfBounds };
std::string_view parse_failure_name(ParseFailure f);

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ParseFailure reason, const std::string& what, std::string raw)
      : std::runtime_error(what), reason_(reason), raw_(std::move(raw)) {}
  ParseFailure reason() const { return reason_; }
  const std::string& raw() const { return raw_; }

 private:
  ParseFailure reason_;
  std::string raw_;
};

struct ParsedResponse {
  std::vector<Vec2> points;
  std::vector<std::string> rationale;
};

/// Expects {"corrected_points": [[x, y], ...], "rationale": [...]?}.
ParsedResponse parse_response(const std::string& payload, std::size_t expected, const Bounds& bounds);

// ---- transport -------------------------------------------------------------------

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// Sends one JSON request; throws TransportError on failure or timeout.
  virtual std::string post(const std::string& url, const std::string& body, const std::string& token,
                           std::chrono::milliseconds timeout) = 0;
};

/// Plain HTTP(S) POST.
class HttpTransport : public Transport {
 public:
  std::string post(const std::string& url, const std::string& body, const std::string& token,
                   std::chrono::milliseconds timeout) override;
};

/// Answers requests in process; never touches the network.
class MockEndpoint : public Transport {
 public:
  enum class Mode { Echo, Centroid };
  explicit MockEndpoint(Mode mode, double radius = kSnapRadius) : mode_(mode), radius_(radius) {}
  std::string post(const std::string& url, const std::string& body, const std::string& token,
                   std::chrono::milliseconds timeout) override;
  std::size_t calls() const { return calls_; }

 private:
  Mode mode_;
  double radius_;
  std::size_t calls_ = 0;
  std::mutex mu_;
};

struct ExternalConfig {
  std::string endpoint;
  std::string token;
  std::chrono::milliseconds timeout{10000};
  int retries = 1;
  std::chrono::milliseconds backoff_base{1000};
  int max_in_flight = 1;
  bool mock = false;
  MockEndpoint::Mode mock_mode = MockEndpoint::Mode::Centroid;

  /// TBK_LLM_ENDPOINT, TBK_LLM_TOKEN, TBK_LLM_TIMEOUT (seconds).
  static ExternalConfig from_env();
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

class ExternalClient {
 public:
  /// With config.mock set an in-process MockEndpoint answers and `transport`
  /// is never used.
  explicit ExternalClient(ExternalConfig config, std::shared_ptr<Transport> transport = nullptr,
                          Sleeper sleeper = nullptr);

  /// Sends, validates, retries with exponential backoff, then falls back to
  /// snap. Always returns one point per input.
  Correction correct(std::span<const TaggedPoint> points, const SceneDescriptor& scene);

  const ExternalConfig& config() const { return config_; }

 private:
  ExternalConfig config_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleeper_;
  std::unique_ptr<std::counting_semaphore<1024>> in_flight_;
};

enum class PolicyKind { Passthrough, Snap, External };

struct CorrectionPolicy {
  PolicyKind kind = PolicyKind::Snap;
  double snap_radius = kSnapRadius;
  ExternalConfig external;

  /// "passthrough", "snap", "external" or "external,mock".
  static CorrectionPolicy parse(const std::string& text);
  std::string name() const;
};

/// Stateless for passthrough and snap; builds a client per call otherwise.
Correction correct_points(std::span<const TaggedPoint> points, const SceneDescriptor& scene,
                          const CorrectionPolicy& policy,
                          std::shared_ptr<Transport> transport = nullptr);

// ---- evaluation --------------------------------------------------------------------

struct CorrectionTrial {
  double score_before = 0.0;
  double score_after = 0.0;
  bool fallback = false;
};

struct CorrectionSummary {
  std::vector<CorrectionTrial> trials;
  double mean_before = 0.0;
  double mean_after = 0.0;
};

/// Generates `trials` demo scenes and anchors from the evaluation
/// templates, perturbs the anchors and scores the policy's correction.
CorrectionSummary evaluate_correction(int trials, const ErrorModel& error, const CorrectionPolicy& policy,
                                      std::uint64_t seed, std::shared_ptr<Transport> transport = nullptr);

}  // namespace tbk::lapvc
