// SPDX-License-Identifier: Apache-2.0
#include "therblig/domain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "therblig/error.hpp"

namespace tbk {
namespace {

constexpr std::array<std::string_view, kNumTherbligs> kNames = {
    "Rest", "TransportEmpty", "Delay", "Grasp", "TransportLoaded", "Use",
    "Release"};

template <std::size_t N>
void copy_out(const std::array<double, N>& src, double* dst) {
  std::copy(src.begin(), src.end(), dst);
}

template <std::size_t N>
void copy_in(const double* src, std::array<double, N>& dst) {
  std::copy(src, src + N, dst.begin());
}

}  // namespace

std::optional<Therblig> therblig_from_code(int code) {
  if (code < 0 || code >= kNumTherbligs) return std::nullopt;
  return static_cast<Therblig>(code);
}

std::string_view therblig_name(Therblig t) { return kNames[code_of(t)]; }

std::optional<Therblig> therblig_from_name(std::string_view name) {
  for (int i = 0; i < kNumTherbligs; ++i)
    if (kNames[i] == name) return static_cast<Therblig>(i);
  return std::nullopt;
}

std::array<double, kNumFeatures> RobotState::flatten() const {
  std::array<double, kNumFeatures> out{};
  copy_out(joint_angles, out.data() + feature::kJointAngles);
  copy_out(joint_speeds, out.data() + feature::kJointSpeeds);
  copy_out(ee_position, out.data() + feature::kX);
  copy_out(ee_orientation, out.data() + feature::kRoll);
  copy_out(force, out.data() + feature::kForce);
  copy_out(torque, out.data() + feature::kTorque);
  return out;
}

RobotState RobotState::from_flat(std::span<const double> row) {
  if (row.size() != kNumFeatures) {
    throw ValidationError("robot state needs " + std::to_string(kNumFeatures) +
                          " features, got " + std::to_string(row.size()));
  }
  RobotState s;
  copy_in(row.data() + feature::kJointAngles, s.joint_angles);
  copy_in(row.data() + feature::kJointSpeeds, s.joint_speeds);
  copy_in(row.data() + feature::kX, s.ee_position);
  copy_in(row.data() + feature::kRoll, s.ee_orientation);
  copy_in(row.data() + feature::kForce, s.force);
  copy_in(row.data() + feature::kTorque, s.torque);
  return s;
}

RobotState Demonstration::state(std::size_t t) const {
  const auto row = states.row(static_cast<Eigen::Index>(t));
  return RobotState::from_flat({row.data(), static_cast<std::size_t>(row.size())});
}

LabelSequence LabelSequence::from_codes(std::span<const int> codes) {
  LabelSequence out;
  out.labels.reserve(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto t = therblig_from_code(codes[i]);
    if (!t) {
      throw ValidationError("therblig code " + std::to_string(codes[i]) +
                            " out of range at index " + std::to_string(i));
    }
    out.labels.push_back(*t);
  }
  return out;
}

std::vector<int> LabelSequence::codes() const {
  std::vector<int> out(labels.size());
  std::transform(labels.begin(), labels.end(), out.begin(),
                 [](Therblig t) { return code_of(t); });
  return out;
}

Eigen::MatrixXd one_hot(std::span<const int> codes) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(codes.size()),
                                               kNumTherbligs);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < 0 || codes[i] >= kNumTherbligs) {
      throw ValidationError("therblig code " + std::to_string(codes[i]) +
                            " out of range at index " + std::to_string(i));
    }
    out(static_cast<Eigen::Index>(i), codes[i]) = 1.0;
  }
  return out;
}

Eigen::MatrixXd one_hot(const LabelSequence& labels) {
  const auto codes = labels.codes();
  return one_hot(std::span<const int>(codes));
}

LabelSequence decode_one_hot(const Eigen::MatrixXd& rows) {
  if (rows.cols() != kNumTherbligs) {
    throw ValidationError("expected " + std::to_string(kNumTherbligs) +
                          " columns, got " + std::to_string(rows.cols()));
  }
  LabelSequence out;
  out.labels.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Eigen::Index best = 0;
    rows.row(i).maxCoeff(&best);
    out.labels.push_back(static_cast<Therblig>(best));
  }
  return out;
}

std::vector<TherbligSegment> segments_from_labels(const LabelSequence& labels) {
  if (labels.labels.empty()) throw ValidationError("cannot segment an empty label sequence");
  std::vector<TherbligSegment> out;
  std::size_t start = 0;
  const auto& l = labels.labels;
  for (std::size_t i = 1; i <= l.size(); ++i) {
    if (i == l.size() || l[i] != l[start]) {
      out.push_back({l[start], start, i});
      start = i;
    }
  }
  return out;
}

LabelSequence labels_from_segments(std::span<const TherbligSegment> segments) {
  LabelSequence out;
  std::size_t expected = 0;
  for (const auto& s : segments) {
    if (s.start != expected || s.end <= s.start) {
      throw ValidationError("segments must be contiguous and non-empty; bad segment at " +
                            std::to_string(s.start));
    }
    out.labels.insert(out.labels.end(), s.length(), s.therblig);
    expected = s.end;
  }
  return out;
}

std::vector<Therblig> segment_order(std::span<const TherbligSegment> segments) {
  std::vector<Therblig> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(s.therblig);
  return out;
}

std::string ValidationReport::summary() const {
  if (issues.empty()) return "ok";
  std::ostringstream os;
  os << issues.size() << " issue(s):";
  for (const auto& i : issues) os << "\n  - " << i.message;
  return os.str();
}

ValidationReport validate_demonstration(const Demonstration& demo) {
  ValidationReport report;
  auto add = [&](ValidationIssue::Kind kind, std::optional<std::size_t> t,
                 std::optional<std::size_t> f, std::string msg) {
    report.issues.push_back({kind, t, f, std::move(msg)});
  };

  const auto n = demo.length();
  if (n < 2) {
    add(ValidationIssue::Kind::TooShort, std::nullopt, std::nullopt,
        "demonstration has " + std::to_string(n) + " timesteps, need at least 2");
  }
  if (demo.states.cols() != kNumFeatures) {
    add(ValidationIssue::Kind::BadWidth, std::nullopt, std::nullopt,
        "feature width " + std::to_string(demo.states.cols()) + ", expected " +
            std::to_string(kNumFeatures));
  }
  if (!(demo.sample_rate_hz > 0.0) || !std::isfinite(demo.sample_rate_hz)) {
    add(ValidationIssue::Kind::BadSampleRate, std::nullopt, std::nullopt,
        "sample rate must be positive");
  }
  if (!demo.gripper.empty() && demo.gripper.size() != n) {
    add(ValidationIssue::Kind::GripperLength, std::nullopt, std::nullopt,
        "gripper schedule has " + std::to_string(demo.gripper.size()) +
            " entries for " + std::to_string(n) + " timesteps");
  }
  for (Eigen::Index t = 0; t < demo.states.rows(); ++t) {
    for (Eigen::Index f = 0; f < demo.states.cols(); ++f) {
      if (!std::isfinite(demo.states(t, f))) {
        add(ValidationIssue::Kind::NonFinite, static_cast<std::size_t>(t),
            static_cast<std::size_t>(f),
            "non-finite value at (t=" + std::to_string(t) +
                ", feature=" + std::to_string(f) + ")");
      }
    }
  }
  return report;
}

}  // namespace tbk
