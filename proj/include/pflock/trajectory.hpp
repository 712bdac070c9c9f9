#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pflock/vec3.hpp"

namespace pflock {

enum class TrajectoryKind { line, sine, chevron };

inline std::string_view to_string(TrajectoryKind k) {
  switch (k) {
    case TrajectoryKind::line: return "line";
    case TrajectoryKind::sine: return "sine";
    case TrajectoryKind::chevron: return "chevron";
  }
  return "line";
}

inline std::optional<TrajectoryKind> parse_trajectory_kind(std::string_view s) {
  if (s == "line") return TrajectoryKind::line;
  if (s == "sine") return TrajectoryKind::sine;
  if (s == "chevron") return TrajectoryKind::chevron;
  return std::nullopt;
}

inline constexpr TrajectoryKind kAllTrajectoryKinds[] = {TrajectoryKind::line, TrajectoryKind::sine,
                                                         TrajectoryKind::chevron};

// Planar reference path flown at a fixed altitude above `origin`.
//  - line:    straight along `heading`.
//  - sine:    lateral offset amplitude * sin(2*pi*u / period_length), u measured along `heading`.
//  - chevron: straight legs of length period_length alternating between +angle and -angle to
//             `heading`, with angle = asin(amplitude / period_length). The first leg turns left.
struct ReferenceTrajectory {
  TrajectoryKind kind{TrajectoryKind::line};
  Vec3 origin{};
  double heading_x{1.0};
  double heading_y{0.0};
  double amplitude{0.0};
  double period_length{30.0};
  double altitude{0.0};

  static ReferenceTrajectory defaults(TrajectoryKind kind) {
    ReferenceTrajectory t;
    t.kind = kind;
    switch (kind) {
      case TrajectoryKind::line: break;
      case TrajectoryKind::sine:
        t.amplitude = 5.0;
        t.period_length = 30.0;
        break;
      case TrajectoryKind::chevron:
        t.period_length = 30.0;
        t.amplitude = 30.0 * std::sin(std::numbers::pi / 4.0);
        break;
    }
    return t;
  }

  // Empty when valid, otherwise the name of the offending field.
  std::optional<std::string> validate() const {
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) return "amplitude";
    if (!(period_length > 0.0) || !std::isfinite(period_length)) return "period_length";
    if (std::abs(std::hypot(heading_x, heading_y) - 1.0) > 1e-9) return "heading";
    if (kind == TrajectoryKind::chevron && amplitude > period_length) return "amplitude";
    if (!is_finite(origin) || !std::isfinite(altitude)) return "origin";
    return std::nullopt;
  }
};

// Arc-length parameterization of a ReferenceTrajectory. Construction precomputes the sine
// arc-length table, so build one per simulation and reuse it.
class TrajectoryPath {
 public:
  explicit TrajectoryPath(ReferenceTrajectory traj) : traj_(traj) {
    if (auto bad = traj_.validate()) throw std::invalid_argument("trajectory: invalid " + *bad);
    if (traj_.kind == TrajectoryKind::sine && traj_.amplitude > 0.0) build_sine_table();
  }

  const ReferenceTrajectory& trajectory() const { return traj_; }

  // Point at arc length `arc` (meters) from the start of the path.
  Vec3 point(double arc) const {
    arc = std::max(arc, 0.0);
    double along = arc;
    double lateral = 0.0;
    switch (traj_.kind) {
      case TrajectoryKind::line: break;
      case TrajectoryKind::sine:
        if (traj_.amplitude > 0.0) {
          along = sine_parameter(arc);
          lateral = traj_.amplitude * std::sin(2.0 * std::numbers::pi * along / traj_.period_length);
        }
        break;
      case TrajectoryKind::chevron: {
        const double leg = traj_.period_length;
        const double sin_a = traj_.amplitude / leg;
        const double cos_a = std::sqrt(std::max(0.0, 1.0 - sin_a * sin_a));
        const double k = std::floor(arc / leg);
        const double rem = arc - k * leg;
        const bool outbound = std::fmod(k, 2.0) == 0.0;
        along = k * leg * cos_a + rem * cos_a;
        lateral = outbound ? rem * sin_a : traj_.amplitude - rem * sin_a;
        break;
      }
    }
    return {traj_.origin.x + along * traj_.heading_x - lateral * traj_.heading_y,
            traj_.origin.y + along * traj_.heading_y + lateral * traj_.heading_x,
            traj_.origin.z + traj_.altitude};
  }

  // Arc position in [from, from + span] nearest to `p`, sampled every `step` meters.
  double project(const Vec3& p, double from, double span, double step = 0.05) const {
    double best_arc = from;
    double best = squared_norm(point(from) - p);
    const auto samples = static_cast<std::size_t>(std::ceil(span / step));
    for (std::size_t k = 1; k <= samples; ++k) {
      const double s = from + std::min(span, static_cast<double>(k) * step);
      const double d = squared_norm(point(s) - p);
      if (d < best) {
        best = d;
        best_arc = s;
      }
    }
    return best_arc;
  }

 private:
  static constexpr std::size_t kSineTableSize = 4096;

  void build_sine_table() {
    const double lambda = traj_.period_length;
    const double k = 2.0 * std::numbers::pi / lambda;
    const double a = traj_.amplitude * k;
    auto speed = [&](double u) {
      const double c = a * std::cos(k * u);
      return std::sqrt(1.0 + c * c);
    };
    cumulative_.assign(kSineTableSize + 1, 0.0);
    const double h = lambda / static_cast<double>(kSineTableSize);
    for (std::size_t i = 0; i < kSineTableSize; ++i) {
      const double u0 = static_cast<double>(i) * h;
      // Simpson's rule per cell.
      cumulative_[i + 1] = cumulative_[i] + h / 6.0 * (speed(u0) + 4.0 * speed(u0 + h / 2.0) + speed(u0 + h));
    }
  }

  // Along-track coordinate u with arc length s.
  double sine_parameter(double s) const {
    const double period_arc = cumulative_.back();
    const double periods = std::floor(s / period_arc);
    const double rem = s - periods * period_arc;
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), rem);
    const std::size_t i = std::min<std::size_t>(
        static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cumulative_.begin(), 1)) - 1, kSineTableSize - 1);
    const double h = traj_.period_length / static_cast<double>(kSineTableSize);
    const double cell = cumulative_[i + 1] - cumulative_[i];
    const double frac = cell > 0.0 ? (rem - cumulative_[i]) / cell : 0.0;
    return periods * traj_.period_length + (static_cast<double>(i) + frac) * h;
  }

  ReferenceTrajectory traj_;
  std::vector<double> cumulative_;
};

inline Vec3 trajectory_point(const ReferenceTrajectory& traj, double arc_position) {
  return TrajectoryPath(traj).point(arc_position);
}

}  // namespace pflock
