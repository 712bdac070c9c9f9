#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pflock/flocking.hpp"
#include "pflock/simulation.hpp"
#include "pflock/trajectory.hpp"

namespace pflock {

inline constexpr std::size_t kMetricCount = 9;

struct MetricWeights {
  std::array<double, kMetricCount> b{1, 1, 1, 1, 1, 1, 1, 1, 1};
  double r_lo{1.0};
  double r_hi{5.0};
  double v_min{1.0};

  std::optional<std::string> validate() const {
    for (double w : b)
      if (!std::isfinite(w) || w < 0.0) return "b";
    if (!(r_lo < r_hi) || !std::isfinite(r_lo) || !std::isfinite(r_hi)) return "r_lo";
    if (!(v_min >= 0.0) || !std::isfinite(v_min)) return "v_min";
    return std::nullopt;
  }
};

// m = [-mean alignment, var alignment, spacing penalty, var min-spacing, mean spacing variance,
//      mean tracking error, var tracking error, speed penalty, var flock speed]
struct MetricsVector {
  std::array<double, kMetricCount> m{};

  double neg_mean_alignment() const { return m[0]; }
  double spacing_penalty() const { return m[2]; }
  double mean_tracking_error() const { return m[5]; }
  double speed_penalty() const { return m[7]; }
};

inline constexpr std::array<std::string_view, kMetricCount> kMetricNames = {
    "neg_mean_alignment", "var_alignment",       "spacing_penalty",     "var_min_spacing", "mean_spacing_variance",
    "mean_tracking_error", "var_tracking_error", "speed_penalty",       "var_flock_speed"};

// Mean cosine similarity over ordered pairs of robots with nonzero speed; 0 with fewer than two.
inline double velocity_correlation(std::span<const RobotState> snapshot) {
  std::vector<Vec3> unit;
  unit.reserve(snapshot.size());
  for (const auto& s : snapshot) {
    const double n = norm(s.velocity);
    if (n > 0.0) unit.push_back(s.velocity / n);
  }
  const std::size_t k = unit.size();
  if (k < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j) sum += dot(unit[i], unit[j]);
  return sum / static_cast<double>(k * (k - 1));
}

// Distance from each robot to its nearest other robot.
inline std::vector<double> nearest_distances(std::span<const RobotState> snapshot) {
  std::vector<double> out(snapshot.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < snapshot.size(); ++i)
    for (std::size_t j = 0; j < snapshot.size(); ++j)
      if (i != j) out[i] = std::min(out[i], distance(snapshot[i].position, snapshot[j].position));
  return out;
}

inline double min_spacing(std::span<const RobotState> snapshot) {
  const auto d = nearest_distances(snapshot);
  double sum = 0.0;
  for (double v : d) sum += v;
  return sum / static_cast<double>(d.size());
}

inline double spacing_penalty(double mean_min_spacing, const MetricWeights& w) {
  if (mean_min_spacing >= w.r_lo && mean_min_spacing <= w.r_hi) return 0.0;
  return std::min(std::abs(mean_min_spacing - w.r_lo), std::abs(mean_min_spacing - w.r_hi));
}

inline double spacing_variance(std::span<const RobotState> snapshot) {
  const auto d = nearest_distances(snapshot);
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(d.size());
  double acc = 0.0;
  for (double v : d) acc += (v - mean) * (v - mean);
  return acc / static_cast<double>(d.size());
}

inline double tracking_error(const Vec3& leader_position, const Vec3& target) { return distance(leader_position, target); }

inline double flock_speed(std::span<const RobotState> snapshot) {
  Vec3 sum{};
  for (const auto& s : snapshot) sum += s.velocity;
  return norm(sum) / static_cast<double>(snapshot.size());
}

inline double speed_penalty(double mean_speed, const MetricWeights& w) {
  if (mean_speed >= w.v_min) return 0.0;
  return std::abs(mean_speed - w.v_min);
}

struct MeanVariance {
  double mean{0.0};
  double variance{0.0};
};

// Population mean and variance.
inline MeanVariance aggregate(std::span<const double> series) {
  if (series.empty()) throw std::invalid_argument("aggregate: empty series");
  const double n = static_cast<double>(series.size());
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  return {mean, var / n};
}

struct FlockingLoss {
  double value{0.0};
  MetricsVector metrics;
};

inline double weighted_loss(const MetricsVector& m, const MetricWeights& w) {
  double f = 0.0;
  for (std::size_t k = 0; k < kMetricCount; ++k) f += w.b[k] * m.m[k];
  return f;
}

// Per-step metrics over the whole trace, aggregated and combined as F = b^T m.
inline FlockingLoss flocking_loss(const SimTrace& trace, const ReferenceTrajectory& traj, const MetricWeights& w) {
  const std::size_t q = trace.steps();
  if (q == 0) throw std::invalid_argument("flocking_loss: empty trace");
  const TrajectoryPath path(traj);
  std::vector<double> align(q), spacing(q), spread(q), track(q), speed(q);
  for (std::size_t k = 0; k < q; ++k) {
    const auto snap = trace.snapshot(k);
    align[k] = velocity_correlation(snap);
    const auto nd = nearest_distances(snap);
    double mean = 0.0;
    for (double d : nd) mean += d;
    mean /= static_cast<double>(nd.size());
    double var = 0.0;
    for (double d : nd) var += (d - mean) * (d - mean);
    spacing[k] = mean;
    spread[k] = var / static_cast<double>(nd.size());
    const Vec3 target = path.point(trace.leader_arc[k] + trace.config.lookahead);
    track[k] = tracking_error(snap[trace.leader_index].position, target);
    speed[k] = flock_speed(snap);
  }
  const auto a = aggregate(align);
  const auto r = aggregate(spacing);
  const auto s = aggregate(spread);
  const auto x = aggregate(track);
  const auto v = aggregate(speed);

  FlockingLoss out;
  out.metrics.m = {-a.mean,        a.variance,    spacing_penalty(r.mean, w), r.variance, s.mean,
                   x.mean,         x.variance,    speed_penalty(v.mean, w),   v.variance};
  out.value = weighted_loss(out.metrics, w);
  return out;
}

}  // namespace pflock
