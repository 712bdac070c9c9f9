#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pflock/error.hpp"
#include "pflock/flocking.hpp"
#include "pflock/rng.hpp"
#include "pflock/trajectory.hpp"
#include "pflock/window.hpp"

namespace pflock {

struct SimConfig {
  std::size_t n_robots{9};
  double sensing_range{10.0};
  double duration{180.0};
  double control_rate{2.0};
  double lookahead{3.0};
  double v_max{2.5};
  double formation_spacing{3.0};
  std::uint64_t seed{0};

  std::size_t step_count() const { return static_cast<std::size_t>(std::llround(duration * control_rate)); }

  // Empty when valid, otherwise the name of the offending field.
  std::optional<std::string> validate() const {
    if (n_robots < 2) return "n_robots";
    if (!(sensing_range > 0.0)) return "sensing_range";
    if (!(duration > 0.0) || !std::isfinite(duration)) return "duration";
    if (!(control_rate > 0.0) || !std::isfinite(control_rate)) return "control_rate";
    if (!(lookahead > 0.0)) return "lookahead";
    if (!(v_max > 0.0)) return "v_max";
    if (!(formation_spacing > 0.0)) return "formation_spacing";
    return std::nullopt;
  }
};

struct Placement {
  std::vector<RobotState> states;
  std::size_t leader_index{0};
};

inline constexpr double kCoincidenceTolerance = 1e-3;

// Followers on a square grid (closest cells to the center first, center cell excluded) around the
// trajectory start; the leader at (init_x, init_y) * grid half-extent from the center. Robot ids
// are a seeded permutation so the leader's id carries no information.
inline Placement initial_placement(const SimConfig& config, const ReferenceTrajectory& traj, double init_x,
                                   double init_y) {
  if (config.n_robots < 2) throw std::invalid_argument("initial_placement: n_robots must be >= 2");
  const std::size_t n = config.n_robots;
  const double s = config.formation_spacing;
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const double half_extent = 0.5 * static_cast<double>(side - 1) * s;
  const Vec3 center = traj.origin + Vec3{0.0, 0.0, traj.altitude};

  struct Cell {
    double x, y, d2;
    std::size_t order;
  };
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < side; ++r) {
    for (std::size_t c = 0; c < side; ++c) {
      const double x = static_cast<double>(c) * s - half_extent;
      const double y = static_cast<double>(r) * s - half_extent;
      const double d2 = x * x + y * y;
      if (d2 == 0.0) continue;
      cells.push_back({x, y, d2, r * side + c});
    }
  }
  std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.d2 < b.d2; });

  std::vector<Vec3> positions;
  positions.reserve(n);
  for (std::size_t k = 0; k + 1 < n; ++k) positions.push_back(center + Vec3{cells[k].x, cells[k].y, 0.0});

  Vec3 leader = center + Vec3{init_x * half_extent, init_y * half_extent, 0.0};
  for (const Vec3& p : positions) {
    if (distance(p, leader) < kCoincidenceTolerance) {
      leader.x += s / 10.0;
      break;
    }
  }
  positions.push_back(leader);

  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(derive_seed(config.seed, {stream::kSimulation}));
  std::shuffle(ids.begin(), ids.end(), rng);

  Placement out;
  out.states.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.states[ids[k]] = RobotState{positions[k], {}};
  out.leader_index = ids[n - 1];
  return out;
}

// Positions and velocities of every robot, sampled at the control rate.
struct SimTrace {
  SimConfig config;
  std::size_t n_robots{0};
  std::size_t leader_index{0};
  double dt{0.0};
  std::vector<RobotState> states;  // time-major, steps() * n_robots
  std::vector<double> leader_arc;  // leader's projected arc position per snapshot

  std::size_t steps() const { return n_robots == 0 ? 0 : states.size() / n_robots; }
  std::span<const RobotState> snapshot(std::size_t k) const {
    return std::span<const RobotState>(states).subspan(k * n_robots, n_robots);
  }
  double time(std::size_t k) const { return static_cast<double>(k) * dt; }
};

// Monotone arc-length follower of the reference path.
class LeaderTracker {
 public:
  LeaderTracker(const TrajectoryPath& path, double lookahead, double search_span)
      : path_(&path), lookahead_(lookahead), span_(search_span) {}

  double update(const Vec3& leader_position) {
    arc_ = path_->project(leader_position, arc_, span_);
    return arc_;
  }
  double arc() const { return arc_; }
  Vec3 target() const { return path_->point(arc_ + lookahead_); }

 private:
  const TrajectoryPath* path_;
  double lookahead_;
  double span_;
  double arc_{0.0};
};

inline double tracker_search_span(const SimConfig& config) {
  return config.lookahead + config.v_max / config.control_rate + 1.0;
}

namespace detail {
inline FollowerParams limit_radii(FollowerParams p, double range) {
  p.r_sep = std::min(p.r_sep, range);
  p.r_align = std::min(p.r_align, range);
  p.r_coh = std::min(p.r_coh, range);
  return p;
}
}  // namespace detail

// Forward-Euler kinematic rollout with synchronous control updates. Interaction radii are capped at
// the sensing range. Snapshot k stores positions at t = k / f_R and the velocity that produced them.
inline SimTrace simulate(const Chromosome& chromosome, const ReferenceTrajectory& traj, const SimConfig& config) {
  if (auto bad = config.validate()) throw ConfigError("sim." + *bad, "invalid value");
  const TrajectoryPath path(traj);
  const FollowerParams follower = detail::limit_radii(chromosome.follower(), config.sensing_range);
  LeaderParams leader = chromosome.leader();
  leader.flocking = detail::limit_radii(leader.flocking, config.sensing_range);

  Placement placement = initial_placement(config, traj, leader.init_x, leader.init_y);
  const std::size_t n = config.n_robots;
  const std::size_t q = config.step_count();
  const double dt = 1.0 / config.control_rate;

  SimTrace trace;
  trace.config = config;
  trace.n_robots = n;
  trace.leader_index = placement.leader_index;
  trace.dt = dt;
  trace.states.reserve(q * n);
  trace.leader_arc.reserve(q);

  LeaderTracker tracker(path, config.lookahead, tracker_search_span(config));
  std::vector<RobotState> current = std::move(placement.states);
  std::vector<Vec3> controls(n);
  const std::size_t l = trace.leader_index;

  for (std::size_t k = 0; k < q; ++k) {
    trace.states.insert(trace.states.end(), current.begin(), current.end());
    trace.leader_arc.push_back(tracker.update(current[l].position));
    if (k + 1 == q) break;

    const std::span<const RobotState> snap(current);
    for (std::size_t i = 0; i < n; ++i) {
      controls[i] = i == l ? leader_control(snap, i, leader, tracker.target(), config.v_max)
                           : follower_control(snap, i, follower, config.v_max);
    }
    for (std::size_t i = 0; i < n; ++i) {
      current[i].position += controls[i] * dt;
      current[i].velocity = controls[i];
      if (!is_finite(current[i].position) || !is_finite(current[i].velocity)) {
        throw SimulationError(k + 1, i, "non-finite state");
      }
    }
  }
  return trace;
}

// Non-overlapping position windows with `channels = round(f_D * W)` samples taken every f_R / f_D
// snapshots (nearest snapshot). Positions are left in world coordinates.
inline std::vector<ObservationWindow> extract_raw_windows(const SimTrace& trace, double window_seconds,
                                                          double sample_rate) {
  const double f_r = trace.config.control_rate;
  if (!(sample_rate > 0.0) || sample_rate > f_r) {
    throw std::invalid_argument("extract_windows: sample rate must be in (0, control_rate]");
  }
  if (window_seconds * sample_rate < 1.0) throw std::invalid_argument("extract_windows: W * f_D must be >= 1");
  const auto channels = static_cast<std::size_t>(std::llround(window_seconds * sample_rate));
  const auto length = static_cast<std::size_t>(std::llround(window_seconds * f_r));
  const double stride = f_r / sample_rate;
  const std::size_t n = trace.n_robots;
  std::vector<ObservationWindow> out;
  if (length == 0) return out;
  const std::size_t count = trace.steps() / length;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    ObservationWindow win(channels, n, trace.leader_index);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t k = std::min(w * length + static_cast<std::size_t>(std::llround(static_cast<double>(c) * stride)),
                                     trace.steps() - 1);
      const auto snap = trace.snapshot(k);
      for (std::size_t i = 0; i < n; ++i) win.set(c, i, snap[i].position);
    }
    out.push_back(std::move(win));
  }
  return out;
}

inline std::vector<ObservationWindow> extract_windows(const SimTrace& trace, double window_seconds,
                                                      double sample_rate) {
  auto windows = extract_raw_windows(trace, window_seconds, sample_rate);
  for (auto& w : windows) center_window(w);
  return windows;
}

// CSV with header t,robot_id,is_leader,px,py,pz,vx,vy,vz; one row per robot per snapshot.
inline void write_trace_csv(std::ostream& os, const SimTrace& trace) {
  os << "t,robot_id,is_leader,px,py,pz,vx,vy,vz\n";
  char buf[512];
  for (std::size_t k = 0; k < trace.steps(); ++k) {
    const auto snap = trace.snapshot(k);
    for (std::size_t i = 0; i < trace.n_robots; ++i) {
      const auto& s = snap[i];
      std::snprintf(buf, sizeof buf, "%.6f,%zu,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", trace.time(k), i,
                    i == trace.leader_index ? 1 : 0, s.position.x, s.position.y, s.position.z, s.velocity.x,
                    s.velocity.y, s.velocity.z);
      os << buf;
    }
  }
}

}  // namespace pflock
