#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "pflock/vec3.hpp"

namespace pflock {

struct RobotState {
  Vec3 position{};
  Vec3 velocity{};

  friend bool operator==(const RobotState&, const RobotState&) = default;
};

// Reynolds gains and interaction radii shared by every follower.
struct FollowerParams {
  double alpha_sep{0.0};
  double alpha_align{0.0};
  double alpha_coh{0.0};
  double r_sep{1.0};
  double r_align{1.0};
  double r_coh{1.0};
};

// The leader's own Reynolds parameters, its trajectory-tracking gain and its initial offset
// inside the formation, both offsets in [-1, 1].
struct LeaderParams {
  FollowerParams flocking{};
  double omega{0.0};
  double init_x{0.0};
  double init_y{0.0};
};

inline constexpr std::size_t kFollowerGeneCount = 6;
inline constexpr std::size_t kGeneCount = 15;

inline constexpr std::array<std::string_view, kGeneCount> kGeneNames = {
    "f_alpha_sep", "f_alpha_align", "f_alpha_coh", "f_r_sep", "f_r_align",
    "f_r_coh",     "l_alpha_sep",   "l_alpha_align", "l_alpha_coh", "l_r_sep",
    "l_r_align",   "l_r_coh",       "l_omega",       "l_init_x",    "l_init_y"};

// GA search point: follower genes [0, 6) followed by leader genes [6, 15), ordered as kGeneNames.
struct Chromosome {
  std::array<double, kGeneCount> genes{};

  FollowerParams follower() const {
    return {genes[0], genes[1], genes[2], genes[3], genes[4], genes[5]};
  }
  LeaderParams leader() const {
    return {{genes[6], genes[7], genes[8], genes[9], genes[10], genes[11]}, genes[12], genes[13], genes[14]};
  }

  static Chromosome from_params(const FollowerParams& f, const LeaderParams& l) {
    return {{f.alpha_sep, f.alpha_align, f.alpha_coh, f.r_sep, f.r_align, f.r_coh,
             l.flocking.alpha_sep, l.flocking.alpha_align, l.flocking.alpha_coh, l.flocking.r_sep,
             l.flocking.r_align, l.flocking.r_coh, l.omega, l.init_x, l.init_y}};
  }

  friend bool operator==(const Chromosome&, const Chromosome&) = default;
};

// All j != i with |p_i - p_j| <= radius.
inline std::vector<std::size_t> neighborhood(std::span<const RobotState> states, std::size_t i, double radius) {
  std::vector<std::size_t> out;
  const double r2 = radius * radius;
  for (std::size_t j = 0; j < states.size(); ++j) {
    if (j != i && squared_norm(states[i].position - states[j].position) <= r2) out.push_back(j);
  }
  return out;
}

// Mean inverse-distance repulsion from neighbors within r_sep. Coincident robots contribute zero.
inline Vec3 separation_velocity(std::span<const RobotState> states, std::size_t i, double r_sep) {
  const auto nbrs = neighborhood(states, i, r_sep);
  if (nbrs.empty()) return {};
  Vec3 sum{};
  for (std::size_t j : nbrs) {
    const Vec3 d = states[i].position - states[j].position;
    const double d2 = squared_norm(d);
    if (d2 > 0.0 && d2 < r_sep * r_sep) sum += d / d2;
  }
  return sum / static_cast<double>(nbrs.size());
}

// Mean neighbor velocity; own velocity when alone.
inline Vec3 alignment_velocity(std::span<const RobotState> states, std::size_t i, double r_align) {
  const auto nbrs = neighborhood(states, i, r_align);
  if (nbrs.empty()) return states[i].velocity;
  Vec3 sum{};
  for (std::size_t j : nbrs) sum += states[j].velocity;
  return sum / static_cast<double>(nbrs.size());
}

// Mean offset towards neighbors within r_coh.
inline Vec3 cohesion_velocity(std::span<const RobotState> states, std::size_t i, double r_coh) {
  const auto nbrs = neighborhood(states, i, r_coh);
  if (nbrs.empty()) return {};
  Vec3 sum{};
  for (std::size_t j : nbrs) sum += states[j].position - states[i].position;
  return sum / static_cast<double>(nbrs.size());
}

// Weighted Reynolds sum before saturation.
inline Vec3 reynolds_velocity(std::span<const RobotState> states, std::size_t i, const FollowerParams& p) {
  Vec3 u{};
  if (p.alpha_sep != 0.0) u += p.alpha_sep * separation_velocity(states, i, p.r_sep);
  if (p.alpha_align != 0.0) u += p.alpha_align * alignment_velocity(states, i, p.r_align);
  if (p.alpha_coh != 0.0) u += p.alpha_coh * cohesion_velocity(states, i, p.r_coh);
  return u;
}

inline Vec3 follower_control(std::span<const RobotState> states, std::size_t i, const FollowerParams& p,
                             double v_max) {
  return clip_norm(reynolds_velocity(states, i, p), v_max);
}

inline constexpr double kTrackingSingularity = 1e-9;

// Proportional pull of magnitude omega towards `target`.
inline Vec3 tracking_velocity(const Vec3& position, const Vec3& target, double omega) {
  const Vec3 d = target - position;
  const double n = norm(d);
  if (n < kTrackingSingularity) return {};
  return d * (omega / n);
}

inline Vec3 leader_control(std::span<const RobotState> states, std::size_t l, const LeaderParams& p,
                           const Vec3& target, double v_max) {
  return clip_norm(reynolds_velocity(states, l, p.flocking) + tracking_velocity(states[l].position, target, p.omega),
                   v_max);
}

}  // namespace pflock
