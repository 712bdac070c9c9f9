#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "pflock/rng.hpp"
#include "pflock/vec3.hpp"

namespace pflock {

// Discriminator input: positions of all robots over one observation window, stored channel-major
// (channels x robots x 3) so it feeds the CNN directly, plus the true leader id.
struct ObservationWindow {
  std::size_t channels{0};
  std::size_t robots{0};
  std::size_t label{0};
  std::vector<double> data;

  ObservationWindow() = default;
  ObservationWindow(std::size_t c, std::size_t n, std::size_t y) : channels(c), robots(n), label(y), data(c * n * 3) {}

  double& at(std::size_t c, std::size_t i, std::size_t axis) { return data[(c * robots + i) * 3 + axis]; }
  double at(std::size_t c, std::size_t i, std::size_t axis) const { return data[(c * robots + i) * 3 + axis]; }
  Vec3 position(std::size_t c, std::size_t i) const { return {at(c, i, 0), at(c, i, 1), at(c, i, 2)}; }
  void set(std::size_t c, std::size_t i, const Vec3& p) {
    at(c, i, 0) = p.x;
    at(c, i, 1) = p.y;
    at(c, i, 2) = p.z;
  }
};

// Subtracts the flock centroid of the first channel from every position.
inline void center_window(ObservationWindow& w) {
  if (w.channels == 0 || w.robots == 0) return;
  Vec3 centroid{};
  for (std::size_t i = 0; i < w.robots; ++i) centroid += w.position(0, i);
  centroid /= static_cast<double>(w.robots);
  for (std::size_t c = 0; c < w.channels; ++c)
    for (std::size_t i = 0; i < w.robots; ++i) w.set(c, i, w.position(c, i) - centroid);
}

// Adds i.i.d. zero-mean Gaussian noise of the given variance to every coordinate. No-op at 0.
inline void add_position_noise(ObservationWindow& w, double variance, Rng& rng) {
  if (variance <= 0.0) return;
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  for (double& v : w.data) v += normal(rng);
}

}  // namespace pflock
