#pragma once

#include <stdexcept>
#include <string>

namespace pflock {

// Invalid configuration. `path` is the dotted field path, e.g. "ga.kappa".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// Simulation produced a non-finite state.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(std::size_t step, std::size_t robot, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ", robot " + std::to_string(robot) + ": " +
                           what),
        step_(step),
        robot_(robot) {}
  std::size_t step() const noexcept { return step_; }
  std::size_t robot() const noexcept { return robot_; }

 private:
  std::size_t step_;
  std::size_t robot_;
};

// Malformed, truncated or mismatched checkpoint file.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pflock
