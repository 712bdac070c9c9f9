#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "pflock/error.hpp"
#include "pflock/flocking.hpp"
#include "pflock/ga.hpp"
#include "pflock/metrics.hpp"
#include "pflock/nn/discriminator.hpp"
#include "pflock/nn/training.hpp"
#include "pflock/rng.hpp"
#include "pflock/simulation.hpp"
#include "pflock/trajectory.hpp"
#include "pflock/window.hpp"

namespace pflock {

struct DiscriminatorConfig {
  double window_seconds{5.0};
  double sample_rate{2.0};
  std::size_t conv_channels{16};
  std::size_t hidden{512};
  double learning_rate{0.025};
  double momentum{0.9};
  std::size_t batch_size{32};
  double gamma{0.01};
  double bn_epsilon{1e-5};
  double bn_momentum{0.1};

  std::size_t channels() const { return static_cast<std::size_t>(std::llround(window_seconds * sample_rate)); }

  nn::Architecture architecture(std::size_t n_robots) const { return {n_robots, channels(), conv_channels, hidden}; }

  std::optional<std::string> validate() const {
    if (!(sample_rate > 0.0)) return "sample_rate";
    if (!(window_seconds * sample_rate >= 1.0)) return "window_seconds";
    if (conv_channels == 0) return "conv_channels";
    if (hidden == 0) return "hidden";
    if (!(learning_rate > 0.0)) return "learning_rate";
    if (!(momentum >= 0.0 && momentum < 1.0)) return "momentum";
    if (batch_size == 0) return "batch_size";
    if (!(gamma > 0.0)) return "gamma";
    if (!(bn_epsilon > 0.0)) return "bn_epsilon";
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) return "bn_momentum";
    return std::nullopt;
  }
};

// Hand-tuned flocking used to pre-train the discriminator. The leader offset genes are overwritten
// per experiment.
// Followers align with gain 0.8 and cohere with 0.6; the leader only separates and tracks (omega 0.8).
inline Chromosome default_hand_tuned(TrajectoryKind /*kind*/) {
  const FollowerParams f{1.5, 0.8, 0.6, 2.5, 6.0, 8.0};
  const LeaderParams l{{1.0, 0.0, 0.0, 2.5, 6.0, 8.0}, 0.8, 0.0, 0.0};
  return Chromosome::from_params(f, l);
}

struct PretrainConfig {
  std::size_t epochs{150};
  std::size_t sample_count{2000};
  std::vector<TrajectoryKind> trajectories{TrajectoryKind::line, TrajectoryKind::sine, TrajectoryKind::chevron};
  std::map<TrajectoryKind, Chromosome> hand_tuned{{TrajectoryKind::line, default_hand_tuned(TrajectoryKind::line)},
                                                  {TrajectoryKind::sine, default_hand_tuned(TrajectoryKind::sine)},
                                                  {TrajectoryKind::chevron, default_hand_tuned(TrajectoryKind::chevron)}};
  double test_fraction{0.2};
};

struct CooptConfig {
  TrajectoryKind trajectory{TrajectoryKind::line};
  std::size_t buffer_capacity{100};
  std::size_t online_epochs{1};
  PretrainConfig pretrain;
  std::uint64_t master_seed{0};
};

struct WorkbenchConfig {
  SimConfig sim;
  std::map<TrajectoryKind, ReferenceTrajectory> trajectories{
      {TrajectoryKind::line, ReferenceTrajectory::defaults(TrajectoryKind::line)},
      {TrajectoryKind::sine, ReferenceTrajectory::defaults(TrajectoryKind::sine)},
      {TrajectoryKind::chevron, ReferenceTrajectory::defaults(TrajectoryKind::chevron)}};
  MetricWeights metrics;
  GaConfig ga;
  DiscriminatorConfig nn;
  CooptConfig coopt;
  std::size_t workers{1};

  const ReferenceTrajectory& trajectory(TrajectoryKind k) const { return trajectories.at(k); }
  nn::Architecture architecture() const { return nn.architecture(sim.n_robots); }

  nn::Discriminator fresh_discriminator(std::uint64_t seed) const {
    auto net = nn::Discriminator::create(architecture(), seed);
    net.bn_epsilon = nn.bn_epsilon;
    net.bn_momentum = nn.bn_momentum;
    return net;
  }
  nn::OptimizerState fresh_optimizer() const {
    return nn::OptimizerState::create(architecture(), nn.learning_rate, nn.momentum);
  }
};

// Bounded FIFO of recent experiments whose flocking loss qualified (f_loss <= kappa).
class ReplayBuffer {
 public:
  struct Entry {
    std::vector<ObservationWindow> windows;
    std::size_t label{0};
    double f_loss{0.0};
    std::size_t generation{0};
    std::size_t experiment_id{0};
  };

  ReplayBuffer(std::size_t capacity, double kappa) : capacity_(capacity), kappa_(kappa) {}

  // Returns whether the entry was accepted.
  bool push(Entry e) {
    if (!(e.f_loss <= kappa_) || capacity_ == 0) return false;
    entries_.push_back(std::move(e));
    while (entries_.size() > capacity_) entries_.pop_front();
    return true;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  double kappa() const { return kappa_; }
  const std::deque<Entry>& entries() const { return entries_; }

  // Every buffered window, oldest entry first.
  std::vector<ObservationWindow> windows() const {
    std::vector<ObservationWindow> out;
    for (const auto& e : entries_) out.insert(out.end(), e.windows.begin(), e.windows.end());
    return out;
  }

 private:
  std::size_t capacity_;
  double kappa_;
  std::deque<Entry> entries_;
};

struct ExperimentResult {
  double f_loss{std::numeric_limits<double>::infinity()};
  double p_loss{0.0};
  MetricsVector metrics;
  std::optional<SimTrace> trace;
  std::vector<ObservationWindow> windows;
  std::string error;
};

// Simulate, score flocking, cut windows and score privacy against the (frozen) net.
inline ExperimentResult evaluate_chromosome(const Chromosome& chromosome, const ReferenceTrajectory& traj,
                                            const SimConfig& sim, const MetricWeights& weights,
                                            const nn::Discriminator& net, const DiscriminatorConfig& disc) {
  ExperimentResult r;
  try {
    SimTrace trace = simulate(chromosome, traj, sim);
    const auto loss = flocking_loss(trace, traj, weights);
    r.f_loss = loss.value;
    r.metrics = loss.metrics;
    r.windows = extract_windows(trace, disc.window_seconds, disc.sample_rate);
    r.trace = std::move(trace);
  } catch (const SimulationError& e) {
    r.f_loss = std::numeric_limits<double>::infinity();
    r.error = e.what();
    r.windows.clear();
  }
  r.p_loss = r.windows.empty() ? 1.0 / disc.gamma : nn::privacy_loss(net, r.windows, disc.gamma);
  return r;
}

inline std::uint64_t experiment_seed(std::uint64_t master, std::size_t experiment_id, std::size_t repeat = 0) {
  return derive_seed(master, {stream::kSimulation, experiment_id, repeat});
}

// Runs fn(j) for j in [0, count) on up to `workers` threads. Results land by index.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t j = 0; j < count; ++j) fn(j);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t j = w; j < count; j += workers) fn(j);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Evaluates one experiment per chromosome (averaging losses over `repeats`), seeding experiment e
// from (master seed, e, repeat).
inline std::vector<ExperimentResult> evaluate_experiments(std::span<const Chromosome> chromosomes,
                                                          std::size_t first_experiment_id, const WorkbenchConfig& cfg,
                                                          const nn::Discriminator& net) {
  std::vector<ExperimentResult> out(chromosomes.size());
  const auto& traj = cfg.trajectory(cfg.coopt.trajectory);
  parallel_for(chromosomes.size(), cfg.workers, [&](std::size_t j) {
    const std::size_t repeats = std::max<std::size_t>(1, cfg.ga.repeats_per_eval);
    ExperimentResult acc;
    for (std::size_t r = 0; r < repeats; ++r) {
      SimConfig sim = cfg.sim;
      sim.seed = experiment_seed(cfg.coopt.master_seed, first_experiment_id + j, r);
      auto res = evaluate_chromosome(chromosomes[j], traj, sim, cfg.metrics, net, cfg.nn);
      if (r == 0) {
        acc = std::move(res);
        continue;
      }
      acc.f_loss += res.f_loss;
      acc.p_loss += res.p_loss;
      for (std::size_t k = 0; k < kMetricCount; ++k) acc.metrics.m[k] += res.metrics.m[k];
      acc.windows.insert(acc.windows.end(), res.windows.begin(), res.windows.end());
      if (acc.error.empty()) acc.error = res.error;
    }
    if (repeats > 1) {
      const double n = static_cast<double>(repeats);
      acc.f_loss /= n;
      acc.p_loss /= n;
      for (double& v : acc.metrics.m) v /= n;
    }
    if (!acc.error.empty()) acc.f_loss = std::numeric_limits<double>::infinity();
    out[j] = std::move(acc);
  });
  return out;
}

struct PretrainResult {
  double train_accuracy{0.0};
  double test_accuracy{0.0};
  std::size_t train_windows{0};
  std::size_t test_windows{0};
  std::vector<double> epoch_losses;
};

// Windows from `count` hand-tuned experiments cycling through `kinds`, leader offsets uniform in
// [-1, 1]^2. Each experiment's windows are kept together.
inline std::vector<std::vector<ObservationWindow>> hand_tuned_experiments(const WorkbenchConfig& cfg,
                                                                         std::span<const TrajectoryKind> kinds,
                                                                         std::size_t count, std::uint64_t seed) {
  std::vector<std::vector<ObservationWindow>> out(count);
  parallel_for(count, cfg.workers, [&](std::size_t k) {
    const TrajectoryKind kind = kinds[k % kinds.size()];
    Rng rng(derive_seed(seed, {stream::kPretrain, k}));
    Chromosome c = cfg.coopt.pretrain.hand_tuned.at(kind);
    c.genes[13] = uniform(rng, -1.0, 1.0);
    c.genes[14] = uniform(rng, -1.0, 1.0);
    SimConfig sim = cfg.sim;
    sim.seed = derive_seed(seed, {stream::kPretrain, k, 1});
    out[k] = extract_windows(simulate(c, cfg.trajectory(kind), sim), cfg.nn.window_seconds, cfg.nn.sample_rate);
  });
  return out;
}

// Generates the pre-training set, splits it by experiment into train/test, trains and reports
// accuracy on both parts.
inline PretrainResult pretrain(nn::Discriminator& net, nn::OptimizerState& opt, const WorkbenchConfig& cfg,
                               std::uint64_t seed) {
  const auto& pc = cfg.coopt.pretrain;
  if (pc.trajectories.empty()) throw ConfigError("coopt.pretrain.trajectories", "no trajectory kinds");
  for (auto k : pc.trajectories)
    if (!pc.hand_tuned.contains(k))
      throw ConfigError("coopt.pretrain.hand_tuned", "missing chromosome for " + std::string(to_string(k)));
  auto experiments = hand_tuned_experiments(cfg, pc.trajectories, pc.sample_count, seed);
  Rng rng(derive_seed(seed, {stream::kTraining}));
  std::shuffle(experiments.begin(), experiments.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(pc.test_fraction * static_cast<double>(experiments.size())));
  std::vector<ObservationWindow> train, test;
  for (std::size_t k = 0; k < experiments.size(); ++k) {
    auto& dst = k < n_test ? test : train;
    dst.insert(dst.end(), experiments[k].begin(), experiments[k].end());
  }
  if (train.empty() || test.empty())
    throw ConfigError("coopt.pretrain.sample_count", "not enough windows for a train/test split");

  PretrainResult r;
  r.train_windows = train.size();
  r.test_windows = test.size();
  for (std::size_t e = 0; e < pc.epochs; ++e)
    r.epoch_losses.push_back(nn::train_epoch(net, train, opt, cfg.nn.batch_size, rng).mean_loss);
  r.train_accuracy = nn::accuracy(net, train);
  r.test_accuracy = nn::accuracy(net, test);
  return r;
}

// Raw (uncentered) windows of `count` fresh experiments flying `chromosome` on `kind`.
inline std::vector<ObservationWindow> fresh_raw_windows(const WorkbenchConfig& cfg, const Chromosome& chromosome,
                                                        TrajectoryKind kind, std::size_t count, std::uint64_t seed,
                                                        bool randomize_offsets) {
  std::vector<std::vector<ObservationWindow>> per(count);
  parallel_for(count, cfg.workers, [&](std::size_t k) {
    Rng rng(derive_seed(seed, {stream::kEvaluation, k}));
    Chromosome c = chromosome;
    if (randomize_offsets) {
      c.genes[13] = uniform(rng, -1.0, 1.0);
      c.genes[14] = uniform(rng, -1.0, 1.0);
    }
    SimConfig sim = cfg.sim;
    sim.seed = derive_seed(seed, {stream::kEvaluation, k, 1});
    per[k] = extract_raw_windows(simulate(c, cfg.trajectory(kind), sim), cfg.nn.window_seconds, cfg.nn.sample_rate);
  });
  std::vector<ObservationWindow> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

// Accuracy on noisy copies of `raw` windows: noise of each variance is added before centering.
inline std::vector<double> noisy_accuracies(const nn::Discriminator& net, std::span<const ObservationWindow> raw,
                                            std::span<const double> variances, std::uint64_t seed) {
  std::vector<double> out;
  for (std::size_t v = 0; v < variances.size(); ++v) {
    Rng rng(derive_seed(seed, {stream::kNoise, v}));
    std::vector<ObservationWindow> noisy(raw.begin(), raw.end());
    for (auto& w : noisy) {
      add_position_noise(w, variances[v], rng);
      center_window(w);
    }
    out.push_back(nn::accuracy(net, noisy));
  }
  return out;
}

inline std::vector<double> eval_noise_robustness(const nn::Discriminator& net, const WorkbenchConfig& cfg,
                                                 const Chromosome& chromosome, TrajectoryKind kind,
                                                 std::span<const double> variances, std::size_t experiments,
                                                 std::uint64_t seed, bool randomize_offsets) {
  const auto raw = fresh_raw_windows(cfg, chromosome, kind, experiments, seed, randomize_offsets);
  if (raw.empty()) throw ConfigError("sim.duration", "experiments too short for one observation window");
  return noisy_accuracies(net, raw, variances, seed);
}

// accuracy[net][kind] on fresh experiments flying chromosomes[kind].
inline std::vector<std::vector<double>> eval_generalization(std::span<const nn::Discriminator> nets,
                                                            const WorkbenchConfig& cfg,
                                                            std::span<const TrajectoryKind> kinds,
                                                            const std::map<TrajectoryKind, Chromosome>& chromosomes,
                                                            std::size_t experiments, std::uint64_t seed,
                                                            bool randomize_offsets) {
  std::vector<std::vector<double>> matrix(nets.size(), std::vector<double>(kinds.size(), 0.0));
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    auto windows = fresh_raw_windows(cfg, chromosomes.at(kinds[k]), kinds[k], experiments,
                                     derive_seed(seed, {static_cast<std::uint64_t>(kinds[k])}), randomize_offsets);
    if (windows.empty()) throw ConfigError("sim.duration", "experiments too short for one observation window");
    for (auto& w : windows) center_window(w);
    for (std::size_t n = 0; n < nets.size(); ++n) matrix[n][k] = nn::accuracy(nets[n], windows);
  }
  return matrix;
}

}  // namespace pflock
