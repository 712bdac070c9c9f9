#include <gtest/gtest.h>

#include <set>

#include "pflock/archive.hpp"

using namespace pflock;

namespace {

Chromosome zero_gain() {
  Chromosome c;
  for (std::size_t k : {3, 4, 5, 9, 10, 11}) c.genes[k] = 1.0;
  return c;
}

nn::Discriminator uniform_net(const WorkbenchConfig& cfg) {
  auto net = cfg.fresh_discriminator(1);
  net.params[nn::kFc2Weight].fill(0.0);
  net.params[nn::kFc2Bias].fill(0.0);
  return net;
}

WorkbenchConfig small_config() {
  WorkbenchConfig c;
  c.sim.duration = 12;
  c.ga.population_size = 4;
  c.ga.elitism_count = 2;
  c.ga.generations = 3;
  c.nn.conv_channels = 4;
  c.nn.hidden = 16;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pflock_test_" + name);
  fs::remove_all(p);
  return p;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      files[fs::relative(e.path(), root).string()] = read_file(e.path());
  return files;
}

}  // namespace

TEST(EvaluateChromosome, StationaryFlockFailsTheGate) {
  WorkbenchConfig cfg;
  cfg.sim.duration = 30;
  const auto r = evaluate_chromosome(zero_gain(), cfg.trajectory(TrajectoryKind::line), cfg.sim, cfg.metrics,
                                     uniform_net(cfg), cfg.nn);
  EXPECT_DOUBLE_EQ(r.metrics.m[7], 1.0);
  EXPECT_GT(r.f_loss, 2.0);
  EXPECT_GT(r.f_loss, cfg.ga.kappa);
}

TEST(EvaluateChromosome, UniformNetPrivacyLoss) {
  WorkbenchConfig cfg;
  const auto r = evaluate_chromosome(default_hand_tuned(TrajectoryKind::line), cfg.trajectory(TrajectoryKind::line),
                                     cfg.sim, cfg.metrics, uniform_net(cfg), cfg.nn);
  ASSERT_EQ(r.windows.size(), 36u);
  EXPECT_NEAR(r.p_loss, 1.0 / (36.0 * std::log(9.0) + 0.01), 1e-12);
}

TEST(EvaluateChromosome, Deterministic) {
  WorkbenchConfig cfg;
  cfg.sim.duration = 20;
  cfg.sim.seed = 5;
  const auto net = cfg.fresh_discriminator(3);
  const auto c = default_hand_tuned(TrajectoryKind::sine);
  const auto a = evaluate_chromosome(c, cfg.trajectory(TrajectoryKind::sine), cfg.sim, cfg.metrics, net, cfg.nn);
  const auto b = evaluate_chromosome(c, cfg.trajectory(TrajectoryKind::sine), cfg.sim, cfg.metrics, net, cfg.nn);
  EXPECT_EQ(a.f_loss, b.f_loss);
  EXPECT_EQ(a.p_loss, b.p_loss);
}

TEST(EvaluateChromosome, AbortGivesInfiniteLossAndNoWindows) {
  WorkbenchConfig cfg;
  cfg.sim.duration = 10;
  Chromosome c = default_hand_tuned(TrajectoryKind::line);
  c.genes[1] = std::numeric_limits<double>::quiet_NaN();
  const auto r = evaluate_chromosome(c, cfg.trajectory(TrajectoryKind::line), cfg.sim, cfg.metrics, uniform_net(cfg), cfg.nn);
  EXPECT_TRUE(std::isinf(r.f_loss));
  EXPECT_TRUE(r.windows.empty());
  EXPECT_FALSE(r.error.empty());
  EXPECT_DOUBLE_EQ(r.p_loss, 1.0 / cfg.nn.gamma);
}

TEST(ReplayBuffer, GatingCapacityAndOrder) {
  ReplayBuffer b(3, 2.0);
  auto entry = [](double f, std::size_t id) {
    ReplayBuffer::Entry e;
    e.f_loss = f;
    e.experiment_id = id;
    e.windows.resize(1);
    e.windows[0].label = id;
    return e;
  };
  EXPECT_FALSE(b.push(entry(2.5, 0)));
  EXPECT_TRUE(b.push(entry(2.0, 1)));
  for (std::size_t id = 2; id < 6; ++id) EXPECT_TRUE(b.push(entry(1.0, id)));
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b.entries()[0].experiment_id, 3u);
  EXPECT_EQ(b.entries()[2].experiment_id, 5u);
  EXPECT_EQ(b.windows().front().label, 3u);
  for (const auto& e : b.entries()) EXPECT_LE(e.f_loss, 2.0);

  ReplayBuffer closed(10, -std::numeric_limits<double>::infinity());
  EXPECT_FALSE(closed.push(entry(-1e300, 0)));
}

TEST(Pretrain, ZeroEpochsIsNearChance) {
  WorkbenchConfig cfg = small_config();
  cfg.sim.duration = 20;
  cfg.coopt.pretrain.epochs = 0;
  cfg.coopt.pretrain.sample_count = 60;
  auto net = cfg.fresh_discriminator(0);
  auto opt = cfg.fresh_optimizer();
  const auto r = pretrain(net, opt, cfg, 11);
  EXPECT_EQ(r.epoch_losses.size(), 0u);
  EXPECT_EQ(r.test_windows, 12u * 4u);
  EXPECT_LE(r.test_accuracy, 0.4);
}

TEST(Pretrain, ErrorsAreConfigErrors) {
  WorkbenchConfig cfg = small_config();
  cfg.coopt.pretrain.hand_tuned.erase(TrajectoryKind::sine);
  auto net = cfg.fresh_discriminator(0);
  auto opt = cfg.fresh_optimizer();
  try {
    pretrain(net, opt, cfg, 0);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "coopt.pretrain.hand_tuned");
  }
  cfg = small_config();
  cfg.coopt.pretrain.sample_count = 1;
  try {
    pretrain(net, opt, cfg, 0);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "coopt.pretrain.sample_count");
  }
}

TEST(Pretrain, LearnsOnTinySet) {
  WorkbenchConfig cfg = small_config();
  cfg.sim.duration = 30;
  cfg.coopt.pretrain.epochs = 30;
  cfg.coopt.pretrain.sample_count = 30;
  auto net = cfg.fresh_discriminator(0);
  auto opt = cfg.fresh_optimizer();
  const auto r = pretrain(net, opt, cfg, 2);
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
  EXPECT_GT(r.train_accuracy, 0.5);
}

TEST(NoiseHarness, ZeroVarianceIsCleanAndHugeIsChance) {
  WorkbenchConfig cfg = small_config();
  cfg.sim.duration = 30;
  auto net = cfg.fresh_discriminator(0);
  auto opt = cfg.fresh_optimizer();
  cfg.coopt.pretrain.epochs = 20;
  cfg.coopt.pretrain.sample_count = 30;
  pretrain(net, opt, cfg, 4);
  const auto c = default_hand_tuned(TrajectoryKind::line);
  auto raw = fresh_raw_windows(cfg, c, TrajectoryKind::line, 20, 9, true);
  auto clean = raw;
  for (auto& w : clean) center_window(w);
  const std::vector<double> vars{0.0, 1e6};
  const auto acc = noisy_accuracies(net, raw, vars, 9);
  EXPECT_EQ(acc[0], nn::accuracy(net, clean));
  EXPECT_LE(acc[1], 0.25);
}

TEST(Generalization, MatrixShape) {
  WorkbenchConfig cfg = small_config();
  const std::vector<nn::Discriminator> nets{cfg.fresh_discriminator(1), cfg.fresh_discriminator(2)};
  const std::vector<TrajectoryKind> kinds(std::begin(kAllTrajectoryKinds), std::end(kAllTrajectoryKinds));
  const auto m = eval_generalization(nets, cfg, kinds, cfg.coopt.pretrain.hand_tuned, 4, 1, true);
  ASSERT_EQ(m.size(), 2u);
  for (const auto& row : m) {
    ASSERT_EQ(row.size(), 3u);
    for (double a : row) {
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
    }
  }
}

TEST(Cooptimization, ArchiveIsCompleteAndConsistent) {
  const auto cfg = small_config();
  const auto dir = fresh_dir("complete");
  RunOptions o;
  o.archive = dir;
  o.fresh_discriminator = true;
  const auto run = run_cooptimization(cfg, o);
  ASSERT_EQ(run.generations.size(), 4u);
  EXPECT_EQ(completed_generations(dir).size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "run.json"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  std::set<std::size_t> ids;
  for (std::size_t g = 0; g <= 3; ++g) {
    const auto off = read_log_csv(generation_dir(dir, g) / "offspring.csv");
    const auto pop = read_log_csv(generation_dir(dir, g) / "population.csv");
    EXPECT_EQ(off.size(), 4u);
    EXPECT_EQ(pop.size(), 4u);
    for (const auto& r : off) {
      EXPECT_TRUE(ids.insert(r.experiment_id).second) << "duplicate experiment " << r.experiment_id;
      EXPECT_EQ(r.upsilon, upsilon_loss(r.f_loss, r.p_loss, cfg.ga.kappa, cfg.ga.beta));
      EXPECT_GT(r.p_loss, 0.0);
      EXPECT_LE(r.p_loss, 1.0 / cfg.nn.gamma);
      EXPECT_TRUE(fs::exists(generation_dir(dir, g) / "traces" / ("exp_" + std::to_string(r.experiment_id) + ".csv")));
    }
    EXPECT_EQ(read_metrics_csv(generation_dir(dir, g) / "metrics.csv").size(), 4u);
    EXPECT_TRUE(fs::exists(generation_dir(dir, g) / "discriminator.ckpt"));
  }
  EXPECT_EQ(ids.size(), 16u);
  for (std::size_t g = 1; g < run.generations.size(); ++g)
    EXPECT_LE(run.generations[g].population.front().upsilon, run.generations[g - 1].population.front().upsilon);
}

TEST(Cooptimization, ClosedGateNeverTrains) {
  auto cfg = small_config();
  cfg.ga.kappa = -std::numeric_limits<double>::infinity();
  const auto dir = fresh_dir("closed");
  RunOptions o;
  o.archive = dir;
  o.fresh_discriminator = true;
  const auto initial = cfg.fresh_discriminator(derive_seed(cfg.coopt.master_seed, {stream::kInit}));
  const auto run = run_cooptimization(cfg, o);
  for (const auto& g : run.generations) {
    EXPECT_FALSE(g.trained);
    EXPECT_EQ(g.buffer_entries, 0u);
    for (const auto& ind : g.offspring) EXPECT_EQ(ind.upsilon, ind.f_loss);
  }
  EXPECT_EQ(run.net.params, initial.params);
}

TEST(Cooptimization, FixedSeedIsBitIdentical) {
  const auto cfg = small_config();
  RunOptions o;
  o.fresh_discriminator = true;
  o.archive = fresh_dir("det_a");
  run_cooptimization(cfg, o);
  o.archive = fresh_dir("det_b");
  run_cooptimization(cfg, o);
  EXPECT_EQ(snapshot(fs::temp_directory_path() / "pflock_test_det_a"), snapshot(o.archive));
}

TEST(Cooptimization, ResumeMatchesUninterruptedRun) {
  auto cfg = small_config();
  cfg.ga.generations = 4;
  RunOptions o;
  o.fresh_discriminator = true;
  o.archive = fresh_dir("full");
  run_cooptimization(cfg, o);
  const auto full = snapshot(o.archive);

  // Simulate an interrupt during generation 3: its summary never got written.
  o.archive = fresh_dir("resumed");
  run_cooptimization(cfg, o);
  fs::remove(generation_dir(o.archive, 3) / "summary.json");
  fs::remove_all(generation_dir(o.archive, 4));
  o.resume = true;
  const auto resumed = run_cooptimization(cfg, o);
  ASSERT_EQ(resumed.generations.size(), 2u);
  EXPECT_EQ(resumed.generations.front().generation, 3u);
  EXPECT_EQ(snapshot(o.archive), full);
}

TEST(Cooptimization, RefusesToOverwriteOrMismatchedResume) {
  const auto cfg = small_config();
  RunOptions o;
  o.fresh_discriminator = true;
  o.archive = fresh_dir("guard");
  run_cooptimization(cfg, o);
  EXPECT_THROW(run_cooptimization(cfg, o), ConfigError);
  auto other = cfg;
  other.nn.gamma = 0.5;
  o.resume = true;
  EXPECT_THROW(run_cooptimization(other, o), ConfigError);
}

TEST(Cooptimization, NeedsCheckpointOrFreshFlag) {
  RunOptions o;
  o.archive = fresh_dir("nockpt");
  EXPECT_THROW(run_cooptimization(small_config(), o), ConfigError);
}
