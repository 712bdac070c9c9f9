#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "pflock/coopt.hpp"
#include "pflock/simulation.hpp"

using namespace pflock;

namespace {

Chromosome zero_gain() {
  Chromosome c;
  for (std::size_t k : {3, 4, 5, 9, 10, 11}) c.genes[k] = 1.0;
  return c;
}

const ReferenceTrajectory kLine = ReferenceTrajectory::defaults(TrajectoryKind::line);

}  // namespace

TEST(Placement, LeaderAtCenterForZeroOffset) {
  SimConfig cfg;
  const auto p = initial_placement(cfg, kLine, 0.0, 0.0);
  EXPECT_EQ(p.states[p.leader_index].position, (Vec3{0, 0, 0}));
  for (const auto& s : p.states) EXPECT_EQ(s.velocity, Vec3{});
}

TEST(Placement, NineRobotsFillGridAroundCenter) {
  SimConfig cfg;
  const auto p = initial_placement(cfg, kLine, 0.0, 0.0);
  ASSERT_EQ(p.states.size(), 9u);
  std::set<std::pair<double, double>> followers;
  for (std::size_t i = 0; i < 9; ++i)
    if (i != p.leader_index) followers.insert({p.states[i].position.x, p.states[i].position.y});
  std::set<std::pair<double, double>> expected;
  for (double x : {-3.0, 0.0, 3.0})
    for (double y : {-3.0, 0.0, 3.0})
      if (x != 0.0 || y != 0.0) expected.insert({x, y});
  EXPECT_EQ(followers, expected);
}

TEST(Placement, OffsetMapsToHalfExtent) {
  SimConfig cfg;
  auto p = initial_placement(cfg, kLine, 1.0, 0.5);
  EXPECT_DOUBLE_EQ(p.states[p.leader_index].position.x, 3.0);
  EXPECT_DOUBLE_EQ(p.states[p.leader_index].position.y, 1.5);

  // (1, 0) lands on the +x edge follower and is nudged outward by spacing / 10.
  p = initial_placement(cfg, kLine, 1.0, 0.0);
  EXPECT_DOUBLE_EQ(p.states[p.leader_index].position.x, 3.3);
  EXPECT_DOUBLE_EQ(p.states[p.leader_index].position.y, 0.0);
}

TEST(Placement, LeaderIdDependsOnSeed) {
  SimConfig cfg;
  std::set<std::size_t> ids;
  for (std::uint64_t s = 0; s < 40; ++s) {
    cfg.seed = s;
    ids.insert(initial_placement(cfg, kLine, 0.2, -0.3).leader_index);
  }
  EXPECT_GT(ids.size(), 5u);
}

TEST(Simulate, ZeroControlKeepsPlacement) {
  SimConfig cfg;
  cfg.duration = 10;
  const auto trace = simulate(zero_gain(), kLine, cfg);
  const auto first = trace.snapshot(0);
  for (std::size_t k = 1; k < trace.steps(); ++k) {
    const auto snap = trace.snapshot(k);
    for (std::size_t i = 0; i < trace.n_robots; ++i) EXPECT_EQ(snap[i], first[i]);
  }
}

TEST(Simulate, StepCountAndSpacing) {
  SimConfig cfg;
  cfg.duration = 180;
  cfg.control_rate = 2;
  const auto trace = simulate(default_hand_tuned(TrajectoryKind::line), kLine, cfg);
  EXPECT_EQ(trace.steps(), 360u);
  EXPECT_EQ(trace.leader_arc.size(), 360u);
  EXPECT_DOUBLE_EQ(trace.dt, 0.5);
  EXPECT_DOUBLE_EQ(trace.time(359), 179.5);
}

TEST(Simulate, DeterministicForFixedSeed) {
  SimConfig cfg;
  cfg.duration = 30;
  cfg.seed = 99;
  const auto c = default_hand_tuned(TrajectoryKind::sine);
  const auto& traj = ReferenceTrajectory::defaults(TrajectoryKind::sine);
  const auto a = simulate(c, traj, cfg);
  const auto b = simulate(c, traj, cfg);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.leader_index, b.leader_index);
  EXPECT_EQ(a.leader_arc, b.leader_arc);
}

TEST(Simulate, ControlsRespectSpeedLimit) {
  SimConfig cfg;
  cfg.duration = 40;
  cfg.v_max = 1.7;
  Chromosome c = default_hand_tuned(TrajectoryKind::chevron);
  c.genes[0] = 3.0;
  c.genes[12] = 2.0;
  const auto trace = simulate(c, ReferenceTrajectory::defaults(TrajectoryKind::chevron), cfg);
  for (const auto& s : trace.states) EXPECT_LE(norm(s.velocity), 1.7 + 1e-12);
}

TEST(Simulate, TranslationEquivariance) {
  SimConfig cfg;
  cfg.duration = 20;
  const Chromosome c = default_hand_tuned(TrajectoryKind::sine);
  auto traj = ReferenceTrajectory::defaults(TrajectoryKind::sine);
  const auto a = simulate(c, traj, cfg);
  const Vec3 shift{12.5, -7.25, 3.0};
  traj.origin += shift;
  const auto b = simulate(c, traj, cfg);
  ASSERT_EQ(a.states.size(), b.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    EXPECT_NEAR(b.states[k].position.x, a.states[k].position.x + shift.x, 1e-9);
    EXPECT_NEAR(b.states[k].position.y, a.states[k].position.y + shift.y, 1e-9);
    EXPECT_NEAR(b.states[k].position.z, a.states[k].position.z + shift.z, 1e-9);
  }
}

TEST(Simulate, NonFiniteStateAborts) {
  Chromosome c = default_hand_tuned(TrajectoryKind::line);
  c.genes[0] = std::numeric_limits<double>::quiet_NaN();
  SimConfig cfg;
  cfg.duration = 5;
  try {
    simulate(c, kLine, cfg);
    FAIL() << "expected SimulationError";
  } catch (const SimulationError& e) {
    EXPECT_EQ(e.step(), 1u);
    EXPECT_NE(std::string(e.what()).find("robot"), std::string::npos);
  }
}

TEST(Windows, FullScaleShapedCount) {
  SimConfig cfg;
  cfg.duration = 180;
  const auto trace = simulate(default_hand_tuned(TrajectoryKind::line), kLine, cfg);
  const auto w = extract_windows(trace, 5.0, 2.0);
  ASSERT_EQ(w.size(), 36u);
  for (const auto& win : w) {
    EXPECT_EQ(win.channels, 10u);
    EXPECT_EQ(win.robots, 9u);
    EXPECT_EQ(win.label, trace.leader_index);
  }
}

TEST(Windows, StationaryFlockHasIdenticalChannels) {
  SimConfig cfg;
  cfg.duration = 20;
  const auto w = extract_windows(simulate(zero_gain(), kLine, cfg), 5.0, 2.0);
  ASSERT_FALSE(w.empty());
  for (const auto& win : w)
    for (std::size_t c = 1; c < win.channels; ++c)
      for (std::size_t i = 0; i < win.robots; ++i) EXPECT_EQ(win.position(c, i), win.position(0, i));
}

TEST(Windows, ShortTraceYieldsNothing) {
  SimConfig cfg;
  cfg.duration = 4;
  EXPECT_TRUE(extract_windows(simulate(zero_gain(), kLine, cfg), 5.0, 2.0).empty());
}

TEST(Windows, CountAndStrideProperty) {
  for (double rate : {2.0, 4.0, 6.0}) {
    for (double dur : {7.0, 23.0, 31.5}) {
      SimConfig cfg;
      cfg.control_rate = rate;
      cfg.duration = dur;
      const auto trace = simulate(default_hand_tuned(TrajectoryKind::line), kLine, cfg);
      const auto raw = extract_raw_windows(trace, 5.0, 2.0);
      const auto per = static_cast<std::size_t>(std::llround(rate * 5.0));
      EXPECT_EQ(raw.size(), trace.steps() / per);
      const auto stride = static_cast<std::size_t>(rate / 2.0);
      for (std::size_t w = 0; w < raw.size(); ++w)
        for (std::size_t c = 0; c < raw[w].channels; ++c)
          EXPECT_EQ(raw[w].position(c, 3), trace.snapshot(w * per + c * stride)[3].position);
    }
  }
}

TEST(Windows, CenteredOnFirstChannelCentroid) {
  SimConfig cfg;
  cfg.duration = 30;
  for (const auto& w : extract_windows(simulate(default_hand_tuned(TrajectoryKind::sine),
                                                ReferenceTrajectory::defaults(TrajectoryKind::sine), cfg),
                                       5.0, 2.0)) {
    Vec3 c{};
    for (std::size_t i = 0; i < w.robots; ++i) c += w.position(0, i);
    EXPECT_NEAR(norm(c), 0.0, 1e-9);
  }
}

TEST(Windows, RejectsBadRates) {
  SimConfig cfg;
  cfg.duration = 10;
  const auto trace = simulate(zero_gain(), kLine, cfg);
  EXPECT_THROW(extract_windows(trace, 5.0, 4.0), std::invalid_argument);
  EXPECT_THROW(extract_windows(trace, 0.2, 2.0), std::invalid_argument);
}

TEST(TraceCsv, HeaderAndRows) {
  SimConfig cfg;
  cfg.duration = 2;
  const auto trace = simulate(zero_gain(), kLine, cfg);
  std::ostringstream os;
  write_trace_csv(os, trace);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,robot_id,is_leader,px,py,pz,vx,vy,vz");
  std::size_t rows = 0, leaders = 0;
  while (std::getline(is, line)) {
    ++rows;
    if (line.rfind("0.500000,", 0) == 0 || line.rfind("0.000000,", 0) == 0 || line.rfind("1.", 0) == 0) {
      const auto first = line.find(',');
      const auto second = line.find(',', first + 1);
      if (line.substr(second + 1, 1) == "1") ++leaders;
    }
  }
  EXPECT_EQ(rows, trace.steps() * 9);
  EXPECT_EQ(leaders, trace.steps());
}
