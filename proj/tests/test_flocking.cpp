#include <gtest/gtest.h>

#include <random>

#include "pflock/flocking.hpp"

using namespace pflock;

namespace {

std::vector<RobotState> at(std::initializer_list<Vec3> positions) {
  std::vector<RobotState> s;
  for (const auto& p : positions) s.push_back({p, {}});
  return s;
}

// Brute-force neighborhood straight from the pairwise distance definition.
std::vector<std::size_t> brute_neighbors(const std::vector<RobotState>& s, std::size_t i, double r) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double dx = s[i].position.x - s[j].position.x, dy = s[i].position.y - s[j].position.y,
                 dz = s[i].position.z - s[j].position.z;
    if (j != i && std::sqrt(dx * dx + dy * dy + dz * dz) <= r) out.push_back(j);
  }
  return out;
}

}  // namespace

TEST(Neighborhood, SingleRobotIsAlone) {
  const auto s = at({{0, 0, 0}});
  EXPECT_TRUE(neighborhood(s, 0, 100.0).empty());
}

TEST(Neighborhood, MatchesBruteForce) {
  const auto line = at({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
  EXPECT_EQ(neighborhood(line, 0, 2.0), brute_neighbors(line, 0, 2.0));
  EXPECT_EQ(neighborhood(line, 0, 2.0), (std::vector<std::size_t>{1}));

  const auto cluster = at({{0, 0, 0}, {0.5, 0.2, 0}, {0.1, 0.9, 0.3}});
  EXPECT_EQ(neighborhood(cluster, 1, 10.0), (std::vector<std::size_t>{0, 2}));
}

TEST(Neighborhood, SymmetricProperty) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RobotState> s(8);
    for (auto& r : s) r.position = {u(rng), u(rng), u(rng)};
    const double radius = 1.0 + std::abs(u(rng));
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(neighborhood(s, i, radius), brute_neighbors(s, i, radius));
      for (std::size_t j : neighborhood(s, i, radius)) {
        const auto back = neighborhood(s, j, radius);
        EXPECT_NE(std::find(back.begin(), back.end(), i), back.end());
      }
    }
  }
}

TEST(Separation, InverseDistanceMagnitude) {
  // Robot i sits 0.5 m along +x from its only neighbor.
  const auto s = at({{0.5, 0, 0}, {0, 0, 0}});
  const Vec3 v = separation_velocity(s, 0, 1.0);
  EXPECT_DOUBLE_EQ(v.x, 2.0);
  EXPECT_DOUBLE_EQ(v.y, 0.0);
  EXPECT_DOUBLE_EQ(v.z, 0.0);
}

TEST(Separation, OutOfRangeAndSymmetricCases) {
  EXPECT_EQ(separation_velocity(at({{0, 0, 0}, {3, 0, 0}}), 0, 1.0), Vec3{});
  const Vec3 v = separation_velocity(at({{0, 0, 0}, {0.5, 0, 0}, {-0.5, 0, 0}}), 0, 1.0);
  EXPECT_DOUBLE_EQ(v.x, 0.0);
  EXPECT_EQ(separation_velocity(at({{1, 1, 1}, {1, 1, 1}}), 0, 1.0), Vec3{});
}

TEST(Separation, RepelsFromSingleNeighbor) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 pi{u(rng), u(rng), u(rng)};
    const Vec3 pj = pi + Vec3{u(rng), u(rng), u(rng)} * 0.5;
    const auto s = at({pi, pj});
    EXPECT_GT(dot(separation_velocity(s, 0, 2.0), pi - pj), 0.0);
  }
}

TEST(Alignment, MeanAndFallback) {
  auto s = at({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
  s[1].velocity = {1, 0, 0};
  s[2].velocity = {0, 1, 0};
  const Vec3 v = alignment_velocity(s, 0, 5.0);
  EXPECT_DOUBLE_EQ(v.x, 0.5);
  EXPECT_DOUBLE_EQ(v.y, 0.5);
  EXPECT_DOUBLE_EQ(v.z, 0.0);

  auto pair = at({{0, 0, 0}, {1, 0, 0}});
  pair[1].velocity = {0.2, -0.7, 1.1};
  EXPECT_EQ(alignment_velocity(pair, 0, 5.0), pair[1].velocity);

  auto alone = at({{0, 0, 0}, {50, 0, 0}});
  alone[0].velocity = {0.3, 0, 0};
  EXPECT_EQ(alignment_velocity(alone, 0, 5.0), (Vec3{0.3, 0, 0}));
}

TEST(Cohesion, Cases) {
  EXPECT_EQ(cohesion_velocity(at({{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}}), 0, 5.0), Vec3{});
  EXPECT_EQ(cohesion_velocity(at({{0, 0, 0}, {2, 0, 0}}), 0, 5.0), (Vec3{2, 0, 0}));
  EXPECT_EQ(cohesion_velocity(at({{0, 0, 0}, {20, 0, 0}}), 0, 5.0), Vec3{});
}

TEST(FollowerControl, GainsAndClipping) {
  auto s = at({{0, 0, 0}, {1, 0, 0}});
  s[1].velocity = {1, 2, 0};
  EXPECT_EQ(follower_control(s, 0, FollowerParams{0, 0, 0, 1, 1, 1}, 10.0), Vec3{});
  EXPECT_EQ(follower_control(s, 0, FollowerParams{0, 1, 0, 1, 2, 1}, 10.0), (Vec3{1, 2, 0}));

  // Alignment term of norm 3 * v_max is rescaled to v_max.
  s[1].velocity = {3.0, 0, 0};
  const Vec3 u = follower_control(s, 0, FollowerParams{0, 1, 0, 1, 2, 1}, 1.0);
  EXPECT_NEAR(norm(u), 1.0, 1e-15);
  EXPECT_NEAR(u.x, 1.0, 1e-15);
}

TEST(LeaderControl, TrackingTerm) {
  const auto s = at({{0, 0, 0}, {20, 20, 0}});
  const LeaderParams lp{{0, 0, 0, 1, 1, 1}, 0.5, 0, 0};
  const Vec3 u = leader_control(s, 0, lp, {3, 0, 0}, 10.0);
  EXPECT_DOUBLE_EQ(u.x, 0.5);
  EXPECT_DOUBLE_EQ(u.y, 0.0);

  EXPECT_EQ(leader_control(s, 0, lp, {0, 0, 0}, 10.0), Vec3{});
}

TEST(LeaderControl, ZeroOmegaMatchesFollower) {
  auto s = at({{0, 0, 0}, {1, 0.5, 0}, {-0.7, 0.2, 0.1}});
  s[1].velocity = {0.3, 0.1, 0};
  s[2].velocity = {-0.2, 0.4, 0};
  const FollowerParams fp{1.2, 0.8, 0.5, 1.5, 3, 4};
  const LeaderParams lp{fp, 0.0, 0.3, -0.4};
  EXPECT_EQ(leader_control(s, 0, lp, {9, 9, 9}, 2.5), follower_control(s, 0, fp, 2.5));
}

TEST(Chromosome, GeneLayout) {
  Chromosome c;
  for (std::size_t k = 0; k < kGeneCount; ++k) c.genes[k] = static_cast<double>(k);
  EXPECT_EQ(c.follower().r_coh, 5.0);
  EXPECT_EQ(c.leader().flocking.alpha_sep, 6.0);
  EXPECT_EQ(c.leader().omega, 12.0);
  EXPECT_EQ(c.leader().init_y, 14.0);
  EXPECT_EQ(Chromosome::from_params(c.follower(), c.leader()), c);
}
