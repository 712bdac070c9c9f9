#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "pflock/ga.hpp"
#include "support/sphere.hpp"

using namespace pflock;

namespace {

Population ranked(std::initializer_list<double> upsilons) {
  Population p;
  std::size_t id = 0;
  for (double u : upsilons) {
    Individual ind;
    ind.upsilon = u;
    ind.chromosome.genes.fill(static_cast<double>(id));
    ind.experiment_id = id++;
    p.push_back(ind);
  }
  return p;
}

Chromosome filled(double v) {
  Chromosome c;
  c.genes.fill(v);
  return c;
}

}  // namespace

TEST(Upsilon, Examples) {
  EXPECT_EQ(upsilon_loss(5.0, 123.0, 2.0, 0.5), 5.0);
  EXPECT_EQ(upsilon_loss(1.0, 0.5, 2.0, 0.5), 0.75);
  EXPECT_EQ(upsilon_loss(1.0, 0.5, 2.0, 1.0), 1.0);
  EXPECT_EQ(upsilon_loss(2.0, 0.5, 2.0, 0.5), 2.0);
  EXPECT_EQ(upsilon_loss(std::numeric_limits<double>::infinity(), 0.5, 2.0, 0.5), std::numeric_limits<double>::infinity());
}

TEST(Upsilon, GateBranchIgnoresPrivacy) {
  for (double p : {0.0, 0.3, 50.0}) EXPECT_EQ(upsilon_loss(4.0, p, 3.0, 0.2), 4.0);
}

TEST(Upsilon, BlendContinuousInPrivacy) {
  const double a = upsilon_loss(1.0, 0.5, 3.0, 0.25), b = upsilon_loss(1.0, 0.5 + 1e-9, 3.0, 0.25);
  EXPECT_NEAR(b - a, 0.75e-9, 1e-15);
}

TEST(Selection, BestInTournamentWins) {
  const auto pop = ranked({0.1, 0.9});
  Rng rng(1);
  for (int t = 0; t < 100; ++t) EXPECT_EQ(select_parent(pop, rng).genes[0], 0.0);
}

TEST(Selection, TiesPickBothSampled) {
  const auto pop = ranked({1.0, 1.0});
  Rng rng(2);
  int first = 0;
  for (int t = 0; t < 4000; ++t) first += select_parent(pop, rng).genes[0] == 0.0 ? 1 : 0;
  EXPECT_NEAR(first / 4000.0, 0.5, 0.04);
}

TEST(Selection, FrequencyMatchesTournamentOracle) {
  const auto pop = ranked({0.1, 0.2, 0.3, 0.4});
  Rng rng(3);
  std::array<int, 4> hits{};
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) ++hits[static_cast<std::size_t>(select_parent(pop, rng).genes[0])];
  // Rank r wins when drawn with a worse partner: 2 (n - 1 - r) / (n (n - 1)).
  for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(hits[r] / double(trials), 2.0 * (3 - r) / 12.0, 0.02) << r;
  EXPECT_GT(hits[0], hits[1]);
  EXPECT_GT(hits[1], hits[2]);
  EXPECT_GT(hits[2], hits[3]);
}

TEST(Crossover, ZeroProbabilityCopies) {
  Rng rng(4);
  const auto [c1, c2] = crossover(filled(1), filled(2), 0.0, rng);
  EXPECT_EQ(c1.genes, filled(1).genes);
  EXPECT_EQ(c2.genes, filled(2).genes);
}

TEST(Crossover, CutAtSixSwapsLeaderGenes) {
  const auto [c1, c2] = crossover_at(filled(1), filled(2), 6);
  for (std::size_t k = 0; k < kGeneCount; ++k) {
    EXPECT_EQ(c1.genes[k], k < 6 ? 1.0 : 2.0);
    EXPECT_EQ(c2.genes[k], k < 6 ? 2.0 : 1.0);
  }
  EXPECT_EQ(c1.follower().alpha_sep, 1.0);
  EXPECT_EQ(c1.leader().omega, 2.0);
}

TEST(Crossover, IdenticalParents) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto [c1, c2] = crossover(filled(3), filled(3), 1.0, rng);
    EXPECT_EQ(c1.genes, filled(3).genes);
    EXPECT_EQ(c2.genes, filled(3).genes);
  }
}

TEST(Crossover, CutPointsCoverOneToFourteen) {
  Rng rng(6);
  std::set<std::size_t> cuts;
  for (int t = 0; t < 2000; ++t) {
    const auto [c1, c2] = crossover(filled(0), filled(1), 1.0, rng);
    std::size_t cut = 0;
    while (cut < kGeneCount && c1.genes[cut] == 0.0) ++cut;
    cuts.insert(cut);
  }
  EXPECT_EQ(cuts.size(), 14u);
  EXPECT_EQ(*cuts.begin(), 1u);
  EXPECT_EQ(*cuts.rbegin(), 14u);
}

TEST(Mutation, ZeroProbabilityUnchanged) {
  Rng rng(7);
  const auto c = filled(0.5);
  EXPECT_EQ(mutate(c, 0.0, GeneBounds::defaults(), rng).genes, c.genes);
}

TEST(Mutation, FullProbabilityResamplesUniformly) {
  Rng rng(8);
  const auto b = GeneBounds::defaults();
  std::array<double, kGeneCount> mean{};
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    const auto c = mutate(Chromosome{b.lower}, 1.0, b, rng);
    EXPECT_TRUE(b.contains(c));
    for (std::size_t k = 0; k < kGeneCount; ++k) mean[k] += c.genes[k] / trials;
  }
  for (std::size_t k = 0; k < kGeneCount; ++k) {
    const double width = b.upper[k] - b.lower[k];
    EXPECT_NEAR(mean[k], 0.5 * (b.lower[k] + b.upper[k]), 0.02 * width) << kGeneNames[k];
  }
}

TEST(Mutation, GeneAtBoundStaysInside) {
  Rng rng(9);
  const auto b = GeneBounds::defaults();
  for (int t = 0; t < 500; ++t) {
    EXPECT_TRUE(b.contains(mutate(Chromosome{b.upper}, 0.5, b, rng)));
    EXPECT_TRUE(b.contains(mutate(Chromosome{b.lower}, 0.5, b, rng)));
  }
}

TEST(Evolve, PopulationInvariants) {
  GaConfig cfg;
  cfg.kappa = -std::numeric_limits<double>::infinity();
  Rng rng(10);
  auto eval = oracle::sphere_evaluator();
  auto pop = initial_population(eval, cfg, rng);
  ASSERT_EQ(pop.size(), cfg.population_size);
  for (std::size_t j = 0; j < pop.size(); ++j) EXPECT_EQ(pop[j].generation, 0u);
  for (std::size_t g = 1; g <= 20; ++g) {
    const double best = pop.front().upsilon;
    auto r = evolve_generation(pop, eval, cfg, rng, g, g * cfg.population_size);
    EXPECT_EQ(r.population.size(), cfg.population_size);
    ASSERT_EQ(r.offspring.size(), cfg.population_size);
    for (std::size_t j = 0; j < r.offspring.size(); ++j) {
      EXPECT_EQ(r.offspring[j].experiment_id, g * cfg.population_size + j);
      EXPECT_EQ(r.offspring[j].generation, g);
      EXPECT_TRUE(cfg.bounds.contains(r.offspring[j].chromosome));
    }
    EXPECT_TRUE(std::is_sorted(r.population.begin(), r.population.end(),
                               [](const Individual& a, const Individual& b) { return a.upsilon < b.upsilon; }));
    EXPECT_LE(r.population.front().upsilon, best);
    // Elites survive.
    for (std::size_t e = 0; e < cfg.elitism_count; ++e)
      EXPECT_NE(std::find_if(r.population.begin(), r.population.end(),
                             [&](const Individual& x) { return x.experiment_id == pop[e].experiment_id; }),
                r.population.end());
    pop = r.population;
  }
}

TEST(Evolve, FullElitismFreezesPopulation) {
  GaConfig cfg;
  cfg.population_size = 6;
  cfg.elitism_count = 6;
  cfg.kappa = -std::numeric_limits<double>::infinity();
  Rng rng(11);
  auto eval = oracle::sphere_evaluator();
  const auto pop0 = initial_population(eval, cfg, rng);
  auto pop = pop0;
  for (std::size_t g = 1; g <= 5; ++g) pop = evolve_generation(pop, eval, cfg, rng, g, g * 6).population;
  ASSERT_EQ(pop.size(), pop0.size());
  for (std::size_t j = 0; j < pop.size(); ++j) EXPECT_EQ(pop[j].experiment_id, pop0[j].experiment_id);
}

TEST(Evolve, FailuresBecomeInfiniteAndAreKept) {
  GaConfig cfg;
  cfg.population_size = 4;
  cfg.elitism_count = 1;
  Rng rng(12);
  auto eval = sequential_evaluator([](const Chromosome& c, std::size_t id) -> Evaluation {
    if (id % 2 == 1) throw std::runtime_error("boom");
    return {oracle::sphere(c), 0.1, {}};
  });
  auto pop = initial_population(eval, cfg, rng);
  const auto r = evolve_generation(pop, eval, cfg, rng, 1, 4);
  ASSERT_EQ(r.offspring.size(), 4u);
  for (const auto& o : r.offspring) {
    if (o.experiment_id % 2 == 1) {
      EXPECT_EQ(o.error, "boom");
      EXPECT_TRUE(std::isinf(o.upsilon));
    } else {
      EXPECT_TRUE(o.error.empty());
    }
  }
}

TEST(Evolve, Deterministic) {
  const auto a = oracle::run_sphere(42, 15), b = oracle::run_sphere(42, 15);
  EXPECT_EQ(a.best_per_generation, b.best_per_generation);
}

TEST(Evolve, SphereImprovesMonotonically) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = oracle::run_sphere(seed);
    EXPECT_TRUE(r.monotone) << seed;
    EXPECT_LT(r.final_best, r.initial_best) << seed;
  }
}

TEST(Config, Validation) {
  GaConfig cfg;
  EXPECT_FALSE(cfg.validate());
  cfg.crossover_prob = 1.5;
  EXPECT_EQ(cfg.validate(), "crossover_prob");
  cfg = {};
  cfg.elitism_count = 11;
  EXPECT_EQ(cfg.validate(), "elitism_count");
  cfg = {};
  cfg.bounds.lower[3] = cfg.bounds.upper[3];
  EXPECT_EQ(cfg.validate(), "bounds");
  cfg = {};
  cfg.beta = -0.1;
  EXPECT_EQ(cfg.validate(), "beta");
}

TEST(Bounds, Defaults) {
  const auto b = GeneBounds::defaults();
  EXPECT_EQ(b.lower[0], 0.0);
  EXPECT_EQ(b.upper[0], 3.0);
  EXPECT_EQ(b.lower[3], 0.5);
  EXPECT_EQ(b.upper[5], 10.0);
  EXPECT_EQ(b.upper[12], 2.0);
  EXPECT_EQ(b.lower[13], -1.0);
  EXPECT_EQ(b.upper[14], 1.0);
}
