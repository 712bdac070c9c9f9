#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pflock/flocking.hpp"
#include "pflock/rng.hpp"

namespace pflock {

struct GeneBounds {
  std::array<double, kGeneCount> lower{};
  std::array<double, kGeneCount> upper{};

  // Gains in [0, 3], radii in [0.5, 10] m, omega in [0, 2], leader offsets in [-1, 1].
  static GeneBounds defaults() {
    GeneBounds b;
    for (std::size_t base : {std::size_t{0}, std::size_t{6}}) {
      for (std::size_t k = 0; k < 3; ++k) {
        b.lower[base + k] = 0.0;
        b.upper[base + k] = 3.0;
        b.lower[base + 3 + k] = 0.5;
        b.upper[base + 3 + k] = 10.0;
      }
    }
    b.lower[12] = 0.0;
    b.upper[12] = 2.0;
    b.lower[13] = b.lower[14] = -1.0;
    b.upper[13] = b.upper[14] = 1.0;
    return b;
  }

  static GeneBounds uniform(double lo, double hi) {
    GeneBounds b;
    b.lower.fill(lo);
    b.upper.fill(hi);
    return b;
  }

  bool contains(const Chromosome& c) const {
    for (std::size_t k = 0; k < kGeneCount; ++k)
      if (!(c.genes[k] >= lower[k] && c.genes[k] <= upper[k])) return false;
    return true;
  }
};

struct GaConfig {
  std::size_t population_size{10};
  std::size_t generations{50};
  double crossover_prob{0.9};
  double mutation_prob{0.02};
  std::size_t elitism_count{3};
  GeneBounds bounds{GeneBounds::defaults()};
  double kappa{3.0};
  double beta{0.5};
  std::size_t repeats_per_eval{1};

  // Empty when valid, otherwise the name of the offending field.
  std::optional<std::string> validate() const {
    if (population_size < 2) return "population_size";
    if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0)) return "crossover_prob";
    if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) return "mutation_prob";
    if (elitism_count > population_size) return "elitism_count";
    for (std::size_t k = 0; k < kGeneCount; ++k)
      if (!(bounds.lower[k] < bounds.upper[k])) return "bounds";
    if (!(beta >= 0.0 && beta <= 1.0)) return "beta";
    if (std::isnan(kappa)) return "kappa";
    if (repeats_per_eval < 1) return "repeats_per_eval";
    return std::nullopt;
  }
};

// Flocking loss when flocking is poor (f >= kappa), otherwise the beta blend with the privacy loss.
inline double upsilon_loss(double f_loss, double p_loss, double kappa, double beta) {
  if (std::isnan(f_loss)) return std::numeric_limits<double>::infinity();
  if (f_loss >= kappa) return f_loss;
  return beta * f_loss + (1.0 - beta) * p_loss;
}

struct Evaluation {
  double f_loss{std::numeric_limits<double>::infinity()};
  double p_loss{0.0};
  std::string error;  // non-empty when the evaluation failed
};

struct Individual {
  Chromosome chromosome;
  double f_loss{0.0};
  double p_loss{0.0};
  double upsilon{0.0};
  std::size_t generation{0};
  std::size_t experiment_id{0};
  std::string error;
};

// Sorted ascending by upsilon.
using Population = std::vector<Individual>;

inline void sort_population(Population& pop) {
  std::stable_sort(pop.begin(), pop.end(), [](const Individual& a, const Individual& b) { return a.upsilon < b.upsilon; });
}

// Binary tournament: two distinct uniform picks, the lower upsilon wins (first pick on ties).
inline const Chromosome& select_parent(const Population& pop, Rng& rng) {
  const std::size_t i = uniform_index(rng, pop.size());
  std::size_t j = uniform_index(rng, pop.size() - 1);
  if (j >= i) ++j;
  return pop[j].upsilon < pop[i].upsilon ? pop[j].chromosome : pop[i].chromosome;
}

// Single-point crossover: with probability crossover_prob swap the tails after a cut in [1, 14].
inline std::pair<Chromosome, Chromosome> crossover_at(const Chromosome& a, const Chromosome& b, std::size_t cut) {
  std::pair<Chromosome, Chromosome> out{a, b};
  for (std::size_t k = cut; k < kGeneCount; ++k) {
    out.first.genes[k] = b.genes[k];
    out.second.genes[k] = a.genes[k];
  }
  return out;
}

inline std::pair<Chromosome, Chromosome> crossover(const Chromosome& a, const Chromosome& b, double crossover_prob,
                                                   Rng& rng) {
  if (uniform(rng, 0.0, 1.0) >= crossover_prob) return {a, b};
  const std::size_t cut = 1 + uniform_index(rng, kGeneCount - 1);
  return crossover_at(a, b, cut);
}

// Each gene independently resampled uniformly within its bounds with probability mutation_prob.
inline Chromosome mutate(Chromosome c, double mutation_prob, const GeneBounds& bounds, Rng& rng) {
  for (std::size_t k = 0; k < kGeneCount; ++k) {
    if (uniform(rng, 0.0, 1.0) < mutation_prob) c.genes[k] = uniform(rng, bounds.lower[k], bounds.upper[k]);
  }
  return c;
}

inline Chromosome random_chromosome(const GeneBounds& bounds, Rng& rng) {
  Chromosome c;
  for (std::size_t k = 0; k < kGeneCount; ++k) c.genes[k] = uniform(rng, bounds.lower[k], bounds.upper[k]);
  return c;
}

inline Individual make_individual(const Chromosome& c, const Evaluation& e, const GaConfig& cfg, std::size_t generation,
                                  std::size_t experiment_id) {
  Individual ind;
  ind.chromosome = c;
  ind.generation = generation;
  ind.experiment_id = experiment_id;
  ind.error = e.error;
  if (!e.error.empty() || std::isnan(e.f_loss)) {
    ind.f_loss = std::numeric_limits<double>::infinity();
    ind.p_loss = e.p_loss;
    ind.upsilon = std::numeric_limits<double>::infinity();
  } else {
    ind.f_loss = e.f_loss;
    ind.p_loss = e.p_loss;
    ind.upsilon = upsilon_loss(e.f_loss, e.p_loss, cfg.kappa, cfg.beta);
  }
  return ind;
}

// A batch evaluator maps (chromosomes, id of the first experiment) to one Evaluation per chromosome.
template <typename BatchEvaluator>
std::vector<Individual> evaluate_all(std::span<const Chromosome> chromosomes, BatchEvaluator&& evaluate,
                                     const GaConfig& cfg, std::size_t generation, std::size_t first_experiment_id) {
  std::vector<Evaluation> evals = evaluate(chromosomes, first_experiment_id);
  std::vector<Individual> out;
  out.reserve(chromosomes.size());
  for (std::size_t j = 0; j < chromosomes.size(); ++j)
    out.push_back(make_individual(chromosomes[j], evals.at(j), cfg, generation, first_experiment_id + j));
  return out;
}

template <typename BatchEvaluator>
Population initial_population(BatchEvaluator&& evaluate, const GaConfig& cfg, Rng& rng) {
  std::vector<Chromosome> chromosomes;
  for (std::size_t j = 0; j < cfg.population_size; ++j) chromosomes.push_back(random_chromosome(cfg.bounds, rng));
  Population pop = evaluate_all(chromosomes, evaluate, cfg, 0, 0);
  sort_population(pop);
  return pop;
}

struct GenerationResult {
  Population population;
  std::vector<Individual> offspring;  // this generation's experiments, in breeding order
};

// Breeds and evaluates M offspring, then keeps the elites plus the best of the remaining parents
// and offspring.
template <typename BatchEvaluator>
GenerationResult evolve_generation(const Population& population, BatchEvaluator&& evaluate, const GaConfig& cfg,
                                   Rng& rng, std::size_t generation, std::size_t first_experiment_id) {
  const std::size_t m = cfg.population_size;
  std::vector<Chromosome> children;
  children.reserve(m + 1);
  while (children.size() < m) {
    const Chromosome& a = select_parent(population, rng);
    const Chromosome& b = select_parent(population, rng);
    auto [c1, c2] = crossover(a, b, cfg.crossover_prob, rng);
    children.push_back(mutate(c1, cfg.mutation_prob, cfg.bounds, rng));
    children.push_back(mutate(c2, cfg.mutation_prob, cfg.bounds, rng));
  }
  children.resize(m);

  GenerationResult result;
  result.offspring = evaluate_all(children, evaluate, cfg, generation, first_experiment_id);

  Population sorted_parents = population;
  sort_population(sorted_parents);
  const std::size_t elites = std::min(cfg.elitism_count, sorted_parents.size());
  result.population.assign(sorted_parents.begin(), sorted_parents.begin() + static_cast<std::ptrdiff_t>(elites));
  Population pool(sorted_parents.begin() + static_cast<std::ptrdiff_t>(elites), sorted_parents.end());
  pool.insert(pool.end(), result.offspring.begin(), result.offspring.end());
  sort_population(pool);
  for (std::size_t k = 0; result.population.size() < m && k < pool.size(); ++k) result.population.push_back(pool[k]);
  sort_population(result.population);
  return result;
}

// Wraps a per-chromosome evaluator, converting exceptions into failed evaluations.
template <typename Fn>
auto sequential_evaluator(Fn fn) {
  return [fn = std::move(fn)](std::span<const Chromosome> chromosomes, std::size_t first_id) {
    std::vector<Evaluation> out;
    out.reserve(chromosomes.size());
    for (std::size_t j = 0; j < chromosomes.size(); ++j) {
      try {
        out.push_back(fn(chromosomes[j], first_id + j));
      } catch (const std::exception& e) {
        Evaluation failed;
        failed.error = e.what();
        out.push_back(failed);
      }
    }
    return out;
  };
}

}  // namespace pflock
