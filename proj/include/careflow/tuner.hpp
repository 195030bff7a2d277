#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "careflow/clustering.hpp"
#include "careflow/ingest.hpp"
#include "careflow/metrics.hpp"
#include "careflow/random.hpp"

namespace careflow::tuner {

/// One index per gene.
using Chromosome = std::vector<std::size_t>;

/// Gene order: kernel, psi, knn_k, kmeans_n_init, eig_strategy, eig_max_iter.
struct HyperparamSpace {
  std::vector<clustering::Kernel> kernels;
  std::vector<double> psis;
  std::vector<std::size_t> knn_ks;
  std::vector<std::size_t> n_inits;
  std::vector<clustering::EigStrategy> eig_strategies;
  std::vector<std::size_t> eig_max_iters;
  std::size_t embed_dim = 1;

  /// Standard domains for `clusters` clusters over `n` patients. The psi grid
  /// is 25 geometric points over [1e-3, 1e2] plus 1.0.
  static HyperparamSpace standard(std::size_t clusters, std::size_t n);

  std::vector<std::size_t> domain_sizes() const;
  /// Throws InvalidChromosome for wrong length or out-of-range genes.
  clustering::SpectralParams decode(std::span<const std::size_t> genes) const;
  /// Nearest representable chromosome for `p`.
  Chromosome encode(const clustering::SpectralParams& p) const;
};

struct GAConfig {
  std::size_t population_size = 40;
  double crossover_rate = 0.5;
  double mutation_rate = 0.1;
  std::size_t max_iterations = 100;
  std::size_t elitism = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: hardware concurrency

  void validate() const;
};

using FitnessFn = std::function<double(const Chromosome&)>;

struct GAOutcome {
  Chromosome best;
  double best_fitness = 0.0;
  std::vector<double> history;  // best-ever after each generation, initial included
  std::vector<std::size_t> generation_sizes;
  std::size_t evaluations = 0;  // distinct chromosomes evaluated
};

/// Roulette wheel over 1 / (fitness + 1e-9); non-finite fitness gets zero
/// weight. Uniform when every weight is zero.
std::size_t roulette_select(std::span<const double> fitness, Rng& rng);

/// Minimizing GA over integer genes. `seeds` are placed in the initial
/// population before random individuals. `fitness` must be thread-safe.
GAOutcome genetic_search(std::span<const std::size_t> domain_sizes, const FitnessFn& fitness,
                         const GAConfig& config, std::span<const Chromosome> seeds = {});

inline constexpr double kHoursPenalty = 1e4;

/// AMPM of the attached clustering plus kHoursPenalty per caregiver outside
/// its working-hour bounds.
double evaluate_fitness(const clustering::SpectralParams& params,
                        const ingest::InstanceModel& instance, double gamma, std::uint64_t seed,
                        metrics::GammaWeighting w = metrics::GammaWeighting::Paper);
double evaluate_fitness(const HyperparamSpace& space, std::span<const std::size_t> chromosome,
                        const ingest::InstanceModel& instance, double gamma, std::uint64_t seed,
                        metrics::GammaWeighting w = metrics::GammaWeighting::Paper);

struct TuneResult {
  ingest::Discipline discipline = ingest::Discipline::RN;
  clustering::SpectralParams best_params;
  double best_fitness = 0.0;
  std::vector<double> history;
  std::size_t evaluations = 0;
  std::uint64_t seed = 0;  // clustering seed behind every fitness value
};

/// GA search seeded with the default chromosome, so the result is never worse
/// than the defaults.
TuneResult ga_optimize(const HyperparamSpace& space, const ingest::InstanceModel& instance,
                       double gamma, const GAConfig& config,
                       metrics::GammaWeighting w = metrics::GammaWeighting::Paper);

}  // namespace careflow::tuner
