#include "careflow/tuner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <thread>

#include "careflow/allocation.hpp"
#include "careflow/error.hpp"

namespace careflow::tuner {

using clustering::EigStrategy;
using clustering::Kernel;
using clustering::SpectralParams;

HyperparamSpace HyperparamSpace::standard(std::size_t clusters, std::size_t n) {
  if (clusters == 0) throw DomainError(ErrorCode::InvalidArgument, "clusters must be positive");
  HyperparamSpace s;
  s.kernels = {Kernel::RBF, Kernel::KNearest};
  constexpr int kGrid = 25;
  for (int i = 0; i < kGrid; ++i) {
    s.psis.push_back(std::pow(10.0, -3.0 + 5.0 * i / (kGrid - 1)));
  }
  s.psis.push_back(1.0);
  std::sort(s.psis.begin(), s.psis.end());
  const std::size_t k_cap = n > 1 ? n - 1 : 1;
  for (std::size_t m = 1; m <= 10; ++m) {
    const auto k = std::min(m * clusters, k_cap);
    if (std::find(s.knn_ks.begin(), s.knn_ks.end(), k) == s.knn_ks.end()) s.knn_ks.push_back(k);
  }
  s.n_inits = {5, 10, 20};
  s.eig_strategies = {EigStrategy::Dense, EigStrategy::Iterative};
  s.eig_max_iters = {50, 100, 200};
  s.embed_dim = clusters;
  return s;
}

std::vector<std::size_t> HyperparamSpace::domain_sizes() const {
  return {kernels.size(),        psis.size(),           knn_ks.size(),
          n_inits.size(),        eig_strategies.size(), eig_max_iters.size()};
}

SpectralParams HyperparamSpace::decode(std::span<const std::size_t> genes) const {
  const auto sizes = domain_sizes();
  if (genes.size() != sizes.size()) {
    throw DomainError(ErrorCode::InvalidChromosome,
                      "chromosome has " + std::to_string(genes.size()) + " genes, expected " +
                          std::to_string(sizes.size()));
  }
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    if (genes[g] >= sizes[g]) {
      throw DomainError(ErrorCode::InvalidChromosome,
                        "gene " + std::to_string(g) + " out of range");
    }
  }
  SpectralParams p;
  p.kernel = kernels[genes[0]];
  p.psi = psis[genes[1]];
  p.knn_k = knn_ks[genes[2]];
  p.kmeans_n_init = n_inits[genes[3]];
  p.eig_strategy = eig_strategies[genes[4]];
  p.eig_max_iter = eig_max_iters[genes[5]];
  p.embed_dim = embed_dim;
  return p;
}

namespace {

template <typename T, typename Dist>
std::size_t nearest(const std::vector<T>& domain, const T& value, Dist dist) {
  if (domain.empty()) throw DomainError(ErrorCode::InvalidArgument, "empty gene domain");
  std::size_t best = 0;
  for (std::size_t i = 1; i < domain.size(); ++i) {
    if (dist(domain[i], value) < dist(domain[best], value)) best = i;
  }
  return best;
}

double abs_diff(std::size_t a, std::size_t b) {
  return a > b ? static_cast<double>(a - b) : static_cast<double>(b - a);
}

}  // namespace

Chromosome HyperparamSpace::encode(const SpectralParams& p) const {
  auto same = [](auto a, auto b) { return a == b ? 0.0 : 1.0; };
  return {
      nearest(kernels, p.kernel, same),
      nearest(psis, p.psi, [](double a, double b) { return std::abs(std::log(a / b)); }),
      nearest(knn_ks, p.knn_k, abs_diff),
      nearest(n_inits, p.kmeans_n_init, abs_diff),
      nearest(eig_strategies, p.eig_strategy, same),
      nearest(eig_max_iters, p.eig_max_iter, abs_diff),
  };
}

void GAConfig::validate() const {
  auto fail = [](const std::string& m) { throw DomainError(ErrorCode::InvalidArgument, m); };
  if (population_size < 2) fail("population must hold at least two individuals");
  if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) fail("crossover_rate outside [0, 1]");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) fail("mutation_rate outside [0, 1]");
  if (elitism >= population_size) fail("elitism must be smaller than the population");
}

std::size_t roulette_select(std::span<const double> fitness, Rng& rng) {
  if (fitness.empty()) throw DomainError(ErrorCode::InvalidArgument, "empty population");
  std::vector<double> cumulative(fitness.size());
  double total = 0.0;
  for (std::size_t i = 0; i < fitness.size(); ++i) {
    const double f = fitness[i];
    const double w = std::isfinite(f) && f >= 0.0 ? 1.0 / (f + 1e-9) : 0.0;
    total += w;
    cumulative[i] = total;
  }
  if (!(total > 0.0) || !std::isfinite(total)) return rng.index(fitness.size());
  const double r = rng.uniform() * total;
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
  const auto idx = static_cast<std::size_t>(it - cumulative.begin());
  return std::min(idx, fitness.size() - 1);
}

namespace {

class FitnessCache {
 public:
  FitnessCache(const FitnessFn& fn, std::size_t threads) : fn_(fn), threads_(threads) {
    if (threads_ == 0) threads_ = std::max(1u, std::thread::hardware_concurrency());
  }

  std::vector<double> evaluate(const std::vector<Chromosome>& population) {
    std::vector<Chromosome> pending;
    for (const auto& c : population) {
      if (!cache_.contains(c) &&
          std::find(pending.begin(), pending.end(), c) == pending.end()) {
        pending.push_back(c);
      }
    }
    std::vector<double> values(pending.size());
    std::vector<std::exception_ptr> errors(pending.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < pending.size(); i = next++) {
        try {
          values[i] = fn_(pending[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const auto workers = std::min(threads_, pending.size());
    if (workers <= 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (std::size_t i = 0; i < pending.size(); ++i) cache_.emplace(pending[i], values[i]);
    evaluations_ += pending.size();

    std::vector<double> out;
    out.reserve(population.size());
    for (const auto& c : population) out.push_back(cache_.at(c));
    return out;
  }

  std::size_t evaluations() const { return evaluations_; }

 private:
  const FitnessFn& fn_;
  std::size_t threads_;
  std::map<Chromosome, double> cache_;
  std::size_t evaluations_ = 0;
};

}  // namespace

GAOutcome genetic_search(std::span<const std::size_t> domain_sizes, const FitnessFn& fitness,
                         const GAConfig& config, std::span<const Chromosome> seeds) {
  config.validate();
  if (domain_sizes.empty()) throw DomainError(ErrorCode::InvalidArgument, "empty search space");
  for (auto s : domain_sizes) {
    if (s == 0) throw DomainError(ErrorCode::InvalidArgument, "empty gene domain");
  }
  const std::size_t genes = domain_sizes.size();
  Rng rng(mix_seed(config.seed, 0x6A));
  FitnessCache cache(fitness, config.threads);

  auto random_chromosome = [&] {
    Chromosome c(genes);
    for (std::size_t g = 0; g < genes; ++g) c[g] = rng.index(domain_sizes[g]);
    return c;
  };

  std::vector<Chromosome> population;
  population.reserve(config.population_size);
  for (const auto& s : seeds) {
    if (population.size() == config.population_size) break;
    if (s.size() != genes) throw DomainError(ErrorCode::InvalidChromosome, "seed has wrong length");
    for (std::size_t g = 0; g < genes; ++g) {
      if (s[g] >= domain_sizes[g]) throw DomainError(ErrorCode::InvalidChromosome, "seed gene out of range");
    }
    population.push_back(s);
  }
  while (population.size() < config.population_size) population.push_back(random_chromosome());

  GAOutcome out;
  auto scores = cache.evaluate(population);
  auto update_best = [&](bool first) {
    for (std::size_t i = 0; i < population.size(); ++i) {
      if (first && i == 0) {
        out.best = population[0];
        out.best_fitness = scores[0];
        continue;
      }
      if (scores[i] < out.best_fitness) {
        out.best = population[i];
        out.best_fitness = scores[i];
      }
    }
    out.history.push_back(out.best_fitness);
    out.generation_sizes.push_back(population.size());
  };
  update_best(true);

  for (std::size_t gen = 0; gen < config.max_iterations; ++gen) {
    std::vector<std::size_t> order(population.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<Chromosome> next;
    next.reserve(config.population_size);
    for (std::size_t e = 0; e < config.elitism; ++e) next.push_back(population[order[e]]);

    while (next.size() < config.population_size) {
      Chromosome a = population[roulette_select(scores, rng)];
      Chromosome b = population[roulette_select(scores, rng)];
      if (rng.bernoulli(config.crossover_rate)) {
        for (std::size_t g = 0; g < genes; ++g) {
          if (rng.bernoulli(0.5)) std::swap(a[g], b[g]);
        }
      }
      for (auto* child : {&a, &b}) {
        for (std::size_t g = 0; g < genes; ++g) {
          if (rng.bernoulli(config.mutation_rate)) (*child)[g] = rng.index(domain_sizes[g]);
        }
      }
      next.push_back(std::move(a));
      if (next.size() < config.population_size) next.push_back(std::move(b));
    }
    population = std::move(next);
    scores = cache.evaluate(population);
    update_best(false);
  }
  out.evaluations = cache.evaluations();
  return out;
}

double evaluate_fitness(const SpectralParams& params, const ingest::InstanceModel& instance,
                        double gamma, std::uint64_t seed, metrics::GammaWeighting w) {
  std::vector<std::size_t> rows(instance.patients.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = instance.distance.index_of(instance.patients[i].id);
  const auto patient_d = instance.distance.subset(rows);
  clustering::ClusterAssignment clusters;
  try {
    clusters = clustering::spectral_cluster(patient_d, instance.caregivers.size(), params, seed);
  } catch (const DomainError& e) {
    if (e.code() == ErrorCode::InsufficientPatients || e.code() == ErrorCode::InvalidArgument) throw;
    return std::numeric_limits<double>::infinity();
  }
  const auto baseline = allocation::attach_centroids(clusters, instance, gamma);
  const double g[] = {gamma};
  double f = metrics::ampm(baseline.assignment, instance.distance, g, w);

  allocation::AllocationDecision decision;
  for (std::size_t i = 0; i < instance.patients.size(); ++i) {
    const auto& p = instance.patients[i];
    decision.assignments.push_back({p.id, p.location, p.weekly_visits, p.visit_length,
                                    baseline.caregiver_of_cluster(clusters.labels[i]), false, 0});
  }
  const auto report = allocation::check_feasibility(decision, instance, gamma);
  for (const auto& l : report.loads) {
    if (l.status != allocation::LoadStatus::Feasible) f += kHoursPenalty;
  }
  return f;
}

double evaluate_fitness(const HyperparamSpace& space, std::span<const std::size_t> chromosome,
                        const ingest::InstanceModel& instance, double gamma, std::uint64_t seed,
                        metrics::GammaWeighting w) {
  return evaluate_fitness(space.decode(chromosome), instance, gamma, seed, w);
}

TuneResult ga_optimize(const HyperparamSpace& space, const ingest::InstanceModel& instance,
                       double gamma, const GAConfig& config, metrics::GammaWeighting w) {
  const auto sizes = space.domain_sizes();
  for (auto s : sizes) {
    if (s == 0) throw DomainError(ErrorCode::InvalidArgument, "empty gene domain");
  }
  const auto defaults = space.encode(SpectralParams::defaults_for(instance.caregivers.size()));
  const std::uint64_t cluster_seed = mix_seed(config.seed, 0xC1);
  FitnessFn fn = [&](const Chromosome& c) {
    return evaluate_fitness(space, c, instance, gamma, cluster_seed, w);
  };
  const Chromosome seeds[] = {defaults};
  const auto outcome = genetic_search(sizes, fn, config, seeds);

  TuneResult r;
  r.discipline = instance.discipline;
  r.best_params = space.decode(outcome.best);
  r.best_fitness = outcome.best_fitness;
  r.history = outcome.history;
  r.evaluations = outcome.evaluations;
  r.seed = cluster_seed;
  return r;
}

}  // namespace careflow::tuner
