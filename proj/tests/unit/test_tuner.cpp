#include <doctest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>

#include "careflow/error.hpp"
#include "careflow/tuner.hpp"

using namespace careflow;
using namespace careflow::tuner;

namespace {

double surrogate(const Chromosome& c) {
  double s = 0.0;
  for (auto g : c) s += (static_cast<double>(g) - 3.0) * (static_cast<double>(g) - 3.0);
  return s;
}

ingest::InstanceModel small_instance(double w_min, double w_max) {
  const geo::GeoPoint o(35.96, -83.92);
  std::vector<ingest::PatientNode> p;
  std::vector<ingest::CaregiverNode> c;
  for (int b = 0; b < 2; ++b) {
    const auto centre = geo::destination_point(o, std::numbers::pi / 2, 15.0 * b);
    c.push_back({"C" + std::to_string(b), centre, w_min, w_max});
    for (int i = 0; i < 6; ++i) {
      p.push_back({"P" + std::to_string(6 * b + i), geo::destination_point(centre, i, 0.5 + 0.2 * i), 1, 1.0});
    }
  }
  return ingest::InstanceModel::make(ingest::Discipline::RN, p, c, 1.0 / 40.0, 1.285);
}

}  // namespace

TEST_CASE("hyperparameter space") {
  const auto s = HyperparamSpace::standard(3, 40);
  CHECK(s.psis.size() == 26);
  CHECK(std::is_sorted(s.psis.begin(), s.psis.end()));
  CHECK(s.psis.front() == doctest::Approx(1e-3));
  CHECK(s.psis.back() == doctest::Approx(1e2));
  CHECK(std::find(s.psis.begin(), s.psis.end(), 1.0) != s.psis.end());
  CHECK(s.embed_dim == 3);
  for (auto k : s.knn_ks) CHECK(k < 40);

  const auto defaults = clustering::SpectralParams::defaults_for(3);
  const auto round = s.decode(s.encode(defaults));
  CHECK(round.kernel == defaults.kernel);
  CHECK(round.psi == defaults.psi);
  CHECK(round.knn_k == defaults.knn_k);
  CHECK(round.kmeans_n_init == defaults.kmeans_n_init);
  CHECK(round.eig_max_iter == defaults.eig_max_iter);

  const auto sizes = s.domain_sizes();
  REQUIRE(sizes.size() == 6);
  Chromosome bad(6, 0);
  bad[1] = sizes[1];
  CHECK_THROWS_AS(s.decode(bad), DomainError);
  CHECK_THROWS_AS(s.decode(Chromosome(5, 0)), DomainError);

  // Small instances clamp knn_k below n.
  for (auto k : HyperparamSpace::standard(4, 12).knn_ks) CHECK(k <= 11);
}

TEST_CASE("roulette favours low fitness") {
  const double f[] = {1.0, 9.0, std::numeric_limits<double>::infinity()};
  Rng rng(1);
  std::array<int, 3> hits{};
  for (int i = 0; i < 20000; ++i) ++hits[roulette_select(f, rng)];
  CHECK(hits[2] == 0);
  // Weights 1 and 1/9: expect a 9:1 split.
  CHECK(static_cast<double>(hits[0]) / hits[1] == doctest::Approx(9.0).epsilon(0.15));

  const double dead[] = {std::nan(""), std::numeric_limits<double>::infinity()};
  std::array<int, 2> uniform{};
  for (int i = 0; i < 2000; ++i) ++uniform[roulette_select(dead, rng)];
  CHECK(uniform[0] > 800);
  CHECK(uniform[1] > 800);
}

TEST_CASE("GA recovers the surrogate minimum") {
  const std::vector<std::size_t> domains = {10, 10, 10};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GAConfig cfg;
    cfg.seed = seed;
    cfg.max_iterations = 50;
    const auto out = genetic_search(domains, surrogate, cfg);
    CHECK(out.best_fitness == 0.0);
    CHECK(out.best == Chromosome{3, 3, 3});
    REQUIRE(out.history.size() == 51);
    for (std::size_t g = 1; g < out.history.size(); ++g) CHECK(out.history[g] <= out.history[g - 1]);
    for (auto n : out.generation_sizes) CHECK(n == 40);
  }
}

TEST_CASE("GA is deterministic and thread-count independent") {
  const std::vector<std::size_t> domains = {7, 5, 9, 4};
  auto noisy = [](const Chromosome& c) {
    return surrogate(c) + 0.01 * static_cast<double>(c[0] * 13 % 7);
  };
  GAConfig a;
  a.seed = 17;
  a.max_iterations = 20;
  a.threads = 1;
  GAConfig b = a;
  b.threads = 6;
  const auto x = genetic_search(domains, noisy, a);
  const auto y = genetic_search(domains, noisy, b);
  CHECK(x.best == y.best);
  CHECK(x.history == y.history);
  CHECK(x.evaluations == y.evaluations);
}

TEST_CASE("GA evaluates each chromosome once and honours seeds") {
  std::atomic<int> calls{0};
  auto counted = [&](const Chromosome& c) {
    ++calls;
    return surrogate(c);
  };
  GAConfig cfg;
  cfg.max_iterations = 5;
  const std::vector<std::size_t> domains = {10, 10};
  const std::vector<Chromosome> seeds = {{3, 3}};
  const auto out = genetic_search(domains, counted, cfg, seeds);
  CHECK(out.history.front() == 0.0);
  CHECK(out.evaluations == static_cast<std::size_t>(calls.load()));
  CHECK(out.evaluations <= 100);
}

TEST_CASE("GA config validation and fitness errors") {
  GAConfig cfg;
  cfg.population_size = 1;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = GAConfig{};
  cfg.mutation_rate = 1.5;
  CHECK_THROWS_AS(cfg.validate(), DomainError);

  const std::vector<std::size_t> domains = {4};
  auto throws = [](const Chromosome&) -> double { throw std::runtime_error("boom"); };
  CHECK_THROWS_AS(genetic_search(domains, throws, GAConfig{}), std::runtime_error);
}

TEST_CASE("fitness adds a penalty per caregiver outside its hours") {
  const auto params = clustering::SpectralParams::defaults_for(2);
  const double relaxed = evaluate_fitness(params, small_instance(0.0, 40.0), 0.4, 3);
  CHECK(relaxed < kHoursPenalty);
  CHECK(relaxed > 0.0);
  const double capped = evaluate_fitness(params, small_instance(0.0, 0.1), 0.4, 3);
  CHECK(capped == doctest::Approx(relaxed + 2 * kHoursPenalty));
  const double idle = evaluate_fitness(params, small_instance(1000.0, 2000.0), 0.4, 3);
  CHECK(idle > kHoursPenalty);
}

TEST_CASE("ga_optimize never does worse than the defaults") {
  const auto inst = small_instance(0.0, 40.0);
  const auto space = HyperparamSpace::standard(2, inst.patients.size());
  GAConfig cfg;
  cfg.seed = 5;
  cfg.max_iterations = 8;
  const auto r = ga_optimize(space, inst, 0.4, cfg);
  const auto defaults = space.decode(space.encode(clustering::SpectralParams::defaults_for(2)));
  CHECK(r.best_fitness <= evaluate_fitness(defaults, inst, 0.4, r.seed) + 1e-12);
  CHECK(r.best_fitness == doctest::Approx(evaluate_fitness(r.best_params, inst, 0.4, r.seed)));
  for (std::size_t g = 1; g < r.history.size(); ++g) CHECK(r.history[g] <= r.history[g - 1]);

  const auto again = ga_optimize(space, inst, 0.4, cfg);
  CHECK(again.best_params == r.best_params);
  CHECK(again.history == r.history);
}
