#include "careflow/supply.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <numbers>
#include <numeric>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "careflow/random.hpp"

namespace careflow::supply {

Scenario generate_scenario(const ingest::InstanceModel& instance, int delta, std::uint64_t seed,
                           double radius) {
  if (delta == 0) throw DomainError(ErrorCode::InvalidArgument, "scenario delta must be nonzero");
  Scenario s;
  s.discipline = instance.discipline;
  s.delta = delta;
  s.seed = seed;
  Rng rng(mix_seed(seed, 0x5C));
  if (delta > 0) {
    if (instance.patients.empty()) {
      throw DomainError(ErrorCode::InvalidArgument, "cannot place caregivers without patients");
    }
    for (int i = 0; i < delta; ++i) {
      const auto& anchor = instance.patients[rng.index(instance.patients.size())].location;
      const double bearing = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double miles = radius * std::sqrt(rng.uniform());
      s.placements.push_back(geo::destination_point(anchor, bearing, miles));
    }
  } else {
    const auto remove = static_cast<std::size_t>(-delta);
    if (remove >= instance.caregivers.size()) {
      throw DomainError(ErrorCode::InvalidArgument,
                        "scenario would remove all " + std::to_string(instance.caregivers.size()) +
                            " caregivers");
    }
    std::vector<std::size_t> idx(instance.caregivers.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < remove; ++i) {
      std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
      s.removed_ids.push_back(instance.caregivers[idx[i]].id);
    }
  }
  return s;
}

ingest::InstanceModel apply_scenario(const ingest::InstanceModel& instance,
                                     const Scenario& scenario) {
  std::vector<ingest::CaregiverNode> caregivers;
  double w_min = 0.0;
  double w_max = 0.0;
  for (const auto& c : instance.caregivers) {
    w_min += c.w_min;
    w_max += c.w_max;
    if (std::find(scenario.removed_ids.begin(), scenario.removed_ids.end(), c.id) ==
        scenario.removed_ids.end()) {
      caregivers.push_back(c);
    }
  }
  if (caregivers.size() + scenario.removed_ids.size() != instance.caregivers.size()) {
    throw DomainError(ErrorCode::UnknownCaregiver, "scenario removes an unknown caregiver");
  }
  const double n = static_cast<double>(instance.caregivers.size());
  for (std::size_t i = 0; i < scenario.placements.size(); ++i) {
    caregivers.push_back(
        {"ALT-" + std::to_string(i + 1), scenario.placements[i], w_min / n, w_max / n});
  }
  return ingest::InstanceModel::make(instance.discipline, instance.patients, std::move(caregivers),
                                     instance.travel_rate, instance.road_coeff);
}

std::string_view to_string(Metric m) noexcept { return m == Metric::AMPM ? "AMPM" : "ATPM"; }

std::string_view to_string(ApcForm f) noexcept {
  return f == ApcForm::Normalized ? "normalized" : "raw";
}

std::optional<ApcForm> parse_apc_form(std::string_view s) {
  if (s == "normalized") return ApcForm::Normalized;
  if (s == "raw") return ApcForm::Raw;
  return std::nullopt;
}

double apc(double baseline_value, double alt_value, std::size_t baseline_count,
           std::size_t alt_count, ApcForm form) {
  if (baseline_count == alt_count) {
    throw DomainError(ErrorCode::InvalidArgument, "APC needs different caregiver counts");
  }
  const double step = baseline_count > alt_count ? static_cast<double>(baseline_count - alt_count)
                                                 : static_cast<double>(alt_count - baseline_count);
  if (form == ApcForm::Raw) return (alt_value - baseline_value) / step;
  if (!(baseline_value > 0.0)) {
    throw DomainError(ErrorCode::InvalidArgument, "APC baseline value must be positive");
  }
  return 100.0 * (alt_value - baseline_value) / baseline_value / step;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b, double alpha) {
  if (a.size() != b.size()) throw DomainError(ErrorCode::InvalidArgument, "paired samples differ in length");
  if (a.size() < 2) throw DomainError(ErrorCode::InvalidArgument, "paired t-test needs n >= 2");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = (a[i] - b[i]) - mean;
    ss += e * e;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  // Constant differences leave only rounding noise in sd.
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a[i] - b[i]));
  if (!(sd > 1e-12 * scale) || sd == 0.0) throw DegenerateSamples(mean);

  TTestResult r;
  r.n = n;
  r.mean_diff = mean;
  r.sd_diff = sd;
  r.df = n - 1;
  r.t_stat = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(r.df));
  r.p_value = std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t_stat))),
                         0.0, 1.0);
  r.significant = r.p_value < alpha;
  return r;
}

ReplicateSamples replicate_metrics(const ingest::InstanceModel& instance,
                                   const clustering::SpectralParams& params, double gamma,
                                   std::size_t replications, std::uint64_t seed,
                                   metrics::GammaWeighting w, std::size_t threads) {
  std::vector<std::size_t> rows(instance.patients.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = instance.distance.index_of(instance.patients[i].id);
  }
  const auto patient_d = instance.distance.subset(rows);
  auto p = params;
  p.embed_dim = instance.caregivers.size();
  const double g[] = {gamma};

  ReplicateSamples out;
  out.ampm.resize(replications);
  out.atpm.resize(replications);
  std::vector<std::exception_ptr> errors(replications);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t r = next++; r < replications; r = next++) {
      try {
        const auto clusters =
            clustering::spectral_cluster(patient_d, instance.caregivers.size(), p, mix_seed(seed, r));
        const auto b = allocation::attach_centroids(clusters, instance, gamma);
        const auto resolved = metrics::resolve(b.assignment, instance.distance);
        out.ampm[r] = metrics::ampm(resolved, instance.distance, g, w);
        out.atpm[r] = metrics::atpm(resolved, instance.distance, g, w);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = std::min(threads, replications);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

SensitivityRow make_row(int delta, Metric m, const std::vector<double>& base,
                        const std::vector<double>& alt, std::size_t base_count,
                        std::size_t alt_count, const SensitivityConfig& config) {
  SensitivityRow row;
  row.delta = delta;
  row.metric = m;
  row.baseline_mean = mean_of(base);
  row.alt_mean = mean_of(alt);
  row.apc = apc(row.baseline_mean, row.alt_mean, base_count, alt_count, config.apc_form);
  try {
    const auto t = paired_t_test(alt, base, config.alpha);
    row.t_stat = t.t_stat;
    row.p_value = t.p_value;
    row.significant = t.significant;
  } catch (const DegenerateSamples&) {
    row.degenerate = true;
    row.significant = false;
  }
  return row;
}

}  // namespace

std::vector<SensitivityRow> compare_instances(const ingest::InstanceModel& base,
                                              const ingest::InstanceModel& alt, int delta,
                                              const clustering::SpectralParams& params,
                                              double gamma, const SensitivityConfig& config) {
  const auto b = replicate_metrics(base, params, gamma, config.replications, config.seed,
                                   config.weighting, config.threads);
  const auto a = replicate_metrics(alt, params, gamma, config.replications, config.seed,
                                   config.weighting, config.threads);
  const auto bc = base.caregivers.size();
  const auto ac = alt.caregivers.size();
  return {make_row(delta, Metric::AMPM, b.ampm, a.ampm, bc, ac, config),
          make_row(delta, Metric::ATPM, b.atpm, a.atpm, bc, ac, config)};
}

SensitivityReport run_sensitivity(const ingest::InstanceModel& instance,
                                  const allocation::Baseline& baseline,
                                  const SensitivityConfig& config) {
  if (config.replications < 2) {
    throw DomainError(ErrorCode::InvalidArgument, "sensitivity needs at least two replications");
  }
  SensitivityReport report;
  report.discipline = instance.discipline;
  report.baseline_count = instance.caregivers.size();
  report.replications = config.replications;
  report.alpha = config.alpha;
  report.seed = config.seed;
  const auto& params = baseline.assignment.params;
  for (std::size_t i = 0; i < config.deltas.size(); ++i) {
    const int delta = config.deltas[i];
    const auto scenario = generate_scenario(instance, delta, mix_seed(config.seed, 0x1000 + i));
    const auto alt = apply_scenario(instance, scenario);
    for (auto& row : compare_instances(instance, alt, delta, params, baseline.gamma, config)) {
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace careflow::supply
