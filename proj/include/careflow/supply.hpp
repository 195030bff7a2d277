#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "careflow/allocation.hpp"
#include "careflow/clustering.hpp"
#include "careflow/error.hpp"
#include "careflow/geo.hpp"
#include "careflow/ingest.hpp"
#include "careflow/metrics.hpp"

namespace careflow::supply {

inline constexpr double kPlacementRadiusMiles = 3.0;

/// A change in caregiver count. Additions carry placements, removals carry
/// the ids taken out.
struct Scenario {
  ingest::Discipline discipline = ingest::Discipline::RN;
  int delta = 0;
  std::vector<geo::GeoPoint> placements;
  std::vector<std::string> removed_ids;
  std::uint64_t seed = 0;
};

/// Additions sit within `radius` miles (great-circle) of a uniformly drawn
/// patient; removals are drawn uniformly without replacement.
Scenario generate_scenario(const ingest::InstanceModel& instance, int delta, std::uint64_t seed,
                           double radius = kPlacementRadiusMiles);

/// New caregivers get ids "ALT-1", "ALT-2", ... and the mean hour bounds of
/// the existing caregivers.
ingest::InstanceModel apply_scenario(const ingest::InstanceModel& instance,
                                     const Scenario& scenario);

enum class Metric { AMPM, ATPM };
std::string_view to_string(Metric m) noexcept;

/// Normalized: 100 * (alt - base) / base / |count delta|. Raw: the printed
/// (alt - base) / |count delta|, in miles.
enum class ApcForm { Normalized, Raw };
std::string_view to_string(ApcForm f) noexcept;
std::optional<ApcForm> parse_apc_form(std::string_view s);

double apc(double baseline_value, double alt_value, std::size_t baseline_count,
           std::size_t alt_count, ApcForm form = ApcForm::Normalized);

struct APCReport {
  ingest::Discipline discipline = ingest::Discipline::RN;
  Metric metric = Metric::AMPM;
  double baseline_value = 0.0;
  double alt_value = 0.0;
  std::size_t baseline_count = 0;
  std::size_t alt_count = 0;
  double apc = 0.0;
};

struct TTestResult {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  double t_stat = 0.0;
  std::size_t df = 0;
  double p_value = 1.0;
  bool significant = false;
};

/// Zero-variance differences; carries the (constant) mean difference.
class DegenerateSamples : public DomainError {
 public:
  explicit DegenerateSamples(double mean_diff)
      : DomainError(ErrorCode::DegenerateSamples,
                    "paired differences have zero variance (mean difference " +
                        std::to_string(mean_diff) + ")"),
        mean_diff_(mean_diff) {}
  double mean_diff() const noexcept { return mean_diff_; }

 private:
  double mean_diff_;
};

/// Two-sided paired t-test on a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b,
                          double alpha = 0.05);

struct ReplicateSamples {
  std::vector<double> ampm;
  std::vector<double> atpm;
};

/// Metric samples from `replications` clusterings that differ only in seed.
ReplicateSamples replicate_metrics(const ingest::InstanceModel& instance,
                                   const clustering::SpectralParams& params, double gamma,
                                   std::size_t replications, std::uint64_t seed,
                                   metrics::GammaWeighting w, std::size_t threads = 0);

struct SensitivityRow {
  int delta = 0;
  Metric metric = Metric::AMPM;
  double baseline_mean = 0.0;
  double alt_mean = 0.0;
  double apc = 0.0;
  std::optional<double> t_stat;  // absent when the samples are degenerate
  std::optional<double> p_value;
  bool significant = false;
  bool degenerate = false;  // replicate differences had zero variance
};

struct SensitivityConfig {
  std::vector<int> deltas = {-1, 1};
  std::size_t replications = 100;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  metrics::GammaWeighting weighting = metrics::GammaWeighting::Paper;
  ApcForm apc_form = ApcForm::Normalized;
  std::size_t threads = 0;
};

struct SensitivityReport {
  ingest::Discipline discipline = ingest::Discipline::RN;
  std::size_t baseline_count = 0;
  std::size_t replications = 0;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::vector<SensitivityRow> rows;
};

/// Compares two instances of the same patients under paired replicate seeds;
/// one row per metric.
std::vector<SensitivityRow> compare_instances(const ingest::InstanceModel& base,
                                              const ingest::InstanceModel& alt, int delta,
                                              const clustering::SpectralParams& params,
                                              double gamma, const SensitivityConfig& config);

/// Runs every delta against the baseline's tuned params and gamma.
SensitivityReport run_sensitivity(const ingest::InstanceModel& instance,
                                  const allocation::Baseline& baseline,
                                  const SensitivityConfig& config);

}  // namespace careflow::supply
