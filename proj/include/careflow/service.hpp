#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "careflow/allocation.hpp"
#include "careflow/geo.hpp"
#include "careflow/ingest.hpp"
#include "careflow/json_io.hpp"
#include "careflow/metrics.hpp"
#include "careflow/supply.hpp"
#include "careflow/tuner.hpp"

namespace careflow::service {

enum class GammaChoice { Current, Limited };

struct Config {
  double road_correction = geo::kDefaultRoadCorrection;
  std::string geocoder_fixture_path;
  std::string zip_table_path;
  double travel_rate = 1.0 / 40.0;
  double gamma_reduction = ingest::kDefaultGammaReduction;
  double default_w_min = 0.0;
  double default_w_max = 40.0;
  metrics::GammaWeighting gamma_weighting = metrics::GammaWeighting::Paper;
  GammaChoice gamma_choice = GammaChoice::Current;
  supply::ApcForm apc_form = supply::ApcForm::Normalized;
  std::string data_dir = "careflow-data";
  std::string cors_origin = "*";
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  tuner::GAConfig ga;
  std::size_t max_retries = 3;
  std::size_t replications = 100;
  double alpha = 0.05;

  ingest::InstanceConfig instance_config() const;
};

/// Unknown keys are ignored; wrong types raise SchemaError.
Config config_from_json(const Json& j);
Config load_config(const std::string& path);
/// Reads the file named by CAREFLOW_CONFIG, or returns defaults when unset.
Config config_from_env();

double select_gamma(const ingest::GammaProfile& profile, GammaChoice choice);

/// Everything the pipeline needs for one discipline.
struct DisciplineData {
  ingest::InstanceModel instance;
  ingest::GammaProfile gamma;
  double gamma_used = 0.0;
};

DisciplineData prepare_discipline(std::span<const ingest::VisitRecord> records,
                                  ingest::Discipline d, const Config& config,
                                  const std::optional<ingest::CaregiverRoster>& roster = std::nullopt);

tuner::TuneResult tune_discipline(const DisciplineData& data, const Config& config,
                                  std::uint64_t seed);

/// Clusters with `params` and `seed`, then attaches caregivers.
allocation::Baseline build_baseline(const DisciplineData& data,
                                    const clustering::SpectralParams& params, std::uint64_t seed,
                                    std::string created_at = {});

metrics::MetricsReport baseline_metrics(const allocation::Baseline& baseline,
                                        const ingest::InstanceModel& instance,
                                        metrics::GammaWeighting w);

/// Weekly patients from CSV with header `patient_id,lat,lon` or
/// `patient_id,address`, plus optional `weekly_visits,visit_length`.
/// Address rows are geocoded with zip fallback; `stats` counts fallbacks.
std::vector<ingest::PatientNode> read_patients(std::istream& in, const Config& config,
                                               geo::GeocodeStats* stats = nullptr);

/// `patient_id,caregiver_id,extrapolated,retry_round`, one row per patient.
void write_allocation_csv(std::ostream& out, const allocation::WeeklyResult& result);

/// Flat JSON store under the data directory.
class Store {
 public:
  explicit Store(std::string root);

  const std::string& root() const noexcept { return root_; }

  void save_dataset(ingest::Discipline d, std::span<const ingest::VisitRecord> records) const;
  std::optional<std::vector<ingest::VisitRecord>> load_dataset(ingest::Discipline d) const;

  void save_json(const std::string& name, const Json& j) const;
  std::optional<Json> load_json(const std::string& name) const;
  std::vector<std::string> list(const std::string& prefix) const;

 private:
  std::string path_of(const std::string& name) const;
  std::string root_;
};

inline std::string baseline_name(ingest::Discipline d) {
  return "baselines/baseline-" + std::string(ingest::to_string(d)) + ".json";
}
inline std::string tune_name(ingest::Discipline d) {
  return "tunes/tune-" + std::string(ingest::to_string(d)) + ".json";
}

}  // namespace careflow::service
