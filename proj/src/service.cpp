#include "careflow/service.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "careflow/csv.hpp"
#include "careflow/error.hpp"
#include "careflow/log.hpp"

namespace careflow::service {

namespace fs = std::filesystem;

ingest::InstanceConfig Config::instance_config() const {
  return {travel_rate, road_correction, default_w_min, default_w_max};
}

namespace {

template <typename T>
void read_key(const Json& section, const char* key, T& out) {
  if (section.contains(key)) out = section.at(key).get<T>();
}

const Json& section(const Json& j, const char* name) {
  static const Json empty = Json::object();
  return j.contains(name) ? j.at(name) : empty;
}

}  // namespace

Config config_from_json(const Json& j) {
  Config c;
  try {
    read_key(section(j, "geo"), "correction", c.road_correction);
    read_key(section(j, "geocoder"), "fixture_path", c.geocoder_fixture_path);
    read_key(section(j, "geocoder"), "zip_table", c.zip_table_path);
    const auto& ing = section(j, "ingest");
    read_key(ing, "travel_rate", c.travel_rate);
    read_key(ing, "gamma_reduction", c.gamma_reduction);
    read_key(ing, "w_min", c.default_w_min);
    read_key(ing, "w_max", c.default_w_max);
    const auto& met = section(j, "metrics");
    if (met.contains("gamma_weighting")) {
      const auto w = metrics::parse_gamma_weighting(met.at("gamma_weighting").get<std::string>());
      if (!w) throw DomainError(ErrorCode::SchemaError, "metrics.gamma_weighting must be paper or complement");
      c.gamma_weighting = *w;
    }
    if (met.contains("gamma")) {
      const auto g = met.at("gamma").get<std::string>();
      if (g != "curr" && g != "lim") throw DomainError(ErrorCode::SchemaError, "metrics.gamma must be curr or lim");
      c.gamma_choice = g == "lim" ? GammaChoice::Limited : GammaChoice::Current;
    }
    if (section(j, "apc").contains("form")) {
      const auto f = supply::parse_apc_form(section(j, "apc").at("form").get<std::string>());
      if (!f) throw DomainError(ErrorCode::SchemaError, "apc.form must be normalized or raw");
      c.apc_form = *f;
    }
    const auto& eng = section(j, "engine");
    read_key(eng, "data_dir", c.data_dir);
    read_key(eng, "cors_origin", c.cors_origin);
    read_key(eng, "seed", c.seed);
    read_key(eng, "threads", c.threads);
    const auto& ga = section(j, "ga");
    read_key(ga, "population_size", c.ga.population_size);
    read_key(ga, "crossover_rate", c.ga.crossover_rate);
    read_key(ga, "mutation_rate", c.ga.mutation_rate);
    read_key(ga, "max_iterations", c.ga.max_iterations);
    read_key(section(j, "allocation"), "max_retries", c.max_retries);
    read_key(section(j, "sensitivity"), "replications", c.replications);
    read_key(section(j, "sensitivity"), "alpha", c.alpha);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(ErrorCode::SchemaError, std::string("config: ") + e.what());
  }
  c.ga.validate();
  if (!(c.road_correction > 0.0)) throw DomainError(ErrorCode::SchemaError, "geo.correction must be positive");
  if (!(c.travel_rate > 0.0)) throw DomainError(ErrorCode::SchemaError, "ingest.travel_rate must be positive");
  return c;
}

Config load_config(const std::string& path) {
  return config_from_json(parse_json(read_file(path), path));
}

Config config_from_env() {
  const char* path = std::getenv("CAREFLOW_CONFIG");
  if (!path || !*path) return {};
  return load_config(path);
}

double select_gamma(const ingest::GammaProfile& profile, GammaChoice choice) {
  return choice == GammaChoice::Limited ? profile.gamma_lim : profile.gamma_curr;
}

DisciplineData prepare_discipline(std::span<const ingest::VisitRecord> records,
                                  ingest::Discipline d, const Config& config,
                                  const std::optional<ingest::CaregiverRoster>& roster) {
  DisciplineData out{ingest::build_instance(records, d, config.instance_config(), roster),
                     ingest::compute_gamma(records, d, config.gamma_reduction), 0.0};
  out.gamma_used = select_gamma(out.gamma, config.gamma_choice);
  return out;
}

tuner::TuneResult tune_discipline(const DisciplineData& data, const Config& config,
                                  std::uint64_t seed) {
  const auto space = tuner::HyperparamSpace::standard(data.instance.caregivers.size(),
                                                      data.instance.patients.size());
  auto ga = config.ga;
  ga.seed = seed;
  ga.threads = config.threads;
  return tuner::ga_optimize(space, data.instance, data.gamma_used, ga, config.gamma_weighting);
}

allocation::Baseline build_baseline(const DisciplineData& data,
                                    const clustering::SpectralParams& params, std::uint64_t seed,
                                    std::string created_at) {
  const auto& inst = data.instance;
  std::vector<std::size_t> rows(inst.patients.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = inst.distance.index_of(inst.patients[i].id);
  const auto clusters = clustering::spectral_cluster(inst.distance.subset(rows),
                                                     inst.caregivers.size(), params, seed);
  auto b = allocation::attach_centroids(clusters, inst, data.gamma_used, std::move(created_at));
  b.assignment.discipline = inst.discipline;
  return b;
}

metrics::MetricsReport baseline_metrics(const allocation::Baseline& baseline,
                                        const ingest::InstanceModel& instance,
                                        metrics::GammaWeighting w) {
  const double g[] = {baseline.gamma};
  return metrics::evaluate(baseline.assignment, instance.distance, g, w);
}

namespace {

std::optional<double> to_number(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

}  // namespace

std::vector<ingest::PatientNode> read_patients(std::istream& in, const Config& config,
                                               geo::GeocodeStats* stats) {
  std::string line;
  std::map<std::string, std::size_t> col;
  std::vector<ingest::PatientNode> out;
  std::unique_ptr<geo::GeocoderBackend> backend;
  geo::ZipTable zips;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = csv::split_line(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < f.size(); ++i) col[f[i]] = i;
      const bool coords = col.count("lat") && col.count("lon");
      if (!col.count("patient_id") || (!coords && !col.count("address"))) {
        throw DomainError(ErrorCode::SchemaError,
                          "patients file needs patient_id and either lat,lon or address");
      }
      if (!coords) {
        if (config.geocoder_fixture_path.empty()) {
          throw DomainError(ErrorCode::SchemaError, "address rows need geocoder.fixture_path");
        }
        backend = std::make_unique<geo::FixtureGeocoder>(
            geo::FixtureGeocoder::from_file(config.geocoder_fixture_path));
        if (!config.zip_table_path.empty()) zips = geo::ZipTable::from_csv(config.zip_table_path);
      }
      continue;
    }
    auto field = [&](const char* name) -> std::optional<std::string> {
      auto it = col.find(name);
      if (it == col.end() || it->second >= f.size()) return std::nullopt;
      return f[it->second];
    };
    auto fail = [&](const std::string& why) {
      throw DomainError(ErrorCode::SchemaError,
                        "patients line " + std::to_string(line_no) + ": " + why);
    };
    ingest::PatientNode p;
    p.id = field("patient_id").value_or("");
    if (p.id.empty()) fail("empty patient_id");
    if (backend) {
      p.location = geo::geocode_address(field("address").value_or(""), *backend, zips);
      if (stats) stats->record(p.location);
    } else {
      const auto lat = to_number(field("lat").value_or(""));
      const auto lon = to_number(field("lon").value_or(""));
      if (!lat || !lon) fail("non-numeric coordinates");
      p.location = geo::GeoPoint(*lat, *lon);
    }
    if (auto v = field("weekly_visits"); v && !v->empty()) {
      const auto n = to_number(*v);
      if (!n || *n < 1 || *n != static_cast<int>(*n)) fail("weekly_visits must be a positive integer");
      p.weekly_visits = static_cast<int>(*n);
    }
    if (auto v = field("visit_length"); v && !v->empty()) {
      const auto n = to_number(*v);
      if (!n || !(*n > 0.0)) fail("visit_length must be positive");
      p.visit_length = *n;
    }
    out.push_back(std::move(p));
  }
  if (col.empty()) throw DomainError(ErrorCode::EmptyDataset, "patients file is empty");
  return out;
}

void write_allocation_csv(std::ostream& out, const allocation::WeeklyResult& result) {
  out << "patient_id,caregiver_id,extrapolated,retry_round\n";
  for (const auto& a : result.decision.assignments) {
    out << csv::join({a.patient_id, a.caregiver_id, a.extrapolated ? "true" : "false",
                      std::to_string(a.retry_round)})
        << '\n';
  }
}

// ---------------------------------------------------------------------------

Store::Store(std::string root) : root_(std::move(root)) { fs::create_directories(root_); }

std::string Store::path_of(const std::string& name) const {
  if (name.find("..") != std::string::npos) {
    throw DomainError(ErrorCode::InvalidArgument, "invalid store name " + name);
  }
  return (fs::path(root_) / name).string();
}

void Store::save_dataset(ingest::Discipline d, std::span<const ingest::VisitRecord> records) const {
  std::ostringstream ss;
  ingest::write_visit_records(ss, records);
  write_file_atomic(path_of("datasets/" + std::string(ingest::to_string(d)) + ".csv"), ss.str());
}

std::optional<std::vector<ingest::VisitRecord>> Store::load_dataset(ingest::Discipline d) const {
  const auto path = path_of("datasets/" + std::string(ingest::to_string(d)) + ".csv");
  if (!fs::exists(path)) return std::nullopt;
  std::ifstream in(path);
  return ingest::parse_visit_records(in).records;
}

void Store::save_json(const std::string& name, const Json& j) const {
  write_file_atomic(path_of(name), j.dump(2) + "\n");
}

std::optional<Json> Store::load_json(const std::string& name) const {
  const auto path = path_of(name);
  if (!fs::exists(path)) return std::nullopt;
  return parse_json(read_file(path), path);
}

std::vector<std::string> Store::list(const std::string& prefix) const {
  std::vector<std::string> out;
  const auto dir = fs::path(path_of(prefix));
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") {
      out.push_back((fs::path(prefix) / e.path().filename()).string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace careflow::service
