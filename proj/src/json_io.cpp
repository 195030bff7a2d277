#include "careflow/json_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace careflow {

namespace {

template <typename E, typename Parse>
E parse_enum(const Json& j, Parse parse, std::string_view what) {
  const auto text = j.get<std::string>();
  const auto v = parse(text);
  if (!v) throw DomainError(ErrorCode::SchemaError, "unknown " + std::string(what) + " '" + text + "'");
  return *v;
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

namespace geo {

void to_json(Json& j, const GeoPoint& p) {
  j = Json{{"lat", p.latitude()}, {"lon", p.longitude()}};
  if (p.source() != PointSource::Exact) j["source"] = to_string(p.source());
}

void from_json(const Json& j, GeoPoint& p) {
  const auto source = j.value("source", std::string("Exact")) == "ZipCenterFallback"
                          ? PointSource::ZipCenterFallback
                          : PointSource::Exact;
  p = GeoPoint(j.at("lat").get<double>(), j.at("lon").get<double>(), source);
}

}  // namespace geo

namespace ingest {

void to_json(Json& j, const Discipline& d) { j = to_string(d); }
void from_json(const Json& j, Discipline& d) {
  d = parse_enum<Discipline>(j, parse_discipline, "discipline");
}

void to_json(Json& j, const PatientNode& p) {
  j = Json{{"id", p.id},
           {"lat", p.location.latitude()},
           {"lon", p.location.longitude()},
           {"weekly_visits", p.weekly_visits},
           {"visit_length", p.visit_length}};
}

void from_json(const Json& j, PatientNode& p) {
  p.id = j.at("id").get<std::string>();
  p.location = geo::GeoPoint(j.at("lat").get<double>(), j.at("lon").get<double>());
  p.weekly_visits = j.value("weekly_visits", 1);
  p.visit_length = j.value("visit_length", 1.0);
}

void to_json(Json& j, const CaregiverNode& c) {
  j = Json{{"id", c.id},
           {"lat", c.home.latitude()},
           {"lon", c.home.longitude()},
           {"w_min", c.w_min},
           {"w_max", c.w_max}};
}

void from_json(const Json& j, CaregiverNode& c) {
  c.id = j.at("id").get<std::string>();
  c.home = geo::GeoPoint(j.at("lat").get<double>(), j.at("lon").get<double>());
  c.w_min = j.value("w_min", 0.0);
  c.w_max = j.value("w_max", 40.0);
}

void from_json(const Json& j, SynthConfig& c) {
  if (!j.is_object()) throw DomainError(ErrorCode::SchemaError, "synthetic config must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "discipline") c.discipline = v.get<Discipline>();
    else if (key == "n_caregivers") c.n_caregivers = v.get<std::size_t>();
    else if (key == "n_patients") c.n_patients = v.get<std::size_t>();
    else if (key == "n_centers") c.n_centers = v.get<std::size_t>();
    else if (key == "cluster_spread") c.cluster_spread = v.get<double>();
    else if (key == "min_center_separation") c.min_center_separation = v.get<double>();
    else if (key == "weeks") c.weeks = v.get<std::size_t>();
    else if (key == "start_date") {
      const auto d = parse_date(v.get<std::string>());
      if (!d) throw DomainError(ErrorCode::SchemaError, "bad start_date '" + v.get<std::string>() + "'");
      c.start_date = *d;
    } else if (key == "min_weekly_visits") c.min_weekly_visits = v.get<int>();
    else if (key == "max_weekly_visits") c.max_weekly_visits = v.get<int>();
    else if (key == "min_visit_length") c.min_visit_length = v.get<double>();
    else if (key == "max_visit_length") c.max_visit_length = v.get<double>();
    else if (key == "home_return_probability") c.home_return_probability = v.get<double>();
    else if (key == "w_min") c.w_min = v.get<double>();
    else if (key == "w_max") c.w_max = v.get<double>();
    else if (key == "region") {
      c.region.lat_min = v.value("lat_min", c.region.lat_min);
      c.region.lat_max = v.value("lat_max", c.region.lat_max);
      c.region.lon_min = v.value("lon_min", c.region.lon_min);
      c.region.lon_max = v.value("lon_max", c.region.lon_max);
    } else {
      throw DomainError(ErrorCode::SchemaError, "unknown synthetic config key '" + key + "'");
    }
  }
}

void to_json(Json& j, const GammaProfile& g) {
  j = Json{{"discipline", g.discipline},
           {"n_total", g.n_total},
           {"n_home", g.n_home},
           {"gamma_curr", g.gamma_curr},
           {"gamma_lim", g.gamma_lim}};
}

}  // namespace ingest

namespace clustering {

void to_json(Json& j, const SpectralParams& p) {
  j = Json{{"kernel", to_string(p.kernel)},
           {"psi", p.psi},
           {"knn_k", p.knn_k},
           {"embed_dim", p.embed_dim},
           {"kmeans_n_init", p.kmeans_n_init},
           {"eig_strategy", to_string(p.eig_strategy)},
           {"eig_max_iter", p.eig_max_iter},
           {"eig_tol", p.eig_tol}};
}

void from_json(const Json& j, SpectralParams& p) {
  SpectralParams d;
  p.kernel = j.contains("kernel") ? parse_enum<Kernel>(j.at("kernel"), parse_kernel, "kernel")
                                  : d.kernel;
  p.psi = j.value("psi", d.psi);
  p.knn_k = j.value("knn_k", d.knn_k);
  p.embed_dim = j.value("embed_dim", d.embed_dim);
  p.kmeans_n_init = j.value("kmeans_n_init", d.kmeans_n_init);
  p.eig_strategy = j.contains("eig_strategy")
                       ? parse_enum<EigStrategy>(j.at("eig_strategy"), parse_eig_strategy,
                                                 "eig_strategy")
                       : d.eig_strategy;
  p.eig_max_iter = j.value("eig_max_iter", d.eig_max_iter);
  p.eig_tol = j.value("eig_tol", d.eig_tol);
}

void to_json(Json& j, const ClusterAssignment& a) {
  j = Json{{"discipline", a.discipline}, {"clusters", a.clusters},
           {"labels", a.labels},         {"patient_ids", a.patient_ids},
           {"centroid_of", a.centroid_of}, {"params", a.params},
           {"seed", a.seed}};
}

void from_json(const Json& j, ClusterAssignment& a) {
  a.discipline = j.at("discipline").get<ingest::Discipline>();
  a.clusters = j.at("clusters").get<std::size_t>();
  a.labels = j.at("labels").get<std::vector<std::size_t>>();
  a.patient_ids = j.value("patient_ids", std::vector<std::string>{});
  a.centroid_of = j.value("centroid_of", std::vector<std::string>{});
  a.params = j.at("params").get<SpectralParams>();
  a.seed = j.value("seed", std::uint64_t{0});
}

}  // namespace clustering

namespace metrics {

void to_json(Json& j, const MetricsReport& r) {
  j = Json{{"discipline", r.discipline}, {"ampm", r.ampm},
           {"atpm", r.atpm},             {"ch", optional_number(r.ch)},
           {"db", optional_number(r.db)}, {"gamma_used", r.gamma_used}};
}

}  // namespace metrics

namespace tuner {

void to_json(Json& j, const TuneResult& r) {
  j = Json{{"discipline", r.discipline}, {"best_params", r.best_params},
           {"best_fitness", r.best_fitness}, {"history", r.history},
           {"evaluations", r.evaluations}, {"seed", r.seed}};
}

void from_json(const Json& j, TuneResult& r) {
  r.discipline = j.at("discipline").get<ingest::Discipline>();
  r.best_params = j.at("best_params").get<clustering::SpectralParams>();
  r.best_fitness = j.at("best_fitness").get<double>();
  r.history = j.value("history", std::vector<double>{});
  r.evaluations = j.value("evaluations", std::size_t{0});
  r.seed = j.value("seed", std::uint64_t{0});
}

}  // namespace tuner

namespace allocation {

void to_json(Json& j, const Baseline& b) {
  Json points = Json::array();
  for (const auto& p : b.training_points) {
    points.push_back(Json{{"patient_id", p.patient_id},
                          {"lat", p.location.latitude()},
                          {"lon", p.location.longitude()},
                          {"label", p.label}});
  }
  j = Json{{"discipline", b.discipline},
           {"created_at", b.created_at},
           {"road_coeff", b.road_coeff},
           {"travel_rate", b.travel_rate},
           {"gamma", b.gamma},
           {"extrapolation_threshold", b.extrapolation_threshold},
           {"assignment", b.assignment},
           {"caregivers", b.caregivers},
           {"training_points", std::move(points)}};
}

void from_json(const Json& j, Baseline& b) {
  b.discipline = j.at("discipline").get<ingest::Discipline>();
  b.created_at = j.value("created_at", std::string{});
  b.road_coeff = j.at("road_coeff").get<double>();
  b.travel_rate = j.at("travel_rate").get<double>();
  b.gamma = j.at("gamma").get<double>();
  b.extrapolation_threshold = j.at("extrapolation_threshold").get<double>();
  b.assignment = j.at("assignment").get<clustering::ClusterAssignment>();
  b.caregivers = j.at("caregivers").get<std::vector<ingest::CaregiverNode>>();
  b.training_points.clear();
  for (const auto& p : j.at("training_points")) {
    const auto label = p.at("label").get<std::size_t>();
    if (label >= b.assignment.clusters) {
      throw DomainError(ErrorCode::SchemaError, "training point label out of range");
    }
    b.training_points.push_back({p.at("patient_id").get<std::string>(),
                                 geo::GeoPoint(p.at("lat").get<double>(), p.at("lon").get<double>()),
                                 label});
  }
  if (!b.assignment.has_centroids()) {
    throw DomainError(ErrorCode::SchemaError, "baseline clusters lack caregivers");
  }
}

void to_json(Json& j, const PatientAssignment& a) {
  j = Json{{"patient_id", a.patient_id},
           {"lat", a.location.latitude()},
           {"lon", a.location.longitude()},
           {"caregiver_id", a.caregiver_id},
           {"extrapolated", a.extrapolated},
           {"retry_round", a.retry_round}};
}

void to_json(Json& j, const CaregiverLoad& l) {
  j = Json{{"caregiver_id", l.caregiver_id}, {"status", to_string(l.status)},
           {"patients", l.patients},         {"service_hours", l.service_hours},
           {"travel_hours", l.travel_hours}, {"workload", l.workload},
           {"w_min", l.w_min},               {"w_max", l.w_max}};
}

void to_json(Json& j, const FeasibilityReport& r) {
  j = Json{{"feasible", r.feasible()}, {"loads", r.loads}};
}

void to_json(Json& j, const WeeklyResult& r) {
  j = Json{{"assignments", r.decision.assignments},
           {"feasibility", r.report},
           {"retries", r.retries},
           {"excluded", r.excluded},
           {"warnings", r.warnings}};
}

}  // namespace allocation

namespace supply {

void to_json(Json& j, const SensitivityRow& r) {
  j = Json{{"delta", r.delta},
           {"metric", to_string(r.metric)},
           {"baseline_mean", r.baseline_mean},
           {"alt_mean", r.alt_mean},
           {"apc", r.apc},
           {"t_stat", optional_number(r.t_stat)},
           {"p_value", optional_number(r.p_value)},
           {"significant", r.significant},
           {"degenerate", r.degenerate}};
}

void to_json(Json& j, const SensitivityReport& r) {
  j = Json{{"discipline", r.discipline},
           {"baseline_count", r.baseline_count},
           {"replications", r.replications},
           {"alpha", r.alpha},
           {"seed", r.seed},
           {"rows", r.rows}};
}

void from_json(const Json& j, SensitivityReport& r) {
  r.discipline = j.at("discipline").get<ingest::Discipline>();
  r.baseline_count = j.at("baseline_count").get<std::size_t>();
  r.replications = j.at("replications").get<std::size_t>();
  r.alpha = j.at("alpha").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.rows.clear();
  for (const auto& row : j.at("rows")) {
    SensitivityRow s;
    s.delta = row.at("delta").get<int>();
    s.metric = row.at("metric").get<std::string>() == "ATPM" ? Metric::ATPM : Metric::AMPM;
    s.baseline_mean = row.at("baseline_mean").get<double>();
    s.alt_mean = row.at("alt_mean").get<double>();
    s.apc = row.at("apc").get<double>();
    if (!row.at("t_stat").is_null()) s.t_stat = row.at("t_stat").get<double>();
    if (!row.at("p_value").is_null()) s.p_value = row.at("p_value").get<double>();
    s.significant = row.at("significant").get<bool>();
    s.degenerate = row.value("degenerate", false);
    r.rows.push_back(s);
  }
}

void to_json(Json& j, const TTestResult& t) {
  j = Json{{"n", t.n},           {"mean_diff", t.mean_diff}, {"sd_diff", t.sd_diff},
           {"t_stat", t.t_stat}, {"df", t.df},               {"p_value", t.p_value},
           {"significant", t.significant}};
}

}  // namespace supply

Json parse_json(std::string_view text, std::string_view what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(ErrorCode::SchemaError, std::string(what) + ": " + e.what());
  }
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError(ErrorCode::Io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DomainError(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw DomainError(ErrorCode::Io, "cannot replace " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace careflow
