#include "careflow/server.hpp"

#include <cstdio>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "careflow/error.hpp"
#include "careflow/log.hpp"

namespace careflow::service {

std::string_view to_string(JobState s) noexcept {
  switch (s) {
    case JobState::Pending: return "Pending";
    case JobState::Running: return "Running";
    case JobState::Done: return "Done";
    case JobState::Failed: return "Failed";
  }
  return "?";
}

namespace {

std::optional<JobState> parse_job_state(std::string_view s) {
  for (auto st : {JobState::Pending, JobState::Running, JobState::Done, JobState::Failed}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

std::string job_name(const std::string& id) { return "jobs/" + id + ".json"; }

}  // namespace

void to_json(Json& j, const Job& job) {
  j = Json{{"id", job.id},
           {"kind", job.kind},
           {"discipline", job.discipline},
           {"state", to_string(job.state)},
           {"request", job.request}};
  if (job.state == JobState::Done) j["result"] = job.result;
  if (job.state == JobState::Failed) j["error"] = job.error;
}

JobManager::JobManager(const Store& store) : store_(store) {
  for (const auto& name : store_.list("jobs")) {
    const auto j = store_.load_json(name);
    if (!j) continue;
    Job job;
    job.id = j->value("id", std::string{});
    job.kind = j->value("kind", std::string{});
    job.discipline = j->value("discipline", std::string{});
    job.request = j->value("request", Json::object());
    job.state = parse_job_state(j->value("state", std::string{})).value_or(JobState::Failed);
    if (j->contains("result")) job.result = j->at("result");
    job.error = j->value("error", std::string{});
    if (job.state == JobState::Pending || job.state == JobState::Running) {
      job.state = JobState::Failed;
      job.error = "interrupted by restart";
      store_.save_json(job_name(job.id), job);
    }
    unsigned long n = 0;
    if (std::sscanf(job.id.c_str(), "job-%lu", &n) == 1) next_ = std::max<std::size_t>(next_, n + 1);
    jobs_[job.id] = std::move(job);
  }
}

JobManager::~JobManager() { wait_all(); }

void JobManager::wait_all() {
  std::vector<std::jthread> pending;
  {
    std::lock_guard lock(mu_);
    pending.swap(workers_);
  }
  for (auto& t : pending) {
    if (t.joinable()) t.join();
  }
}

void JobManager::set(const Job& job) {
  {
    std::lock_guard lock(mu_);
    jobs_[job.id] = job;
  }
  store_.save_json(job_name(job.id), job);
}

std::optional<std::string> JobManager::submit(const std::string& kind,
                                              const std::string& discipline, Json request,
                                              std::function<Json()> work, bool exclusive) {
  Job job;
  {
    std::lock_guard lock(mu_);
    if (exclusive) {
      for (const auto& [id, j] : jobs_) {
        if (j.kind == kind && j.discipline == discipline &&
            (j.state == JobState::Pending || j.state == JobState::Running)) {
          return std::nullopt;
        }
      }
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "job-%06zu", next_++);
    job.id = buf;
    job.kind = kind;
    job.discipline = discipline;
    job.request = std::move(request);
    jobs_[job.id] = job;
  }
  store_.save_json(job_name(job.id), job);

  std::lock_guard lock(mu_);
  workers_.emplace_back([this, job, work = std::move(work)]() mutable {
    job.state = JobState::Running;
    set(job);
    try {
      job.result = work();
      job.state = JobState::Done;
    } catch (const std::exception& e) {
      job.error = e.what();
      job.state = JobState::Failed;
      log::warn("job " + job.id + " failed: " + job.error);
    }
    set(job);
  });
  return job.id;
}

std::optional<Job> JobManager::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------

namespace {

Reply error_reply(int status, std::string_view code, const std::string& message) {
  return {status, Json{{"error", code}, {"message", message}}};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::SchemaError:
    case ErrorCode::EmptyDataset:
    case ErrorCode::UnresolvableAddress:
      return 400;
    case ErrorCode::Io:
      return 500;
    default:
      return 422;
  }
}

/// Discipline from a request field; throws a 404-mapped lookup failure.
struct UnknownDiscipline {
  std::string name;
};

ingest::Discipline discipline_of(const std::string& name) {
  const auto d = ingest::parse_discipline(name);
  if (!d) throw UnknownDiscipline{name};
  return *d;
}

std::string require_string(const Json& req, const char* key) {
  if (!req.contains(key) || !req.at(key).is_string()) {
    throw DomainError(ErrorCode::SchemaError, std::string("'") + key + "' must be a string");
  }
  return req.at(key).get<std::string>();
}

template <typename T>
T optional_field(const Json& req, const char* key, T fallback) {
  if (!req.contains(key) || req.at(key).is_null()) return fallback;
  try {
    return req.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DomainError(ErrorCode::SchemaError, std::string("'") + key + "' has the wrong type");
  }
}

}  // namespace

Api::Api(Config config)
    : config_(std::move(config)), store_(config_.data_dir), jobs_(store_) {}

std::optional<allocation::Baseline> Api::load_baseline(ingest::Discipline d) const {
  const auto j = store_.load_json(baseline_name(d));
  if (!j) return std::nullopt;
  return decode_json<allocation::Baseline>(*j, "stored baseline");
}

DisciplineData Api::load_discipline(ingest::Discipline d) const {
  const auto records = store_.load_dataset(d);
  if (!records) throw UnknownDiscipline{std::string(ingest::to_string(d))};
  return prepare_discipline(*records, d, config_);
}

Reply Api::handle(const std::string& method, const std::string& path, const std::string& body,
                  const std::string& content_type) {
  static const std::regex baseline_re("^/v1/baselines/([A-Za-z]+)$");
  static const std::regex scenario_re("^/v1/scenarios/([A-Za-z0-9-]+)$");
  static const std::regex job_re("^/v1/jobs/([A-Za-z0-9-]+)$");
  std::smatch m;
  try {
    auto json_body = [&] {
      const auto j = parse_json(body.empty() ? "{}" : body, "request body");
      if (!j.is_object()) throw DomainError(ErrorCode::SchemaError, "request body must be an object");
      return j;
    };
    if (method == "POST" && path == "/v1/datasets") return post_dataset(body, content_type);
    if (method == "POST" && path == "/v1/tune") return post_tune(json_body());
    if (method == "POST" && path == "/v1/allocate") return post_allocate(json_body());
    if (method == "POST" && path == "/v1/scenarios") return post_scenario(json_body());
    if (std::regex_match(path, m, baseline_re)) {
      if (method == "GET") return get_baseline(m[1]);
      if (method == "POST") return post_baseline(m[1], json_body());
    }
    if (method == "GET" && std::regex_match(path, m, scenario_re)) return get_scenario(m[1]);
    if (method == "GET" && std::regex_match(path, m, job_re)) return get_job(m[1]);
    return error_reply(404, "NotFound", method + " " + path);
  } catch (const UnknownDiscipline& e) {
    return error_reply(404, "UnknownDiscipline", "no data for discipline '" + e.name + "'");
  } catch (const DomainError& e) {
    return error_reply(status_for(e.code()), to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "Internal", e.what());
  }
}

Reply Api::post_dataset(const std::string& body, const std::string& content_type) {
  std::string csv_text = body;
  if (content_type.find("json") != std::string::npos) {
    csv_text = require_string(parse_json(body, "request body"), "csv");
  }
  std::istringstream in(csv_text);
  const auto parsed = ingest::parse_visit_records(in);
  Json summary = Json::array();
  for (auto d : ingest::kAllDisciplines) {
    const auto records = ingest::filter_discipline(parsed.records, d);
    if (records.empty()) continue;
    store_.save_dataset(d, records);
    Json row{{"discipline", d}, {"records", records.size()}};
    try {
      const auto data = prepare_discipline(records, d, config_);
      row["patients"] = data.instance.patients.size();
      row["caregivers"] = data.instance.caregivers.size();
      row["gamma"] = data.gamma;
    } catch (const DomainError& e) {
      row["warning"] = e.what();
    }
    summary.push_back(std::move(row));
  }
  Json dropped = Json::array();
  for (const auto& d : parsed.dropped) dropped.push_back({{"line", d.line}, {"reason", d.reason}});
  return {201, Json{{"disciplines", std::move(summary)}, {"dropped", std::move(dropped)}}};
}

Reply Api::post_tune(const Json& req) {
  const auto d = discipline_of(require_string(req, "discipline"));
  if (!store_.load_dataset(d)) throw UnknownDiscipline{std::string(ingest::to_string(d))};
  const auto seed = optional_field<std::uint64_t>(req, "seed", config_.seed);
  auto cfg = config_;
  cfg.ga.max_iterations = optional_field<std::size_t>(req, "generations", cfg.ga.max_iterations);
  cfg.ga.population_size = optional_field<std::size_t>(req, "population", cfg.ga.population_size);
  cfg.ga.validate();

  auto work = [this, d, seed, cfg] {
    const auto data = load_discipline(d);
    const auto tune = tune_discipline(data, cfg, seed);
    store_.save_json(tune_name(d), tune);
    const auto baseline = build_baseline(data, tune.best_params, tune.seed);
    store_.save_json(baseline_name(d), baseline);
    return Json{{"tune", tune},
                {"metrics", baseline_metrics(baseline, data.instance, cfg.gamma_weighting)}};
  };
  const auto id = jobs_.submit("tune", std::string(ingest::to_string(d)), req, work, true);
  if (!id) {
    return error_reply(409, "Conflict",
                       "a tune job for " + std::string(ingest::to_string(d)) + " is already running");
  }
  return {202, Json{{"job_id", *id}, {"status_url", "/v1/jobs/" + *id}}};
}

Reply Api::get_baseline(const std::string& discipline) {
  const auto d = discipline_of(discipline);
  const auto b = load_baseline(d);
  if (!b) return error_reply(404, "NoBaseline", "no baseline for " + discipline);
  Json out{{"baseline", *b}};
  if (const auto records = store_.load_dataset(d)) {
    const auto data = prepare_discipline(*records, d, config_);
    out["metrics"] = baseline_metrics(*b, data.instance, config_.gamma_weighting);
  }
  return {200, std::move(out)};
}

Reply Api::post_baseline(const std::string& discipline, const Json& req) {
  const auto d = discipline_of(discipline);
  const auto data = load_discipline(d);
  auto params = clustering::SpectralParams::defaults_for(data.instance.caregivers.size());
  if (req.contains("params")) params = decode_json<clustering::SpectralParams>(req.at("params"), "params");
  const auto seed = optional_field<std::uint64_t>(req, "seed", config_.seed);
  const auto b = build_baseline(data, params, seed);
  store_.save_json(baseline_name(d), b);
  return {201, Json{{"baseline", b},
                    {"metrics", baseline_metrics(b, data.instance, config_.gamma_weighting)}}};
}

Reply Api::post_allocate(const Json& req) {
  const auto d = discipline_of(require_string(req, "discipline"));
  if (!req.contains("patients") || !req.at("patients").is_array()) {
    throw DomainError(ErrorCode::SchemaError, "'patients' must be an array");
  }
  std::vector<ingest::PatientNode> patients;
  std::size_t i = 0;
  for (const auto& p : req.at("patients")) {
    ++i;
    if (!p.is_object() || !p.contains("lat") || !p.contains("lon") || !p.at("lat").is_number() ||
        !p.at("lon").is_number()) {
      throw DomainError(ErrorCode::SchemaError, "patient " + std::to_string(i) + " needs numeric lat and lon");
    }
    ingest::PatientNode node;
    node.id = optional_field<std::string>(p, "id", "new-" + std::to_string(i));
    node.location = geo::GeoPoint(p.at("lat").get<double>(), p.at("lon").get<double>());
    node.weekly_visits = optional_field<int>(p, "weekly_visits", 1);
    node.visit_length = optional_field<double>(p, "visit_length", 1.0);
    if (node.weekly_visits < 1 || !(node.visit_length > 0.0)) {
      throw DomainError(ErrorCode::SchemaError, "patient " + std::to_string(i) + " has invalid demand");
    }
    patients.push_back(std::move(node));
  }
  const auto b = load_baseline(d);
  if (!b) {
    return error_reply(409, "NoBaseline",
                       "no baseline for " + std::string(ingest::to_string(d)) + "; tune first");
  }
  const auto retries = optional_field<std::size_t>(req, "max_retries", config_.max_retries);
  const auto result =
      allocation::run_weekly_allocation(*b, patients, allocation::WorkloadModel::from(*b), retries);
  return {200, Json(result)};
}

Reply Api::post_scenario(const Json& req) {
  const auto d = discipline_of(require_string(req, "discipline"));
  if (!req.contains("delta") || !req.at("delta").is_number_integer()) {
    throw DomainError(ErrorCode::SchemaError, "'delta' must be an integer");
  }
  const int delta = req.at("delta").get<int>();
  if (delta == 0) throw DomainError(ErrorCode::InvalidArgument, "delta must be nonzero");
  supply::SensitivityConfig sc;
  sc.deltas = {delta};
  sc.replications = optional_field<std::size_t>(req, "replications", config_.replications);
  sc.alpha = optional_field<double>(req, "alpha", config_.alpha);
  sc.seed = optional_field<std::uint64_t>(req, "seed", config_.seed);
  sc.weighting = config_.gamma_weighting;
  sc.apc_form = config_.apc_form;
  sc.threads = config_.threads;
  if (sc.replications < 2) throw DomainError(ErrorCode::InvalidArgument, "replications must be at least 2");
  if (!(sc.alpha > 0.0 && sc.alpha < 1.0)) throw DomainError(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  if (!store_.load_dataset(d)) throw UnknownDiscipline{std::string(ingest::to_string(d))};
  if (!load_baseline(d)) {
    return error_reply(409, "NoBaseline",
                       "no baseline for " + std::string(ingest::to_string(d)) + "; tune first");
  }
  auto work = [this, d, sc] {
    const auto data = load_discipline(d);
    const auto b = load_baseline(d);
    if (!b) throw DomainError(ErrorCode::EmptyBaseline, "baseline disappeared");
    return Json(supply::run_sensitivity(data.instance, *b, sc));
  };
  const auto id = jobs_.submit("scenario", std::string(ingest::to_string(d)), req, work, false);
  return {202, Json{{"scenario_id", *id}, {"job_id", *id}, {"status_url", "/v1/scenarios/" + *id}}};
}

Reply Api::get_scenario(const std::string& id) {
  const auto job = jobs_.get(id);
  if (!job || job->kind != "scenario") return error_reply(404, "NotFound", "no scenario " + id);
  Json out = *job;
  return {job->state == JobState::Done || job->state == JobState::Failed ? 200 : 202, out};
}

Reply Api::get_job(const std::string& id) {
  const auto job = jobs_.get(id);
  if (!job) return error_reply(404, "NotFound", "no job " + id);
  return {200, Json(*job)};
}

void Api::mount(httplib::Server& server) {
  const auto origin = config_.cors_origin;
  auto forward = [this, origin](const httplib::Request& req, httplib::Response& res) {
    const auto reply = handle(req.method, req.path, req.body, req.get_header_value("Content-Type"));
    res.status = reply.status;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_content(reply.body.dump(), "application/json");
  };
  server.Get(R"(/v1/.*)", forward);
  server.Post(R"(/v1/.*)", forward);
  server.Options(R"(/v1/.*)", [origin](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
}

}  // namespace careflow::service
