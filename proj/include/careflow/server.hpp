#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "careflow/json_io.hpp"
#include "careflow/service.hpp"

namespace httplib {
class Server;
}

namespace careflow::service {

enum class JobState { Pending, Running, Done, Failed };
std::string_view to_string(JobState s) noexcept;

struct Job {
  std::string id;
  std::string kind;  // "tune" or "scenario"
  std::string discipline;
  JobState state = JobState::Pending;
  Json request;
  Json result;
  std::string error;
};

void to_json(Json& j, const Job& job);

/// Background jobs with ids "job-000001", "job-000002", ... persisted under
/// jobs/ in the store. Jobs left unfinished by an earlier process load as
/// Failed.
class JobManager {
 public:
  explicit JobManager(const Store& store);
  ~JobManager();
  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  /// Returns nullopt when a job of the same kind and discipline is still
  /// pending or running and `exclusive` is set.
  std::optional<std::string> submit(const std::string& kind, const std::string& discipline,
                                    Json request, std::function<Json()> work, bool exclusive);
  std::optional<Job> get(const std::string& id) const;
  void wait_all();

 private:
  void set(const Job& job);

  const Store& store_;
  mutable std::mutex mu_;
  std::map<std::string, Job> jobs_;
  std::vector<std::jthread> workers_;
  std::size_t next_ = 1;
};

struct Reply {
  int status = 200;
  Json body;
};

/// REST handlers over a Store. `handle` is transport-independent; `mount`
/// wires it into an httplib server with CORS.
class Api {
 public:
  explicit Api(Config config);

  Reply handle(const std::string& method, const std::string& path, const std::string& body,
               const std::string& content_type = "application/json");
  void mount(httplib::Server& server);
  void wait_for_jobs() { jobs_.wait_all(); }
  const Config& config() const noexcept { return config_; }

 private:
  Reply post_dataset(const std::string& body, const std::string& content_type);
  Reply post_tune(const Json& req);
  Reply get_baseline(const std::string& discipline);
  Reply post_baseline(const std::string& discipline, const Json& req);
  Reply post_allocate(const Json& req);
  Reply post_scenario(const Json& req);
  Reply get_scenario(const std::string& id);
  Reply get_job(const std::string& id);

  std::optional<allocation::Baseline> load_baseline(ingest::Discipline d) const;
  DisciplineData load_discipline(ingest::Discipline d) const;

  Config config_;
  Store store_;
  JobManager jobs_;
};

}  // namespace careflow::service
