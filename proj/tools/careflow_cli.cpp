// careflow: command-line driver for the clustering, tuning, allocation and
// supply-analysis pipeline.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include "careflow/csv.hpp"
#include "careflow/error.hpp"
#include "careflow/json_io.hpp"
#include "careflow/log.hpp"
#include "careflow/random.hpp"
#include "careflow/server.hpp"
#include "careflow/service.hpp"

// httplib pulls in <resolv.h>, whose _res macro collides with Eigen internals.
#include <CLI11.hpp>
#include <httplib.h>

using namespace careflow;

namespace {

ingest::Discipline require_discipline(const std::string& name) {
  const auto d = ingest::parse_discipline(name);
  if (!d) throw DomainError(ErrorCode::InvalidArgument, "unknown discipline '" + name + "'");
  return *d;
}

std::vector<ingest::VisitRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError(ErrorCode::Io, "cannot open " + path);
  auto parsed = ingest::parse_visit_records(in);
  if (!parsed.dropped.empty()) {
    log::warn(std::to_string(parsed.dropped.size()) + " malformed row(s) dropped from " + path);
  }
  return std::move(parsed.records);
}

std::optional<ingest::CaregiverRoster> read_roster_opt(const std::string& path) {
  if (path.empty()) return std::nullopt;
  std::ifstream in(path);
  if (!in) throw DomainError(ErrorCode::Io, "cannot open " + path);
  return ingest::read_roster(in);
}

void write_text(const std::string& path, const std::string& text) {
  write_file_atomic(path, text);
  log::info("wrote " + path);
}

void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

allocation::Baseline read_baseline(const std::string& path) {
  return decode_json<allocation::Baseline>(parse_json(read_file(path), path), path);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 7;
  std::size_t caregivers = 4;
  std::size_t patients = 40;
  std::size_t weeks = 4;
  double spread = 2.0;
  std::string discipline = "RN";
  std::string out;
  std::string roster_out;
  std::string week_out;
  std::size_t week_patients = 10;
  std::string spec;
  std::set<std::string> given;  // flags set explicitly; these win over --spec
};

int run_synth(const SynthArgs& a) {
  ingest::SynthConfig sc;
  sc.discipline = require_discipline(a.discipline);
  sc.n_caregivers = a.caregivers;
  sc.n_patients = a.patients;
  sc.weeks = a.weeks;
  sc.cluster_spread = a.spread;
  if (!a.spec.empty()) {
    sc = decode_json<ingest::SynthConfig>(parse_json(read_file(a.spec), a.spec), a.spec);
    if (a.given.contains("--discipline")) sc.discipline = require_discipline(a.discipline);
    if (a.given.contains("--caregivers")) sc.n_caregivers = a.caregivers;
    if (a.given.contains("--patients")) sc.n_patients = a.patients;
    if (a.given.contains("--weeks")) sc.weeks = a.weeks;
    if (a.given.contains("--spread")) sc.cluster_spread = a.spread;
  }
  const auto ds = ingest::generate_synthetic_dataset(sc, a.seed);
  std::ostringstream data;
  ingest::write_visit_records(data, ds.records);
  write_text(a.out, data.str());
  if (!a.roster_out.empty()) {
    std::ostringstream roster;
    ingest::write_roster(roster, ds.truth.roster);
    write_text(a.roster_out, roster.str());
  }
  if (!a.week_out.empty()) {
    // New intake scattered around the same planted centers.
    Rng rng(mix_seed(a.seed, 0x3EE));
    std::ostringstream week;
    week << "patient_id,lat,lon,weekly_visits,visit_length\n";
    for (std::size_t i = 0; i < a.week_patients; ++i) {
      const auto& centre = ds.truth.centers[rng.index(ds.truth.centers.size())];
      const auto p = geo::destination_point(centre, rng.uniform(0.0, 2.0 * std::numbers::pi),
                                            sc.cluster_spread * std::sqrt(rng.uniform()));
      const int visits = 1 + static_cast<int>(rng.index(3));
      const double length = 0.75 + 0.25 * static_cast<double>(rng.index(4));
      char id[16];
      std::snprintf(id, sizeof id, "W%04zu", i + 1);
      week << csv::join({id, csv::format_double(p.latitude()), csv::format_double(p.longitude()),
                         std::to_string(visits), csv::format_double(length)})
           << '\n';
    }
    write_text(a.week_out, week.str());
  }
  std::cout << ds.records.size() << " legs, " << ds.truth.patient_ids.size() << " patients, "
            << ds.truth.roster.caregivers.size() << " caregivers -> " << a.out << '\n';
  return 0;
}

// --- ingest ----------------------------------------------------------------

struct IngestArgs {
  std::string in;
  std::string out_dir = ".";
  std::string split_date;
};

int run_ingest(const IngestArgs& a, const service::Config& cfg) {
  std::ifstream in(a.in);
  if (!in) throw DomainError(ErrorCode::Io, "cannot open " + a.in);
  const auto parsed = ingest::parse_visit_records(in);
  Json summary{{"input", a.in}, {"records", parsed.records.size()}};
  Json rows = Json::array();
  for (auto d : ingest::kAllDisciplines) {
    const auto recs = ingest::filter_discipline(parsed.records, d);
    if (recs.empty()) continue;
    Json row{{"discipline", d}, {"records", recs.size()}};
    const auto g = ingest::compute_gamma(recs, d, cfg.gamma_reduction);
    row["gamma"] = g;
    try {
      const auto inst = ingest::build_instance(recs, d, cfg.instance_config());
      row["patients"] = inst.patients.size();
      row["caregivers"] = inst.caregivers.size();
    } catch (const DomainError& e) {
      row["warning"] = e.what();
    }
    std::cout << ingest::to_string(d) << ": " << recs.size() << " legs, gamma_curr "
              << fixed(g.gamma_curr, 3) << ", gamma_lim " << fixed(g.gamma_lim, 3) << '\n';
    rows.push_back(std::move(row));
  }
  summary["disciplines"] = std::move(rows);
  Json dropped = Json::array();
  for (const auto& d : parsed.dropped) dropped.push_back({{"line", d.line}, {"reason", d.reason}});
  summary["dropped"] = std::move(dropped);

  if (!a.split_date.empty()) {
    const auto cutoff = ingest::parse_date(a.split_date);
    if (!cutoff) throw DomainError(ErrorCode::InvalidArgument, "bad --split-date " + a.split_date);
    const auto split = ingest::split_train_test(parsed.records, *cutoff);
    std::ostringstream train, test;
    ingest::write_visit_records(train, split.train);
    ingest::write_visit_records(test, split.test);
    write_text(a.out_dir + "/train.csv", train.str());
    write_text(a.out_dir + "/test.csv", test.str());
    summary["split"] = {{"cutoff", a.split_date},
                        {"train", split.train.size()},
                        {"test", split.test.size()}};
  }
  write_json(a.out_dir + "/ingest-summary.json", summary);
  return 0;
}

// --- tune / baseline --------------------------------------------------------

struct TuneArgs {
  std::string discipline;
  std::string in;
  std::string roster;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> generations;
  std::optional<std::size_t> population;
  std::string out;
};

int run_tune(const TuneArgs& a, service::Config cfg) {
  const auto d = require_discipline(a.discipline);
  if (a.generations) cfg.ga.max_iterations = *a.generations;
  if (a.population) cfg.ga.population_size = *a.population;
  cfg.ga.validate();
  const auto records = read_records(a.in);
  const auto data = service::prepare_discipline(records, d, cfg, read_roster_opt(a.roster));
  const auto result = service::tune_discipline(data, cfg, a.seed.value_or(cfg.seed));
  const auto out = a.out.empty() ? "tune-" + std::string(ingest::to_string(d)) + ".json" : a.out;
  write_json(out, result);
  std::cout << ingest::to_string(d) << ": best AMPM " << fixed(result.best_fitness, 4)
            << " after " << result.evaluations << " evaluations -> " << out << '\n';
  return 0;
}

struct BaselineArgs {
  std::string discipline;
  std::string in;
  std::string roster;
  std::string tune;
  std::optional<std::uint64_t> seed;
  std::string created_at;
  std::string out;
};

int run_baseline(const BaselineArgs& a, const service::Config& cfg) {
  const auto d = require_discipline(a.discipline);
  const auto records = read_records(a.in);
  const auto data = service::prepare_discipline(records, d, cfg, read_roster_opt(a.roster));
  auto params = clustering::SpectralParams::defaults_for(data.instance.caregivers.size());
  std::uint64_t seed = cfg.seed;
  if (!a.tune.empty()) {
    const auto t = decode_json<tuner::TuneResult>(parse_json(read_file(a.tune), a.tune), a.tune);
    if (t.discipline != d) {
      throw DomainError(ErrorCode::InvalidArgument, a.tune + " was tuned for another discipline");
    }
    params = t.best_params;
    seed = t.seed;
  }
  if (a.seed) seed = *a.seed;
  const auto b = service::build_baseline(data, params, seed, a.created_at);
  const auto out = a.out.empty() ? "baseline-" + std::string(ingest::to_string(d)) + ".json" : a.out;
  write_json(out, b);
  const auto m = service::baseline_metrics(b, data.instance, cfg.gamma_weighting);
  std::cout << ingest::to_string(d) << ": AMPM " << fixed(m.ampm, 4) << ", ATPM " << fixed(m.atpm, 4)
            << ", gamma " << fixed(b.gamma, 4) << " -> " << out << '\n';
  return 0;
}

// --- allocate ---------------------------------------------------------------

struct AllocateArgs {
  std::string baseline;
  std::string patients;
  std::string out;
  std::string report;
  std::optional<std::size_t> max_retries;
};

int run_allocate(const AllocateArgs& a, const service::Config& cfg) {
  const auto b = read_baseline(a.baseline);
  std::ifstream in(a.patients);
  if (!in) throw DomainError(ErrorCode::Io, "cannot open " + a.patients);
  geo::GeocodeStats stats;
  const auto patients = service::read_patients(in, cfg, &stats);
  if (stats.fallback > 0) {
    log::warn(std::to_string(stats.fallback) + " patient(s) placed at zip centroids");
  }
  const auto result = allocation::run_weekly_allocation(
      b, patients, allocation::WorkloadModel::from(b), a.max_retries.value_or(cfg.max_retries));
  std::ostringstream csv_out;
  service::write_allocation_csv(csv_out, result);
  const auto out =
      a.out.empty() ? "allocation-" + std::string(ingest::to_string(b.discipline)) + ".csv" : a.out;
  write_text(out, csv_out.str());
  if (!a.report.empty()) write_json(a.report, result);
  std::cout << patients.size() << " patient(s) allocated, " << result.retries << " retry round(s), "
            << (result.report.feasible() ? "feasible" : "infeasible") << " -> " << out << '\n';
  return 0;
}

// --- sensitivity -------------------------------------------------------------

struct SensitivityArgs {
  std::string baseline;
  std::string in;
  std::string roster;
  std::vector<int> deltas = {-1, 1};
  std::optional<std::size_t> replications;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int run_sensitivity(const SensitivityArgs& a, const service::Config& cfg) {
  const auto b = read_baseline(a.baseline);
  const auto records = read_records(a.in);
  const auto data =
      service::prepare_discipline(records, b.discipline, cfg, read_roster_opt(a.roster));
  supply::SensitivityConfig sc;
  sc.deltas = a.deltas;
  sc.replications = a.replications.value_or(cfg.replications);
  sc.alpha = a.alpha.value_or(cfg.alpha);
  sc.seed = a.seed.value_or(cfg.seed);
  sc.weighting = cfg.gamma_weighting;
  sc.apc_form = cfg.apc_form;
  sc.threads = cfg.threads;
  const auto report = supply::run_sensitivity(data.instance, b, sc);
  const auto out =
      a.out.empty() ? "sensitivity-" + std::string(ingest::to_string(b.discipline)) + ".json" : a.out;
  write_json(out, report);

  std::cout << "delta  metric  baseline     alt          APC%      t        p        sig\n";
  for (const auto& r : report.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%+5d  %-6s  %-11.4f  %-11.4f  %+8.3f  %-7s  %-7s  %s\n",
                  r.delta, std::string(supply::to_string(r.metric)).c_str(), r.baseline_mean,
                  r.alt_mean, r.apc, r.t_stat ? fixed(*r.t_stat, 3).c_str() : "n/a",
                  r.p_value ? fixed(*r.p_value, 4).c_str() : "n/a", r.significant ? "yes" : "no");
    std::cout << line;
  }
  return 0;
}

// --- serve -------------------------------------------------------------------

int run_serve(const std::string& host, int port, const service::Config& cfg) {
  service::Api api(cfg);
  httplib::Server server;
  api.mount(server);
  std::cout << "listening on http://" << host << ':' << port << " (data in " << cfg.data_dir
            << ")" << std::endl;
  if (!server.listen(host, port)) {
    throw DomainError(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"careflow: travel-aware caregiver clustering, allocation and supply analysis"};
  app.require_subcommand(1);
  std::string config_path;
  int verbosity = 0;
  std::optional<std::size_t> threads;
  app.add_option("--config", config_path, "JSON config file (overrides CAREFLOW_CONFIG)");
  app.add_flag("-v,--verbose", verbosity, "More logging (repeat for debug)");
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic visit dataset");
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_option("--caregivers", synth.caregivers, "Caregiver count")->capture_default_str();
  s->add_option("--patients", synth.patients, "Patient count")->capture_default_str();
  s->add_option("--weeks", synth.weeks, "Weeks of visits")->capture_default_str();
  s->add_option("--spread", synth.spread, "Cluster radius in miles")->capture_default_str();
  s->add_option("--discipline", synth.discipline, "Discipline code")->capture_default_str();
  s->add_option("--out", synth.out, "Visit CSV to write")->required();
  s->add_option("--roster-out", synth.roster_out, "Also write the caregiver roster CSV");
  s->add_option("--week-out", synth.week_out, "Also write a CSV of new weekly patients");
  s->add_option("--week-patients", synth.week_patients, "New patients in --week-out")
      ->capture_default_str();
  s->add_option("--spec", synth.spec, "JSON generator config; explicit flags override it")
      ->check(CLI::ExistingFile);

  IngestArgs ing;
  auto* i = app.add_subcommand("ingest", "Validate a visit CSV and report per-discipline gamma");
  i->add_option("--in", ing.in, "Visit CSV")->required();
  i->add_option("--out-dir", ing.out_dir, "Directory for outputs")->capture_default_str();
  i->add_option("--split-date", ing.split_date, "Write train.csv/test.csv split at YYYY-MM-DD");

  TuneArgs tune;
  auto* t = app.add_subcommand("tune", "GA search over spectral-clustering hyperparameters");
  t->add_option("--discipline", tune.discipline, "Discipline code")->required();
  t->add_option("--in", tune.in, "Visit CSV")->required();
  t->add_option("--roster", tune.roster, "Caregiver roster CSV");
  t->add_option("--seed", tune.seed, "Random seed");
  t->add_option("--generations", tune.generations, "GA iterations");
  t->add_option("--population", tune.population, "GA population size");
  t->add_option("--out", tune.out, "Output (default tune-<D>.json)");

  BaselineArgs base;
  auto* b = app.add_subcommand("baseline", "Cluster with tuned or default params and attach caregivers");
  b->add_option("--discipline", base.discipline, "Discipline code")->required();
  b->add_option("--in", base.in, "Visit CSV")->required();
  b->add_option("--roster", base.roster, "Caregiver roster CSV");
  b->add_option("--tune", base.tune, "Tune result JSON (default params when absent)");
  b->add_option("--seed", base.seed, "Clustering seed (defaults to the tune seed)");
  b->add_option("--created-at", base.created_at, "Timestamp label stored in the baseline");
  b->add_option("--out", base.out, "Output (default baseline-<D>.json)");

  AllocateArgs alloc;
  auto* al = app.add_subcommand("allocate", "Allocate new patients against a baseline");
  al->add_option("--baseline", alloc.baseline, "Baseline JSON")->required();
  al->add_option("--patients", alloc.patients, "New patients CSV")->required();
  al->add_option("--out", alloc.out, "Allocation CSV (default allocation-<D>.csv)");
  al->add_option("--report", alloc.report, "Also write the feasibility report JSON");
  al->add_option("--max-retries", alloc.max_retries, "Exclusion retry rounds");

  SensitivityArgs sens;
  auto* se = app.add_subcommand("sensitivity", "Caregiver-supply what-if analysis");
  se->add_option("--baseline", sens.baseline, "Baseline JSON")->required();
  se->add_option("--in", sens.in, "Visit CSV the baseline was built from")->required();
  se->add_option("--roster", sens.roster, "Caregiver roster CSV");
  se->add_option("--deltas", sens.deltas, "Caregiver count changes, e.g. --deltas=-1,1")
      ->delimiter(',')
      ->capture_default_str();
  se->add_option("--replications", sens.replications, "Replicates per scenario");
  se->add_option("--alpha", sens.alpha, "Significance level");
  se->add_option("--seed", sens.seed, "Random seed");
  se->add_option("--out", sens.out, "Output (default sensitivity-<D>.json)");

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* sv = app.add_subcommand("serve", "Run the REST API");
  sv->add_option("--host", host)->capture_default_str();
  sv->add_option("--port", port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    log::set_level(verbosity >= 2 ? log::Level::Debug
                                  : verbosity == 1 ? log::Level::Info : log::Level::Warn);
    auto cfg = config_path.empty() ? service::config_from_env() : service::load_config(config_path);
    if (threads) cfg.threads = *threads;
    if (*s) {
      for (const char* flag : {"--discipline", "--caregivers", "--patients", "--weeks", "--spread"}) {
        if (s->count(flag) > 0) synth.given.insert(flag);
      }
      return run_synth(synth);
    }
    if (*i) return run_ingest(ing, cfg);
    if (*t) return run_tune(tune, cfg);
    if (*b) return run_baseline(base, cfg);
    if (*al) return run_allocate(alloc, cfg);
    if (*se) return run_sensitivity(sens, cfg);
    if (*sv) return run_serve(host, port, cfg);
  } catch (const DomainError& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
