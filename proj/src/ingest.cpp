#include "careflow/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "careflow/csv.hpp"
#include "careflow/error.hpp"
#include "careflow/log.hpp"
#include "careflow/random.hpp"

namespace careflow::ingest {

namespace {

std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

using Coord = std::pair<double, double>;

Coord key(const geo::GeoPoint& p) { return {p.latitude(), p.longitude()}; }

/// Most frequent coordinate, ties broken by first appearance.
geo::GeoPoint mode_point(const std::vector<geo::GeoPoint>& pts) {
  std::map<Coord, std::pair<std::size_t, std::size_t>> counts;  // count, first index
  for (std::size_t i = 0; i < pts.size(); ++i) {
    auto [it, inserted] = counts.try_emplace(key(pts[i]), 0, i);
    it->second.first += 1;
  }
  std::size_t best_idx = 0;
  std::size_t best_count = 0;
  for (const auto& [coord, cf] : counts) {
    if (cf.first > best_count || (cf.first == best_count && cf.second < best_idx)) {
      best_count = cf.first;
      best_idx = cf.second;
    }
  }
  return pts.at(best_idx);
}

long week_index(Date d) {
  // Weeks start on Monday; 1970-01-01 was a Thursday.
  const long days = d.time_since_epoch().count();
  const long shifted = days + 3;
  return shifted >= 0 ? shifted / 7 : -((-shifted + 6) / 7);
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  auto parse_part = [&](std::size_t off, std::size_t len, auto& out) {
    auto [ptr, ec] = std::from_chars(text.data() + off, text.data() + off + len, out);
    return ec == std::errc{} && ptr == text.data() + off + len;
  };
  if (!parse_part(0, 4, y) || !parse_part(5, 2, m) || !parse_part(8, 2, d)) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string_view to_string(Discipline d) noexcept {
  switch (d) {
    case Discipline::RN: return "RN";
    case Discipline::PT: return "PT";
    case Discipline::PTA: return "PTA";
    case Discipline::CNA: return "CNA";
    case Discipline::LPN: return "LPN";
    case Discipline::OT: return "OT";
    case Discipline::COTA: return "COTA";
    case Discipline::CH: return "CH";
    case Discipline::SLP: return "SLP";
    case Discipline::MSW: return "MSW";
    case Discipline::BSW: return "BSW";
  }
  return "?";
}

std::optional<Discipline> parse_discipline(std::string_view text) {
  for (auto d : kAllDisciplines) {
    if (to_string(d) == text) return d;
  }
  return std::nullopt;
}

std::string_view to_string(LegKind k) noexcept {
  return k == LegKind::HomeLeg ? "HomeLeg" : "PatientLeg";
}

std::optional<LegKind> parse_leg_kind(std::string_view text) {
  const auto t = lower(text);
  if (t == "homeleg" || t == "home") return LegKind::HomeLeg;
  if (t == "patientleg" || t == "patient") return LegKind::PatientLeg;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

ParseResult parse_visit_records(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) {
      header = csv::split_line(line);
      break;
    }
  }
  if (header.empty()) throw DomainError(ErrorCode::EmptyDataset, "visit file is empty");

  std::map<std::string, std::size_t, std::less<>> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(header[i], i);
  std::vector<std::string> missing;
  std::array<std::size_t, kVisitColumns.size()> idx{};
  for (std::size_t c = 0; c < kVisitColumns.size(); ++c) {
    auto it = column.find(kVisitColumns[c]);
    if (it == column.end()) {
      missing.emplace_back(kVisitColumns[c]);
    } else {
      idx[c] = it->second;
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing required columns:";
    for (const auto& m : missing) msg += " " + m;
    throw DomainError(ErrorCode::SchemaError, msg);
  }

  ParseResult result;
  std::size_t data_rows = 0;
  auto drop = [&](std::string reason) {
    log::warn("dropping line " + std::to_string(line_no) + ": " + reason);
    result.dropped.push_back({line_no, std::move(reason)});
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++data_rows;
    const auto f = csv::split_line(line);
    if (f.size() != header.size()) {
      drop("expected " + std::to_string(header.size()) + " fields, got " +
           std::to_string(f.size()));
      continue;
    }
    VisitRecord r;
    r.caregiver_id = f[idx[0]];
    r.patient_id = f[idx[1]];
    if (r.caregiver_id.empty() || r.patient_id.empty()) {
      drop("empty caregiver_id or patient_id");
      continue;
    }
    auto disc = parse_discipline(f[idx[2]]);
    if (!disc) {
      drop("unknown discipline '" + f[idx[2]] + "'");
      continue;
    }
    r.discipline = *disc;
    auto date = parse_date(f[idx[3]]);
    if (!date) {
      drop("bad visit_date '" + f[idx[3]] + "'");
      continue;
    }
    r.visit_date = *date;
    auto len = parse_number(f[idx[4]]);
    if (!len || *len <= 0.0) {
      drop("visit_length_hours must be positive");
      continue;
    }
    r.visit_length = *len;
    auto olat = parse_number(f[idx[5]]);
    auto olon = parse_number(f[idx[6]]);
    auto dlat = parse_number(f[idx[7]]);
    auto dlon = parse_number(f[idx[8]]);
    if (!olat || !olon || !dlat || !dlon) {
      drop("non-numeric coordinate");
      continue;
    }
    try {
      r.origin = geo::GeoPoint(*olat, *olon);
      r.destination = geo::GeoPoint(*dlat, *dlon);
    } catch (const DomainError& e) {
      drop(e.what());
      continue;
    }
    auto leg = parse_leg_kind(f[idx[9]]);
    if (!leg) {
      drop("unknown leg_kind '" + f[idx[9]] + "'");
      continue;
    }
    r.leg_kind = *leg;
    result.records.push_back(std::move(r));
  }
  if (data_rows == 0) throw DomainError(ErrorCode::EmptyDataset, "visit file has no data rows");
  return result;
}

void write_visit_records(std::ostream& out, std::span<const VisitRecord> records) {
  for (std::size_t c = 0; c < kVisitColumns.size(); ++c) {
    out << (c ? "," : "") << kVisitColumns[c];
  }
  out << '\n';
  for (const auto& r : records) {
    out << csv::join({r.caregiver_id, r.patient_id, std::string(to_string(r.discipline)),
                      format_date(r.visit_date), csv::format_double(r.visit_length),
                      csv::format_double(r.origin.latitude()),
                      csv::format_double(r.origin.longitude()),
                      csv::format_double(r.destination.latitude()),
                      csv::format_double(r.destination.longitude()),
                      std::string(to_string(r.leg_kind))})
        << '\n';
  }
}

std::vector<VisitRecord> filter_discipline(std::span<const VisitRecord> records, Discipline d) {
  std::vector<VisitRecord> out;
  for (const auto& r : records) {
    if (r.discipline == d) out.push_back(r);
  }
  return out;
}

SplitResult split_train_test(std::span<const VisitRecord> records, Date cutoff) {
  if (records.empty()) throw DomainError(ErrorCode::EmptyDataset, "no records to split");
  SplitResult out;
  for (const auto& r : records) {
    (r.visit_date < cutoff ? out.train : out.test).push_back(r);
  }
  if (out.train.empty() || out.test.empty()) {
    out.one_side_empty = true;
    log::warn("cutoff " + format_date(cutoff) + " lies outside the record range; " +
              (out.train.empty() ? "train" : "test") + " split is empty");
  }
  return out;
}

// ---------------------------------------------------------------------------

GammaProfile gamma_from_counts(Discipline d, std::size_t n_total, std::size_t n_home,
                               double reduction) {
  if (n_total == 0) {
    throw DomainError(ErrorCode::NoTravelData,
                      "no travel legs for " + std::string(to_string(d)));
  }
  if (n_home > n_total) {
    throw DomainError(ErrorCode::InvalidArgument, "home legs exceed total legs");
  }
  if (!(reduction >= 0.0 && reduction <= 1.0)) {
    throw DomainError(ErrorCode::InvalidArgument, "gamma reduction must lie in [0, 1]");
  }
  GammaProfile g;
  g.discipline = d;
  g.n_total = n_total;
  g.n_home = n_home;
  g.gamma_curr = static_cast<double>(n_home) / static_cast<double>(n_total);
  g.gamma_lim = (1.0 - reduction) * g.gamma_curr;
  return g;
}

GammaProfile compute_gamma(std::span<const VisitRecord> records, Discipline d,
                           double reduction) {
  std::size_t total = 0;
  std::size_t home = 0;
  for (const auto& r : records) {
    if (r.discipline != d) continue;
    ++total;
    if (r.leg_kind == LegKind::HomeLeg) ++home;
  }
  return gamma_from_counts(d, total, home, reduction);
}

// ---------------------------------------------------------------------------

InstanceModel InstanceModel::make(Discipline d, std::vector<PatientNode> patients,
                                  std::vector<CaregiverNode> caregivers, double travel_rate,
                                  double road_coeff) {
  if (caregivers.empty()) {
    throw DomainError(ErrorCode::NoCaregivers,
                      "no caregivers for " + std::string(to_string(d)));
  }
  if (!(travel_rate > 0.0)) {
    throw DomainError(ErrorCode::InvalidArgument, "travel rate must be positive");
  }
  std::vector<geo::LabeledPoint> nodes;
  nodes.reserve(patients.size() + caregivers.size());
  for (const auto& p : patients) {
    if (p.weekly_visits < 1) {
      throw DomainError(ErrorCode::InvalidArgument, "weekly visits must be >= 1 for " + p.id);
    }
    if (!(p.visit_length > 0.0)) {
      throw DomainError(ErrorCode::InvalidArgument, "visit length must be positive for " + p.id);
    }
    nodes.push_back({p.id, p.location});
  }
  for (const auto& c : caregivers) {
    if (c.w_min > c.w_max) {
      throw DomainError(ErrorCode::InvalidArgument, "W_min exceeds W_max for " + c.id);
    }
    nodes.push_back({c.id, c.home});
  }
  InstanceModel m;
  m.discipline = d;
  m.distance = geo::build_distance_matrix(nodes, road_coeff);
  m.patients = std::move(patients);
  m.caregivers = std::move(caregivers);
  m.travel_rate = travel_rate;
  m.road_coeff = road_coeff;
  return m;
}

std::vector<geo::GeoPoint> InstanceModel::patient_points() const {
  std::vector<geo::GeoPoint> out;
  out.reserve(patients.size());
  for (const auto& p : patients) out.push_back(p.location);
  return out;
}

std::vector<geo::LabeledPoint> InstanceModel::caregiver_points() const {
  std::vector<geo::LabeledPoint> out;
  out.reserve(caregivers.size());
  for (const auto& c : caregivers) out.push_back({c.id, c.home});
  return out;
}

const CaregiverNode* InstanceModel::find_caregiver(std::string_view id) const {
  for (const auto& c : caregivers) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

const PatientNode* InstanceModel::find_patient(std::string_view id) const {
  for (const auto& p : patients) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

CaregiverRoster read_roster(std::istream& in) {
  CaregiverRoster roster;
  std::string line;
  bool header = true;
  std::map<std::string, std::size_t> col;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = csv::split_line(line);
    if (header) {
      header = false;
      for (std::size_t i = 0; i < f.size(); ++i) col[f[i]] = i;
      for (const char* need : {"caregiver_id", "lat", "lon", "w_min", "w_max"}) {
        if (!col.count(need)) {
          throw DomainError(ErrorCode::SchemaError,
                            std::string("roster missing column ") + need);
        }
      }
      continue;
    }
    if (f.size() < col.size()) throw DomainError(ErrorCode::SchemaError, "short roster row");
    auto lat = parse_number(f[col["lat"]]);
    auto lon = parse_number(f[col["lon"]]);
    auto wmin = parse_number(f[col["w_min"]]);
    auto wmax = parse_number(f[col["w_max"]]);
    if (!lat || !lon || !wmin || !wmax) {
      throw DomainError(ErrorCode::SchemaError, "non-numeric roster row: " + line);
    }
    roster.caregivers.push_back({f[col["caregiver_id"]], geo::GeoPoint(*lat, *lon), *wmin, *wmax});
  }
  return roster;
}

void write_roster(std::ostream& out, const CaregiverRoster& roster) {
  out << "caregiver_id,lat,lon,w_min,w_max\n";
  for (const auto& c : roster.caregivers) {
    out << csv::join({c.id, csv::format_double(c.home.latitude()),
                      csv::format_double(c.home.longitude()), csv::format_double(c.w_min),
                      csv::format_double(c.w_max)})
        << '\n';
  }
}

InstanceModel build_instance(std::span<const VisitRecord> records, Discipline d,
                             const InstanceConfig& config,
                             const std::optional<CaregiverRoster>& roster) {
  std::map<std::string, std::vector<const VisitRecord*>> by_caregiver;
  for (const auto& r : records) {
    if (r.discipline == d) by_caregiver[r.caregiver_id].push_back(&r);
  }
  if (by_caregiver.empty()) {
    throw DomainError(ErrorCode::NoCaregivers,
                      "no caregivers for " + std::string(to_string(d)));
  }

  std::vector<CaregiverNode> caregivers;
  std::map<std::string, geo::GeoPoint> home_of;
  for (const auto& [cid, recs] : by_caregiver) {
    const CaregiverNode* known = nullptr;
    if (roster) {
      for (const auto& c : roster->caregivers) {
        if (c.id == cid) known = &c;
      }
    }
    if (known) {
      caregivers.push_back(*known);
    } else {
      std::vector<geo::GeoPoint> endpoints;
      for (const auto* r : recs) {
        if (r->leg_kind == LegKind::HomeLeg) {
          endpoints.push_back(r->origin);
          endpoints.push_back(r->destination);
        }
      }
      if (endpoints.empty()) {
        log::warn("caregiver " + cid + " has no home legs; using most frequent origin as home");
        for (const auto* r : recs) endpoints.push_back(r->origin);
      }
      caregivers.push_back({cid, mode_point(endpoints), config.default_w_min,
                            config.default_w_max});
    }
    home_of[cid] = caregivers.back().home;
  }

  struct PatientAcc {
    std::vector<geo::GeoPoint> arrivals;
    std::vector<geo::GeoPoint> departures;
    std::set<long> weeks;
    std::size_t visits = 0;
    double length_sum = 0.0;
    std::size_t fallback_visits = 0;
    double fallback_length = 0.0;
    std::set<long> fallback_weeks;
  };
  std::map<std::string, PatientAcc> acc;
  for (const auto& r : records) {
    if (r.discipline != d) continue;
    auto& a = acc[r.patient_id];
    const bool returning = r.destination == home_of.at(r.caregiver_id);
    if (!returning) {
      a.arrivals.push_back(r.destination);
      a.weeks.insert(week_index(r.visit_date));
      a.visits += 1;
      a.length_sum += r.visit_length;
    } else {
      a.departures.push_back(r.origin);
      a.fallback_weeks.insert(week_index(r.visit_date));
      a.fallback_visits += 1;
      a.fallback_length += r.visit_length;
    }
  }

  std::vector<PatientNode> patients;
  for (const auto& [pid, a] : acc) {
    PatientNode p;
    p.id = pid;
    const bool has_arrivals = !a.arrivals.empty();
    p.location = mode_point(has_arrivals ? a.arrivals : a.departures);
    const std::size_t visits = has_arrivals ? a.visits : a.fallback_visits;
    const std::size_t weeks = has_arrivals ? a.weeks.size() : a.fallback_weeks.size();
    const double len = has_arrivals ? a.length_sum : a.fallback_length;
    p.weekly_visits = static_cast<int>(std::ceil(static_cast<double>(visits) /
                                                 static_cast<double>(weeks) - 1e-12));
    p.weekly_visits = std::max(1, p.weekly_visits);
    p.visit_length = len / static_cast<double>(visits);
    patients.push_back(std::move(p));
  }

  for (const auto& p : patients) {
    if (home_of.count(p.id)) {
      throw DomainError(ErrorCode::InvalidArgument,
                        "patient id collides with caregiver id: " + p.id);
    }
  }
  return InstanceModel::make(d, std::move(patients), std::move(caregivers), config.travel_rate,
                             config.road_coeff);
}

// ---------------------------------------------------------------------------

SyntheticDataset generate_synthetic_dataset(const SynthConfig& config, std::uint64_t seed) {
  if (config.n_caregivers == 0 || config.n_patients == 0) {
    throw DomainError(ErrorCode::InvalidArgument, "synthetic counts must be positive");
  }
  const auto& box = config.region;
  if (!(box.lat_max > box.lat_min) || !(box.lon_max > box.lon_min)) {
    throw DomainError(ErrorCode::InvalidArgument, "region box has zero area");
  }
  if (config.weeks == 0 || config.min_weekly_visits < 1 ||
      config.max_weekly_visits < config.min_weekly_visits || !(config.min_visit_length > 0.0) ||
      config.max_visit_length < config.min_visit_length || !(config.cluster_spread >= 0.0)) {
    throw DomainError(ErrorCode::InvalidArgument, "invalid synthetic configuration");
  }
  // Validate the box corners through GeoPoint.
  (void)geo::GeoPoint(box.lat_min, box.lon_min);
  (void)geo::GeoPoint(box.lat_max, box.lon_max);

  Rng rng(seed);
  const std::size_t n_centers = config.n_centers == 0 ? config.n_caregivers : config.n_centers;
  SyntheticDataset out;
  auto& truth = out.truth;

  // Plant centres, rejecting candidates that sit too close to earlier ones.
  constexpr int kMaxCenterAttempts = 10000;
  for (std::size_t k = 0; k < n_centers; ++k) {
    geo::GeoPoint candidate;
    int attempt = 0;
    for (;; ++attempt) {
      candidate = geo::GeoPoint(rng.uniform(box.lat_min, box.lat_max),
                                rng.uniform(box.lon_min, box.lon_max));
      bool ok = true;
      for (const auto& c : truth.centers) {
        if (geo::haversine_miles(c, candidate) < config.min_center_separation) ok = false;
      }
      if (ok) break;
      if (attempt >= kMaxCenterAttempts) {
        throw DomainError(ErrorCode::InvalidArgument,
                          "cannot place centres with the requested separation in the box");
      }
    }
    truth.centers.push_back(candidate);
  }

  auto jitter = [&](const geo::GeoPoint& centre, double radius) {
    const double r = radius * std::sqrt(rng.uniform());
    const double bearing = 2.0 * std::numbers::pi * rng.uniform();
    return geo::destination_point(centre, bearing, r);
  };

  char buf[32];
  for (std::size_t c = 0; c < config.n_caregivers; ++c) {
    std::snprintf(buf, sizeof(buf), "CG%03zu", c + 1);
    const std::size_t centre = c % n_centers;
    const auto home = jitter(truth.centers[centre], config.cluster_spread * 0.5);
    truth.roster.caregivers.push_back({buf, home, config.w_min, config.w_max});
    truth.caregiver_center.push_back(centre);
  }

  struct SynthPatient {
    std::size_t caregiver;
    int weekly;
    double length;
  };
  std::vector<SynthPatient> attrs;
  std::vector<std::size_t> served_in_centre(n_centers, 0);
  for (std::size_t p = 0; p < config.n_patients; ++p) {
    std::snprintf(buf, sizeof(buf), "P%05zu", p + 1);
    const std::size_t centre = p % n_centers;
    truth.patient_ids.emplace_back(buf);
    truth.patient_center.push_back(centre);
    truth.patient_locations.push_back(jitter(truth.centers[centre], config.cluster_spread));
    // Caregivers planted at this centre share its patients round-robin.
    std::vector<std::size_t> local;
    for (std::size_t c = 0; c < config.n_caregivers; ++c) {
      if (truth.caregiver_center[c] == centre) local.push_back(c);
    }
    std::size_t cg;
    if (local.empty()) {
      // More centres than caregivers: nearest caregiver home serves the blob.
      cg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < config.n_caregivers; ++c) {
        const double dist =
            geo::haversine_miles(truth.roster.caregivers[c].home, truth.centers[centre]);
        if (dist < best) {
          best = dist;
          cg = c;
        }
      }
    } else {
      cg = local[served_in_centre[centre]++ % local.size()];
    }
    const int span = config.max_weekly_visits - config.min_weekly_visits + 1;
    const int weekly = config.min_weekly_visits + static_cast<int>(rng.index(span));
    const double length = rng.uniform(config.min_visit_length, config.max_visit_length);
    attrs.push_back({cg, weekly, std::round(length * 4.0) / 4.0});
  }

  constexpr int kWorkdays = 5;
  for (std::size_t w = 0; w < config.weeks; ++w) {
    for (std::size_t c = 0; c < config.n_caregivers; ++c) {
      const auto& cg = truth.roster.caregivers[c];
      std::vector<std::vector<std::size_t>> days(kWorkdays);
      std::size_t slot = rng.index(kWorkdays);
      for (std::size_t p = 0; p < config.n_patients; ++p) {
        if (attrs[p].caregiver != c) continue;
        for (int v = 0; v < attrs[p].weekly; ++v) {
          days[slot % kWorkdays].push_back(p);
          ++slot;
        }
      }
      for (int day = 0; day < kWorkdays; ++day) {
        const auto& visits = days[day];
        if (visits.empty()) continue;
        const Date date = config.start_date + std::chrono::days(7 * w + day);
        geo::GeoPoint here = cg.home;
        bool at_home = true;
        for (std::size_t k = 0; k < visits.size(); ++k) {
          const std::size_t p = visits[k];
          VisitRecord r;
          r.caregiver_id = cg.id;
          r.patient_id = truth.patient_ids[p];
          r.discipline = config.discipline;
          r.visit_date = date;
          r.visit_length = attrs[p].length;
          r.origin = here;
          r.destination = truth.patient_locations[p];
          r.leg_kind = at_home ? LegKind::HomeLeg : LegKind::PatientLeg;
          out.records.push_back(r);
          here = r.destination;
          at_home = false;
          const bool last = k + 1 == visits.size();
          if (last || rng.bernoulli(config.home_return_probability)) {
            VisitRecord back = r;
            back.origin = here;
            back.destination = cg.home;
            back.leg_kind = LegKind::HomeLeg;
            out.records.push_back(back);
            here = cg.home;
            at_home = true;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace careflow::ingest
