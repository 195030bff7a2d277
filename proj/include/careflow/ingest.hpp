#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "careflow/geo.hpp"

namespace careflow::ingest {

using Date = std::chrono::sys_days;

/// Parses YYYY-MM-DD. Returns nullopt for malformed or impossible dates.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date d);

enum class Discipline { RN, PT, PTA, CNA, LPN, OT, COTA, CH, SLP, MSW, BSW };

inline constexpr std::array<Discipline, 11> kAllDisciplines = {
    Discipline::RN,  Discipline::PT, Discipline::PTA, Discipline::CNA,
    Discipline::LPN, Discipline::OT, Discipline::COTA, Discipline::CH,
    Discipline::SLP, Discipline::MSW, Discipline::BSW};

std::string_view to_string(Discipline d) noexcept;
std::optional<Discipline> parse_discipline(std::string_view text);

enum class LegKind { HomeLeg, PatientLeg };

std::string_view to_string(LegKind k) noexcept;
std::optional<LegKind> parse_leg_kind(std::string_view text);

/// One travel leg attached to a visit. A leg whose destination is the
/// caregiver's home is a return leg; every other leg arrives at the patient.
struct VisitRecord {
  std::string caregiver_id;
  std::string patient_id;
  Discipline discipline = Discipline::RN;
  Date visit_date{};
  double visit_length = 0.0;  // hours
  geo::GeoPoint origin;
  geo::GeoPoint destination;
  LegKind leg_kind = LegKind::PatientLeg;
};

inline constexpr std::array<std::string_view, 10> kVisitColumns = {
    "caregiver_id", "patient_id", "discipline", "visit_date",  "visit_length_hours",
    "origin_lat",   "origin_lon", "dest_lat",   "dest_lon",    "leg_kind"};

struct DroppedRow {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct ParseResult {
  std::vector<VisitRecord> records;
  std::vector<DroppedRow> dropped;
};

/// Streaming single-pass parse. Malformed rows are dropped and reported.
/// Throws SchemaError for missing columns, EmptyDataset for no data rows.
ParseResult parse_visit_records(std::istream& in);

void write_visit_records(std::ostream& out, std::span<const VisitRecord> records);

std::vector<VisitRecord> filter_discipline(std::span<const VisitRecord> records, Discipline d);

struct SplitResult {
  std::vector<VisitRecord> train;  // strictly before cutoff
  std::vector<VisitRecord> test;   // on or after cutoff
  bool one_side_empty = false;
};

SplitResult split_train_test(std::span<const VisitRecord> records, Date cutoff);

// ---------------------------------------------------------------------------
// Visitation consistency

inline constexpr double kDefaultGammaReduction = 0.20;

struct GammaProfile {
  Discipline discipline = Discipline::RN;
  std::size_t n_total = 0;
  std::size_t n_home = 0;
  double gamma_curr = 0.0;
  double gamma_lim = 0.0;
};

GammaProfile gamma_from_counts(Discipline d, std::size_t n_total, std::size_t n_home,
                               double reduction = kDefaultGammaReduction);

/// Home-leg share of all legs for discipline `d`. Throws NoTravelData.
GammaProfile compute_gamma(std::span<const VisitRecord> records, Discipline d,
                           double reduction = kDefaultGammaReduction);

// ---------------------------------------------------------------------------
// Instance model

struct PatientNode {
  std::string id;
  geo::GeoPoint location;
  int weekly_visits = 1;      // mu
  double visit_length = 1.0;  // hours
};

struct CaregiverNode {
  std::string id;
  geo::GeoPoint home;
  double w_min = 0.0;  // hours per week
  double w_max = 40.0;
};

struct InstanceConfig {
  double travel_rate = 1.0 / 40.0;  // hours per mile
  double road_coeff = geo::kDefaultRoadCorrection;
  double default_w_min = 0.0;
  double default_w_max = 40.0;
};

/// One discipline's planning instance. Patients come first in the distance
/// matrix, then caregivers; ids must not collide.
struct InstanceModel {
  Discipline discipline = Discipline::RN;
  std::vector<PatientNode> patients;
  std::vector<CaregiverNode> caregivers;
  geo::DistanceMatrix distance;
  double travel_rate = 1.0 / 40.0;
  double road_coeff = geo::kDefaultRoadCorrection;

  /// Builds the distance matrix and validates invariants.
  static InstanceModel make(Discipline d, std::vector<PatientNode> patients,
                            std::vector<CaregiverNode> caregivers, double travel_rate,
                            double road_coeff);

  std::vector<geo::GeoPoint> patient_points() const;
  std::vector<geo::LabeledPoint> caregiver_points() const;
  const CaregiverNode* find_caregiver(std::string_view id) const;
  const PatientNode* find_patient(std::string_view id) const;
};

/// Known caregiver homes and hour bounds. When absent, homes are inferred as
/// the most frequent endpoint of each caregiver's home legs.
struct CaregiverRoster {
  std::vector<CaregiverNode> caregivers;
};

CaregiverRoster read_roster(std::istream& in);
void write_roster(std::ostream& out, const CaregiverRoster& roster);

/// mu = ceil(arrivals / active weeks) per patient, l = mean visit length.
/// Throws NoCaregivers when the discipline has none.
InstanceModel build_instance(std::span<const VisitRecord> records, Discipline d,
                             const InstanceConfig& config,
                             const std::optional<CaregiverRoster>& roster = std::nullopt);

// ---------------------------------------------------------------------------
// Synthetic data

struct RegionBox {
  double lat_min = 35.80;
  double lat_max = 36.20;
  double lon_min = -84.20;
  double lon_max = -83.60;
};

struct SynthConfig {
  Discipline discipline = Discipline::RN;
  std::size_t n_caregivers = 4;
  std::size_t n_patients = 40;
  std::size_t n_centers = 0;           // 0 means one center per caregiver
  double cluster_spread = 2.0;         // blob radius, miles
  double min_center_separation = 0.0;  // miles, 0 disables the check
  RegionBox region;
  std::size_t weeks = 4;
  Date start_date = Date{std::chrono::year{2019} / 7 / 1};
  int min_weekly_visits = 1;
  int max_weekly_visits = 3;
  double min_visit_length = 0.75;
  double max_visit_length = 1.5;
  double home_return_probability = 0.35;
  double w_min = 0.0;
  double w_max = 40.0;
};

struct GroundTruth {
  std::vector<geo::GeoPoint> centers;
  std::vector<std::string> patient_ids;
  std::vector<std::size_t> patient_center;  // parallel to patient_ids
  std::vector<geo::GeoPoint> patient_locations;
  CaregiverRoster roster;
  std::vector<std::size_t> caregiver_center;
};

struct SyntheticDataset {
  std::vector<VisitRecord> records;
  GroundTruth truth;
};

/// Deterministic in (config, seed). Throws InvalidArgument for zero counts or
/// a degenerate region box.
SyntheticDataset generate_synthetic_dataset(const SynthConfig& config, std::uint64_t seed);

}  // namespace careflow::ingest
