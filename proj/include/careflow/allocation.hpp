#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "careflow/clustering.hpp"
#include "careflow/geo.hpp"
#include "careflow/ingest.hpp"

namespace careflow::allocation {

struct TrainingPoint {
  std::string patient_id;
  geo::GeoPoint location;
  std::size_t label = 0;
};

/// Tuned clustering with caregivers attached; the reference for weekly 1-NN
/// allocation. Immutable once built.
struct Baseline {
  ingest::Discipline discipline = ingest::Discipline::RN;
  clustering::ClusterAssignment assignment;  // centroid_of filled
  std::vector<TrainingPoint> training_points;
  std::vector<ingest::CaregiverNode> caregivers;
  std::string created_at;
  double road_coeff = geo::kDefaultRoadCorrection;
  double travel_rate = 1.0 / 40.0;
  double gamma = 0.0;
  /// 95th percentile of training nearest-neighbour distances.
  double extrapolation_threshold = 0.0;

  const std::string& caregiver_of_cluster(std::size_t k) const {
    return assignment.centroid_of.at(k);
  }
  const ingest::CaregiverNode* find_caregiver(std::string_view id) const;
};

/// Cluster medoid: member with the smallest summed distance to the others.
std::size_t cluster_medoid(std::span<const std::size_t> members, const geo::DistanceMatrix& d);

/// Greedy global-nearest matching of caregivers to cluster medoids. Returns
/// centroid_of (cluster -> caregiver id). `d` must hold every patient id of
/// the assignment and every caregiver label.
std::vector<std::string> match_centroids(const clustering::ClusterAssignment& clusters,
                                         std::span<const std::string> caregiver_ids,
                                         const geo::DistanceMatrix& d);

/// Attaches the instance's caregivers to the clusters and freezes a baseline.
/// Throws CardinalityError when cluster and caregiver counts differ.
Baseline attach_centroids(const clustering::ClusterAssignment& clusters,
                          const ingest::InstanceModel& instance, double gamma = 0.0,
                          std::string created_at = {});

/// Linear-interpolated percentile (q in [0, 100]) of a non-empty sample.
double percentile(std::vector<double> values, double q);

double nearest_neighbour_threshold(std::span<const TrainingPoint> points, double road_coeff);

struct PatientAllocation {
  std::string caregiver_id;
  std::size_t training_index = 0;
  double distance = 0.0;
  bool extrapolated = false;
};

/// 1-NN allocator over the training points, with caregivers that can be
/// excluded between retry rounds. Holds a private copy of the exclusion set.
class Allocator {
 public:
  explicit Allocator(const Baseline& baseline);

  PatientAllocation allocate(const geo::GeoPoint& p) const;
  void exclude(const std::string& caregiver_id);
  bool excluded(const std::string& caregiver_id) const { return excluded_.count(caregiver_id) > 0; }
  std::size_t active_caregivers() const;

 private:
  const Baseline* baseline_;
  std::set<std::string> excluded_;
};

/// Caregiver of the nearest training point's cluster; ties to the lower
/// training index. Throws EmptyBaseline when there are no training points.
PatientAllocation allocate_patient(const Baseline& baseline, const geo::GeoPoint& p);

struct PatientAssignment {
  std::string patient_id;
  geo::GeoPoint location;
  int weekly_visits = 1;
  double visit_length = 1.0;
  std::string caregiver_id;
  bool extrapolated = false;
  std::size_t retry_round = 0;
};

struct AllocationDecision {
  std::vector<PatientAssignment> assignments;
};

enum class LoadStatus { Feasible, BelowMin, AboveMax };
std::string_view to_string(LoadStatus s) noexcept;

struct CaregiverLoad {
  std::string caregiver_id;
  LoadStatus status = LoadStatus::Feasible;
  std::size_t patients = 0;
  double service_hours = 0.0;
  double travel_hours = 0.0;
  double workload = 0.0;
  double w_min = 0.0;
  double w_max = 0.0;
};

struct FeasibilityReport {
  std::vector<CaregiverLoad> loads;
  bool feasible() const;
  std::vector<std::string> overloaded() const;
};

LoadStatus classify_workload(double workload, double w_min, double w_max) noexcept;

/// Caregivers and rates used to turn an assignment into weekly hours.
struct WorkloadModel {
  std::vector<ingest::CaregiverNode> caregivers;
  double travel_rate = 1.0 / 40.0;
  double road_coeff = geo::kDefaultRoadCorrection;
  double gamma = 0.0;

  static WorkloadModel from(const ingest::InstanceModel& instance, double gamma);
  static WorkloadModel from(const Baseline& baseline);
};

struct ServicePoint {
  geo::GeoPoint location;
  int weekly_visits = 1;
};

/// Expected weekly travel miles for one caregiver: per visit,
/// 2*gamma*(visit-weighted mean home leg) + (1-gamma)*(visit-weighted mean
/// inter-patient leg), times the total weekly visits.
double expected_travel_miles(const geo::GeoPoint& home, std::span<const ServicePoint> patients,
                             double gamma, double road_coeff);

/// Throws UnknownCaregiver for assignments to caregivers outside the model.
FeasibilityReport check_feasibility(const AllocationDecision& decision, const WorkloadModel& model);
FeasibilityReport check_feasibility(const AllocationDecision& decision,
                                    const ingest::InstanceModel& instance, double gamma);

struct WeeklyResult {
  AllocationDecision decision;
  FeasibilityReport report;
  std::size_t retries = 0;
  std::vector<std::string> excluded;
  std::vector<std::string> warnings;
};

/// Allocate, check hours, exclude overloaded caregivers and re-allocate their
/// patients, up to max_retries rounds. BelowMin only warns. Throws
/// NoFeasibleAllocation once every caregiver has been excluded.
WeeklyResult run_weekly_allocation(const Baseline& baseline,
                                   std::span<const ingest::PatientNode> new_patients,
                                   const WorkloadModel& model, std::size_t max_retries);

// ---------------------------------------------------------------------------
// Exact oracle for tiny instances

struct Arc {
  std::string from;
  std::string to;
  std::string caregiver;
};

struct OracleSolution {
  std::vector<std::string> caregiver_of_patient;  // parallel to instance.patients
  std::vector<Arc> arcs;
  double objective = 0.0;
};

struct RouteSolution {
  double cost = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> arcs;  // distance-matrix indices
};

/// Cheapest connected, flow-balanced arc set for one caregiver serving
/// `patients` (instance patient indices) where each patient receives exactly
/// weekly_visits arrivals from distinct nodes, subject to the caregiver's
/// working-hour bounds. nullopt when infeasible.
std::optional<RouteSolution> best_route(const ingest::InstanceModel& instance,
                                        std::size_t caregiver,
                                        std::span<const std::size_t> patients);

/// Routes a fixed patient -> caregiver assignment with best_route.
/// nullopt when any caregiver's subproblem is infeasible.
std::optional<OracleSolution> route_assignment(const ingest::InstanceModel& instance,
                                               std::span<const std::string> caregiver_of_patient);

inline constexpr std::size_t kOracleNodeCap = 8;

/// Exhaustive optimum of the allocation ILP (with connectivity enforced).
/// Throws TooLarge above the node cap, Infeasible when nothing satisfies it.
OracleSolution exact_small_oracle(const ingest::InstanceModel& instance,
                                  std::size_t node_cap = kOracleNodeCap);

}  // namespace careflow::allocation
