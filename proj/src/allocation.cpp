#include "careflow/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "careflow/error.hpp"
#include "careflow/log.hpp"

namespace careflow::allocation {

const ingest::CaregiverNode* Baseline::find_caregiver(std::string_view id) const {
  for (const auto& c : caregivers) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

std::size_t cluster_medoid(std::span<const std::size_t> members, const geo::DistanceMatrix& d) {
  if (members.empty()) throw DomainError(ErrorCode::InvalidArgument, "medoid of empty cluster");
  std::size_t best = members.front();
  double best_sum = std::numeric_limits<double>::infinity();
  for (auto i : members) {
    double s = 0.0;
    for (auto j : members) s += d(i, j);
    if (s < best_sum) {
      best_sum = s;
      best = i;
    }
  }
  return best;
}

std::vector<std::string> match_centroids(const clustering::ClusterAssignment& clusters,
                                         std::span<const std::string> caregiver_ids,
                                         const geo::DistanceMatrix& d) {
  if (clusters.clusters != caregiver_ids.size()) {
    throw DomainError(ErrorCode::CardinalityError,
                      std::to_string(clusters.clusters) + " clusters but " +
                          std::to_string(caregiver_ids.size()) + " caregivers");
  }
  const auto members = clusters.members();
  std::vector<std::size_t> medoid;
  medoid.reserve(members.size());
  for (const auto& m : members) {
    std::vector<std::size_t> rows;
    rows.reserve(m.size());
    for (auto i : m) rows.push_back(d.index_of(clusters.patient_ids.at(i)));
    medoid.push_back(cluster_medoid(rows, d));
  }

  struct Candidate {
    double dist;
    std::size_t caregiver;
    std::size_t cluster;
  };
  std::vector<Candidate> pairs;
  pairs.reserve(caregiver_ids.size() * medoid.size());
  for (std::size_t c = 0; c < caregiver_ids.size(); ++c) {
    const auto row = d.index_of(caregiver_ids[c]);
    for (std::size_t k = 0; k < medoid.size(); ++k) {
      pairs.push_back({d(row, medoid[k]), c, k});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Candidate& a, const Candidate& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.caregiver != b.caregiver) return a.caregiver < b.caregiver;
    return a.cluster < b.cluster;
  });

  std::vector<std::string> centroid_of(medoid.size());
  std::vector<bool> used(caregiver_ids.size(), false);
  for (const auto& p : pairs) {
    if (used[p.caregiver] || !centroid_of[p.cluster].empty()) continue;
    used[p.caregiver] = true;
    centroid_of[p.cluster] = caregiver_ids[p.caregiver];
  }
  return centroid_of;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError(ErrorCode::InvalidArgument, "percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

double nearest_neighbour_threshold(std::span<const TrainingPoint> points, double road_coeff) {
  if (points.size() < 2) return 0.0;
  std::vector<double> nn;
  nn.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (i == j) continue;
      best = std::min(best,
                      geo::corrected_distance(points[i].location, points[j].location, road_coeff));
    }
    nn.push_back(best);
  }
  return percentile(std::move(nn), 95.0);
}

Baseline attach_centroids(const clustering::ClusterAssignment& clusters,
                          const ingest::InstanceModel& instance, double gamma,
                          std::string created_at) {
  std::vector<std::string> ids;
  ids.reserve(instance.caregivers.size());
  for (const auto& c : instance.caregivers) ids.push_back(c.id);

  Baseline b;
  b.discipline = instance.discipline;
  b.assignment = clusters;
  b.assignment.discipline = instance.discipline;
  b.assignment.centroid_of = match_centroids(clusters, ids, instance.distance);
  b.caregivers = instance.caregivers;
  b.road_coeff = instance.road_coeff;
  b.travel_rate = instance.travel_rate;
  b.gamma = gamma;
  b.created_at = std::move(created_at);
  for (std::size_t i = 0; i < clusters.labels.size(); ++i) {
    const auto* p = instance.find_patient(clusters.patient_ids.at(i));
    if (!p) {
      throw DomainError(ErrorCode::InvalidArgument,
                        "clustered patient missing from instance: " + clusters.patient_ids[i]);
    }
    b.training_points.push_back({p->id, p->location, clusters.labels[i]});
  }
  b.extrapolation_threshold = nearest_neighbour_threshold(b.training_points, b.road_coeff);
  return b;
}

// ---------------------------------------------------------------------------

Allocator::Allocator(const Baseline& baseline) : baseline_(&baseline) {
  if (baseline.training_points.empty()) {
    throw DomainError(ErrorCode::EmptyBaseline, "baseline has no training points");
  }
}

void Allocator::exclude(const std::string& caregiver_id) { excluded_.insert(caregiver_id); }

std::size_t Allocator::active_caregivers() const {
  std::size_t n = 0;
  for (const auto& id : baseline_->assignment.centroid_of) {
    if (!excluded(id)) ++n;
  }
  return n;
}

PatientAllocation Allocator::allocate(const geo::GeoPoint& p) const {
  const auto& b = *baseline_;
  std::optional<std::size_t> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < b.training_points.size(); ++i) {
    const auto& tp = b.training_points[i];
    if (excluded(b.caregiver_of_cluster(tp.label))) continue;
    const double d = geo::corrected_distance(p, tp.location, b.road_coeff);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (!best) {
    throw DomainError(ErrorCode::NoFeasibleAllocation, "every caregiver has been excluded");
  }
  PatientAllocation out;
  out.training_index = *best;
  out.distance = best_d;
  out.caregiver_id = b.caregiver_of_cluster(b.training_points[*best].label);
  out.extrapolated = best_d > b.extrapolation_threshold;
  return out;
}

PatientAllocation allocate_patient(const Baseline& baseline, const geo::GeoPoint& p) {
  return Allocator(baseline).allocate(p);
}

// ---------------------------------------------------------------------------

std::string_view to_string(LoadStatus s) noexcept {
  switch (s) {
    case LoadStatus::Feasible: return "Feasible";
    case LoadStatus::BelowMin: return "BelowMin";
    case LoadStatus::AboveMax: return "AboveMax";
  }
  return "?";
}

bool FeasibilityReport::feasible() const {
  return std::all_of(loads.begin(), loads.end(),
                     [](const CaregiverLoad& l) { return l.status == LoadStatus::Feasible; });
}

std::vector<std::string> FeasibilityReport::overloaded() const {
  std::vector<std::string> out;
  for (const auto& l : loads) {
    if (l.status == LoadStatus::AboveMax) out.push_back(l.caregiver_id);
  }
  return out;
}

LoadStatus classify_workload(double workload, double w_min, double w_max) noexcept {
  if (workload > w_max) return LoadStatus::AboveMax;
  if (workload < w_min) return LoadStatus::BelowMin;
  return LoadStatus::Feasible;
}

WorkloadModel WorkloadModel::from(const ingest::InstanceModel& instance, double gamma) {
  return {instance.caregivers, instance.travel_rate, instance.road_coeff, gamma};
}

WorkloadModel WorkloadModel::from(const Baseline& baseline) {
  return {baseline.caregivers, baseline.travel_rate, baseline.road_coeff, baseline.gamma};
}

double expected_travel_miles(const geo::GeoPoint& home, std::span<const ServicePoint> patients,
                             double gamma, double road_coeff) {
  if (patients.empty()) return 0.0;
  double visits = 0.0;
  double home_sum = 0.0;
  for (const auto& p : patients) {
    visits += p.weekly_visits;
    home_sum += p.weekly_visits * geo::corrected_distance(p.location, home, road_coeff);
  }
  double pair_sum = 0.0;
  double pair_weight = 0.0;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    for (std::size_t j = 0; j < patients.size(); ++j) {
      if (i == j) continue;
      const double w = static_cast<double>(patients[i].weekly_visits) * patients[j].weekly_visits;
      pair_weight += w;
      pair_sum += w * geo::corrected_distance(patients[i].location, patients[j].location, road_coeff);
    }
  }
  const double home_mean = home_sum / visits;
  const double pair_mean = pair_weight > 0.0 ? pair_sum / pair_weight : 0.0;
  return visits * (2.0 * gamma * home_mean + (1.0 - gamma) * pair_mean);
}

FeasibilityReport check_feasibility(const AllocationDecision& decision, const WorkloadModel& model) {
  std::map<std::string, std::vector<const PatientAssignment*>> by_caregiver;
  for (const auto& c : model.caregivers) by_caregiver[c.id];
  for (const auto& a : decision.assignments) {
    auto it = by_caregiver.find(a.caregiver_id);
    if (it == by_caregiver.end()) {
      throw DomainError(ErrorCode::UnknownCaregiver,
                        "decision assigns " + a.patient_id + " to unknown caregiver " +
                            a.caregiver_id);
    }
    it->second.push_back(&a);
  }
  FeasibilityReport report;
  for (const auto& c : model.caregivers) {
    const auto& mine = by_caregiver[c.id];
    CaregiverLoad load;
    load.caregiver_id = c.id;
    load.w_min = c.w_min;
    load.w_max = c.w_max;
    load.patients = mine.size();
    std::vector<ServicePoint> pts;
    pts.reserve(mine.size());
    for (const auto* a : mine) {
      load.service_hours += a->weekly_visits * a->visit_length;
      pts.push_back({a->location, a->weekly_visits});
    }
    load.travel_hours =
        expected_travel_miles(c.home, pts, model.gamma, model.road_coeff) * model.travel_rate;
    load.workload = load.service_hours + load.travel_hours;
    load.status = classify_workload(load.workload, c.w_min, c.w_max);
    report.loads.push_back(std::move(load));
  }
  return report;
}

FeasibilityReport check_feasibility(const AllocationDecision& decision,
                                    const ingest::InstanceModel& instance, double gamma) {
  return check_feasibility(decision, WorkloadModel::from(instance, gamma));
}

WeeklyResult run_weekly_allocation(const Baseline& baseline,
                                   std::span<const ingest::PatientNode> new_patients,
                                   const WorkloadModel& model, std::size_t max_retries) {
  Allocator allocator(baseline);
  WeeklyResult out;
  out.decision.assignments.reserve(new_patients.size());
  for (const auto& p : new_patients) {
    const auto a = allocator.allocate(p.location);
    out.decision.assignments.push_back(
        {p.id, p.location, p.weekly_visits, p.visit_length, a.caregiver_id, a.extrapolated, 0});
  }

  for (;;) {
    out.report = check_feasibility(out.decision, model);
    const auto over = out.report.overloaded();
    if (over.empty()) break;
    if (out.retries >= max_retries) {
      out.warnings.push_back("retry budget exhausted with " + std::to_string(over.size()) +
                             " overloaded caregiver(s)");
      break;
    }
    ++out.retries;
    for (const auto& c : over) {
      allocator.exclude(c);
      out.excluded.push_back(c);
    }
    if (allocator.active_caregivers() == 0) {
      throw DomainError(ErrorCode::NoFeasibleAllocation,
                        "all caregivers excluded after " + std::to_string(out.retries) +
                            " retry round(s)");
    }
    for (auto& a : out.decision.assignments) {
      if (!allocator.excluded(a.caregiver_id)) continue;
      const auto re = allocator.allocate(a.location);
      a.caregiver_id = re.caregiver_id;
      a.extrapolated = re.extrapolated;
      a.retry_round = out.retries;
    }
  }
  for (const auto& l : out.report.loads) {
    if (l.status == LoadStatus::BelowMin) {
      out.warnings.push_back("caregiver " + l.caregiver_id + " below minimum hours");
    }
  }
  for (const auto& w : out.warnings) log::warn(w);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// Branch and bound over each patient's set of in-neighbours.
class RouteSearch {
 public:
  RouteSearch(const ingest::InstanceModel& inst, std::size_t caregiver,
              std::span<const std::size_t> patients)
      : m_(patients.size()) {
    const auto& cg = inst.caregivers.at(caregiver);
    rows_.push_back(inst.patients.size() + caregiver);
    visits_.push_back(0);
    double service = 0.0;
    for (auto p : patients) {
      rows_.push_back(p);
      visits_.push_back(inst.patients.at(p).weekly_visits);
      service += inst.patients[p].weekly_visits * inst.patients[p].visit_length;
    }
    const std::size_t nodes = m_ + 1;
    dist_.assign(nodes * nodes, 0.0);
    for (std::size_t a = 0; a < nodes; ++a) {
      for (std::size_t b = 0; b < nodes; ++b) dist_[a * nodes + b] = inst.distance(rows_[a], rows_[b]);
    }
    // Hours bounds translated to mileage bounds.
    min_cost_ = (cg.w_min - service) / inst.travel_rate;
    max_cost_ = (cg.w_max - service) / inst.travel_rate;

    bound_.assign(nodes + 1, 0.0);
    for (std::size_t t = m_; t >= 1; --t) {
      std::vector<double> in;
      for (std::size_t u = 0; u < nodes; ++u) {
        if (u != t) in.push_back(d(u, t));
      }
      std::sort(in.begin(), in.end());
      double s = 0.0;
      for (int k = 0; k < visits_[t] && k < static_cast<int>(in.size()); ++k) s += in[k];
      bound_[t] = bound_[t + 1] + s;
    }
    out_.assign(nodes, 0);
  }

  std::optional<RouteSolution> solve() {
    if (m_ == 0) {
      if (0.0 >= min_cost_ - 1e-9 && 0.0 <= max_cost_ + 1e-9) return RouteSolution{};
      return std::nullopt;
    }
    for (std::size_t t = 1; t <= m_; ++t) {
      if (visits_[t] > static_cast<int>(m_)) return std::nullopt;
    }
    place(1, 0.0);
    if (!best_) return std::nullopt;
    RouteSolution sol = *best_;
    for (auto& [a, b] : sol.arcs) {
      a = rows_[a];
      b = rows_[b];
    }
    return sol;
  }

 private:
  double d(std::size_t a, std::size_t b) const { return dist_[a * (m_ + 1) + b]; }

  bool pruned(std::size_t t, double cost) const {
    const double lb = cost + bound_[t];
    if (lb > max_cost_ + 1e-9) return true;
    return best_ && lb >= best_->cost - 1e-12;
  }

  void place(std::size_t t, double cost) {
    if (pruned(t, cost)) return;
    if (t > m_) {
      finish(cost);
      return;
    }
    choose(t, 0, visits_[t], cost);
  }

  // Pick `remaining` more in-neighbours of patient t from local nodes >= from.
  void choose(std::size_t t, std::size_t from, int remaining, double cost) {
    if (remaining == 0) {
      place(t + 1, cost);
      return;
    }
    for (std::size_t u = from; u <= m_; ++u) {
      if (u == t) continue;
      if (u != 0 && out_[u] >= visits_[u]) continue;
      out_[u] += 1;
      arcs_.emplace_back(u, t);
      choose(t, u + 1, remaining - 1, cost + d(u, t));
      arcs_.pop_back();
      out_[u] -= 1;
    }
  }

  void finish(double cost) {
    std::vector<std::pair<std::size_t, std::size_t>> arcs = arcs_;
    for (std::size_t u = 1; u <= m_; ++u) {
      const int deficit = visits_[u] - out_[u];
      if (deficit < 0 || deficit > 1) return;
      if (deficit == 1) {
        arcs.emplace_back(u, 0);
        cost += d(u, 0);
      }
    }
    if (cost < min_cost_ - 1e-9 || cost > max_cost_ + 1e-9) return;
    if (best_ && cost >= best_->cost - 1e-12) return;
    if (!connected(arcs)) return;
    best_ = RouteSolution{cost, std::move(arcs)};
  }

  bool connected(const std::vector<std::pair<std::size_t, std::size_t>>& arcs) const {
    std::vector<std::size_t> parent(m_ + 1);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (auto [a, b] : arcs) parent[find(a)] = find(b);
    const auto root = find(0);
    for (std::size_t u = 1; u <= m_; ++u) {
      if (find(u) != root) return false;
    }
    return true;
  }

  std::size_t m_;
  std::vector<std::size_t> rows_;
  std::vector<int> visits_;
  std::vector<double> dist_;
  std::vector<double> bound_;
  std::vector<int> out_;
  std::vector<std::pair<std::size_t, std::size_t>> arcs_;
  double min_cost_ = 0.0;
  double max_cost_ = 0.0;
  std::optional<RouteSolution> best_;
};

}  // namespace

std::optional<RouteSolution> best_route(const ingest::InstanceModel& instance,
                                        std::size_t caregiver,
                                        std::span<const std::size_t> patients) {
  return RouteSearch(instance, caregiver, patients).solve();
}

std::optional<OracleSolution> route_assignment(const ingest::InstanceModel& instance,
                                               std::span<const std::string> caregiver_of_patient) {
  if (caregiver_of_patient.size() != instance.patients.size()) {
    throw DomainError(ErrorCode::InvalidArgument, "assignment does not cover every patient");
  }
  OracleSolution sol;
  sol.caregiver_of_patient.assign(caregiver_of_patient.begin(), caregiver_of_patient.end());
  const auto& labels = instance.distance.labels();
  for (std::size_t c = 0; c < instance.caregivers.size(); ++c) {
    std::vector<std::size_t> mine;
    for (std::size_t p = 0; p < caregiver_of_patient.size(); ++p) {
      if (caregiver_of_patient[p] == instance.caregivers[c].id) mine.push_back(p);
    }
    auto route = best_route(instance, c, mine);
    if (!route) return std::nullopt;
    sol.objective += route->cost;
    for (auto [a, b] : route->arcs) sol.arcs.push_back({labels[a], labels[b], instance.caregivers[c].id});
  }
  for (const auto& id : caregiver_of_patient) {
    if (!instance.find_caregiver(id)) {
      throw DomainError(ErrorCode::UnknownCaregiver, "unknown caregiver " + id);
    }
  }
  return sol;
}

OracleSolution exact_small_oracle(const ingest::InstanceModel& instance, std::size_t node_cap) {
  const std::size_t n_p = instance.patients.size();
  const std::size_t n_c = instance.caregivers.size();
  if (n_p + n_c > node_cap) {
    throw DomainError(ErrorCode::TooLarge, "oracle limited to " + std::to_string(node_cap) +
                                               " nodes, instance has " +
                                               std::to_string(n_p + n_c));
  }
  std::map<std::pair<std::size_t, std::uint32_t>, std::optional<RouteSolution>> memo;
  auto route = [&](std::size_t c, std::uint32_t mask) -> const std::optional<RouteSolution>& {
    auto key = std::make_pair(c, mask);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    std::vector<std::size_t> members;
    for (std::size_t p = 0; p < n_p; ++p) {
      if (mask & (1u << p)) members.push_back(p);
    }
    return memo.emplace(key, best_route(instance, c, members)).first->second;
  };

  std::vector<std::size_t> choice(n_p, 0);
  std::optional<std::vector<std::size_t>> best_choice;
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    std::vector<std::uint32_t> masks(n_c, 0);
    for (std::size_t p = 0; p < n_p; ++p) masks[choice[p]] |= (1u << p);
    double total = 0.0;
    bool ok = true;
    for (std::size_t c = 0; c < n_c && ok; ++c) {
      const auto& r = route(c, masks[c]);
      if (!r) {
        ok = false;
      } else {
        total += r->cost;
      }
    }
    if (ok && total < best - 1e-12) {
      best = total;
      best_choice = choice;
    }
    // Odometer over patient -> caregiver choices.
    std::size_t p = 0;
    while (p < n_p && ++choice[p] == n_c) choice[p++] = 0;
    if (p == n_p) break;
  }
  if (!best_choice) {
    throw DomainError(ErrorCode::Infeasible, "no assignment satisfies the model constraints");
  }
  std::vector<std::string> ids;
  ids.reserve(n_p);
  for (auto c : *best_choice) ids.push_back(instance.caregivers[c].id);
  auto sol = route_assignment(instance, ids);
  return *sol;
}

}  // namespace careflow::allocation
