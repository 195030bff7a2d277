#include <doctest.h>

#include <cmath>
#include <numbers>

#include "careflow/allocation.hpp"
#include "careflow/error.hpp"
#include "careflow/random.hpp"

using namespace careflow;
using namespace careflow::allocation;
using ingest::CaregiverNode;
using ingest::InstanceModel;
using ingest::PatientNode;

namespace {

const geo::GeoPoint kOrigin(35.96, -83.92);

// Point `miles` east (bearing 90deg) and `north` miles north of the origin.
geo::GeoPoint at(double east, double north = 0.0) {
  const auto p = geo::destination_point(kOrigin, std::numbers::pi / 2, east);
  return geo::destination_point(p, 0.0, north);
}

InstanceModel make(std::vector<PatientNode> p, std::vector<CaregiverNode> c, double rate = 1.0 / 40.0) {
  return InstanceModel::make(ingest::Discipline::RN, std::move(p), std::move(c), rate, 1.0);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const DomainError& e) {
    return e.code();
  }
  FAIL("expected a DomainError");
  return ErrorCode::Io;
}

clustering::ClusterAssignment labelled(const InstanceModel& inst, std::vector<std::size_t> labels,
                                       std::size_t k) {
  clustering::ClusterAssignment a;
  a.clusters = k;
  a.labels = std::move(labels);
  for (const auto& p : inst.patients) a.patient_ids.push_back(p.id);
  return a;
}

// Three blobs of four patients around caregivers at 0, 20 and 40 miles east.
InstanceModel three_blobs(double w_max = 40.0) {
  std::vector<PatientNode> p;
  std::vector<CaregiverNode> c;
  for (int b = 0; b < 3; ++b) {
    c.push_back({"C" + std::to_string(b), at(20.0 * b, 0.5), 0.0, w_max});
    for (int i = 0; i < 4; ++i) {
      p.push_back({"P" + std::to_string(4 * b + i), at(20.0 * b + 0.3 * i, 0.2 * (i % 2)), 1, 1.0});
    }
  }
  return make(p, c);
}

}  // namespace

TEST_CASE("cluster medoid minimises total distance") {
  const auto inst = make({{"a", at(0), 1, 1}, {"b", at(1), 1, 1}, {"c", at(5), 1, 1}},
                         {{"C", at(0), 0, 40}});
  const std::vector<std::size_t> all = {0, 1, 2};
  CHECK(cluster_medoid(all, inst.distance) == 1);
}

TEST_CASE("attach_centroids") {
  SUBCASE("one cluster, one caregiver") {
    const auto inst = make({{"a", at(0), 1, 1}, {"b", at(1), 1, 1}}, {{"C", at(3), 0, 40}});
    const auto b = attach_centroids(labelled(inst, {0, 0}, 1), inst);
    CHECK(b.assignment.centroid_of == std::vector<std::string>{"C"});
    CHECK(b.training_points.size() == 2);
  }
  SUBCASE("caregivers inside distinct blobs") {
    const auto inst = three_blobs();
    const auto b = attach_centroids(labelled(inst, {2, 2, 2, 2, 0, 0, 0, 0, 1, 1, 1, 1}, 3), inst);
    CHECK(b.assignment.centroid_of == std::vector<std::string>{"C1", "C2", "C0"});
  }
  SUBCASE("contested cluster goes to the closer caregiver") {
    // Cluster A at 0, cluster B at 30; both caregivers sit near A.
    const auto inst = make({{"a1", at(0), 1, 1}, {"a2", at(0.2), 1, 1}, {"b1", at(30), 1, 1}, {"b2", at(30.2), 1, 1}},
                           {{"far", at(-3), 0, 40}, {"near", at(-1), 0, 40}});
    const auto b = attach_centroids(labelled(inst, {0, 0, 1, 1}, 2), inst);
    CHECK(b.assignment.centroid_of == std::vector<std::string>{"near", "far"});
  }
  SUBCASE("count mismatch") {
    const auto inst = three_blobs();
    CHECK(code_of([&] { attach_centroids(labelled(inst, std::vector<std::size_t>(12, 0), 1), inst); }) ==
          ErrorCode::CardinalityError);
  }
}

TEST_CASE("percentile interpolates linearly") {
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 50.0) == doctest::Approx(2.5));
  CHECK(percentile({10.0}, 95.0) == 10.0);
  CHECK(percentile({0.0, 10.0}, 95.0) == doctest::Approx(9.5));
}

TEST_CASE("allocate_patient") {
  const auto inst = three_blobs();
  const auto b = attach_centroids(labelled(inst, {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2}, 3), inst);

  SUBCASE("training point maps to its own cluster") {
    for (std::size_t i = 0; i < b.training_points.size(); ++i) {
      const auto r = allocate_patient(b, b.training_points[i].location);
      CHECK(r.training_index == i);
      CHECK(r.caregiver_id == b.caregiver_of_cluster(b.training_points[i].label));
      CHECK_FALSE(r.extrapolated);
    }
  }
  SUBCASE("equidistant points go to the lower index") {
    Baseline tie = b;
    tie.training_points = {{"x", at(1), 1}, {"y", at(1), 0}};
    CHECK(allocate_patient(tie, at(0)).training_index == 0);
    CHECK(allocate_patient(tie, at(0)).caregiver_id == tie.caregiver_of_cluster(1));
    tie.training_points = {{"y", at(1), 0}, {"x", at(1), 1}};
    CHECK(allocate_patient(tie, at(0)).caregiver_id == tie.caregiver_of_cluster(0));
  }
  SUBCASE("far points are still allocated but flagged") {
    const auto r = allocate_patient(b, at(300, 300));
    CHECK(r.extrapolated);
    CHECK_FALSE(r.caregiver_id.empty());
    CHECK(allocate_patient(b, at(300, 300)).caregiver_id == r.caregiver_id);
  }
  SUBCASE("empty baseline") {
    Baseline empty = b;
    empty.training_points.clear();
    CHECK(code_of([&] { allocate_patient(empty, at(0)); }) == ErrorCode::EmptyBaseline);
  }
}

TEST_CASE("feasibility") {
  SUBCASE("service plus travel inside bounds") {
    // One patient, three 2h visits; gamma = 1 makes travel 3 round trips.
    const double d = 10.0;
    const double rate = 5.0 / (6.0 * d);
    const auto inst = make({{"p", at(d), 3, 2.0}}, {{"C", at(0), 10.0, 40.0}}, rate);
    AllocationDecision dec;
    dec.assignments.push_back({"p", at(d), 3, 2.0, "C", false, 0});
    const auto r = check_feasibility(dec, inst, 1.0);
    REQUIRE(r.loads.size() == 1);
    CHECK(r.loads[0].service_hours == doctest::Approx(6.0));
    CHECK(r.loads[0].travel_hours == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(r.loads[0].workload == doctest::Approx(11.0).epsilon(1e-6));
    CHECK(r.loads[0].status == LoadStatus::Feasible);
    CHECK(r.feasible());
  }
  SUBCASE("idle caregiver is below minimum") {
    const auto inst = make({{"p", at(1), 1, 1.0}}, {{"C", at(0), 10.0, 40.0}, {"D", at(5), 10.0, 40.0}});
    AllocationDecision dec;
    dec.assignments.push_back({"p", at(1), 1, 1.0, "C", false, 0});
    const auto r = check_feasibility(dec, inst, 0.4);
    CHECK(r.loads[1].status == LoadStatus::BelowMin);
    CHECK(r.loads[1].workload == 0.0);
  }
  SUBCASE("classification") {
    CHECK(classify_workload(41.0, 10.0, 40.0) == LoadStatus::AboveMax);
    CHECK(classify_workload(40.0, 10.0, 40.0) == LoadStatus::Feasible);
    CHECK(classify_workload(9.9, 10.0, 40.0) == LoadStatus::BelowMin);
  }
  SUBCASE("unknown caregiver") {
    const auto inst = make({{"p", at(1), 1, 1.0}}, {{"C", at(0), 0.0, 40.0}});
    AllocationDecision dec;
    dec.assignments.push_back({"p", at(1), 1, 1.0, "nobody", false, 0});
    CHECK(code_of([&] { check_feasibility(dec, inst, 0.4); }) == ErrorCode::UnknownCaregiver);
  }
}

TEST_CASE("weekly allocation with exclusion retry") {
  const auto inst = three_blobs();
  const auto base = attach_centroids(labelled(inst, {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2}, 3), inst, 0.4);

  std::vector<PatientNode> week;
  for (int i = 0; i < 4; ++i) week.push_back({"N" + std::to_string(i), at(20.0 + 0.1 * i, 0.1), 2, 3.0});

  SUBCASE("no violations") {
    const auto r = run_weekly_allocation(base, week, WorkloadModel::from(base), 3);
    CHECK(r.retries == 0);
    for (const auto& a : r.decision.assignments) {
      CHECK(a.caregiver_id == "C1");
      CHECK(a.retry_round == 0);
    }
  }
  SUBCASE("overloaded caregiver spills to the others") {
    auto model = WorkloadModel::from(base);
    model.caregivers[1].w_max = 5.0;  // C1 cannot take 24h of visits
    const auto r = run_weekly_allocation(base, week, model, 3);
    CHECK(r.retries == 1);
    CHECK(r.excluded == std::vector<std::string>{"C1"});
    for (const auto& a : r.decision.assignments) {
      CHECK(a.caregiver_id != "C1");
      CHECK(a.retry_round == 1);
    }
    CHECK(r.report.feasible());
    CHECK(r.retries <= inst.caregivers.size());
  }
  SUBCASE("every caregiver capped at zero") {
    auto model = WorkloadModel::from(base);
    for (auto& c : model.caregivers) c.w_max = 0.0;
    CHECK(code_of([&] { run_weekly_allocation(base, week, model, 10); }) ==
          ErrorCode::NoFeasibleAllocation);
  }
  SUBCASE("retry budget exhausted leaves a warning") {
    auto model = WorkloadModel::from(base);
    model.caregivers[1].w_max = 5.0;
    const auto r = run_weekly_allocation(base, week, model, 0);
    CHECK(r.retries == 0);
    CHECK_FALSE(r.warnings.empty());
    CHECK_FALSE(r.report.feasible());
  }
  SUBCASE("below-minimum caregivers are warned, not excluded") {
    auto model = WorkloadModel::from(base);
    for (auto& c : model.caregivers) c.w_min = 1.0;
    const auto r = run_weekly_allocation(base, week, model, 3);
    CHECK(r.excluded.empty());
    CHECK(r.warnings.size() == 2);
  }
  SUBCASE("retries never exceed the caregiver count") {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
      auto model = WorkloadModel::from(base);
      for (auto& c : model.caregivers) c.w_max = rng.uniform(0.0, 30.0);
      try {
        const auto r = run_weekly_allocation(base, week, model, 100);
        CHECK(r.retries <= inst.caregivers.size());
      } catch (const DomainError& e) {
        CHECK(e.code() == ErrorCode::NoFeasibleAllocation);
      }
    }
  }
}

TEST_CASE("exact small oracle") {
  SUBCASE("single out-and-back") {
    const auto inst = make({{"p", at(5), 1, 1.0}}, {{"C", at(0), 0.0, 40.0}});
    const auto s = exact_small_oracle(inst);
    CHECK(s.objective == doctest::Approx(10.0).epsilon(1e-9));
    REQUIRE(s.arcs.size() == 2);
    CHECK(s.caregiver_of_patient == std::vector<std::string>{"C"});
  }
  SUBCASE("co-located patient") {
    const auto inst = make({{"p", at(0), 1, 1.0}}, {{"C", at(0), 0.0, 40.0}});
    CHECK(exact_small_oracle(inst).objective == 0.0);
  }
  SUBCASE("each caregiver takes the adjacent patient") {
    const auto inst = make({{"p1", at(1), 1, 1.0}, {"p2", at(101), 1, 1.0}},
                           {{"C1", at(0), 0.0, 40.0}, {"C2", at(100), 0.0, 40.0}});
    const auto s = exact_small_oracle(inst);
    CHECK(s.objective == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(s.caregiver_of_patient == std::vector<std::string>{"C1", "C2"});
  }
  SUBCASE("two visits need two distinct predecessors") {
    const auto inst = make({{"p", at(3), 2, 1.0}, {"q", at(3, 4), 1, 1.0}}, {{"C", at(0), 0.0, 40.0}});
    const auto s = exact_small_oracle(inst);
    CHECK(s.objective > 0.0);
    CHECK(route_assignment(inst, s.caregiver_of_patient)->objective == doctest::Approx(s.objective));
  }
  SUBCASE("too large and infeasible") {
    std::vector<PatientNode> p;
    for (int i = 0; i < 8; ++i) p.push_back({"p" + std::to_string(i), at(i), 1, 1.0});
    CHECK(code_of([&] { exact_small_oracle(make(p, {{"C", at(0), 0.0, 40.0}})); }) == ErrorCode::TooLarge);
    const auto tight = make({{"p", at(5), 1, 1.0}}, {{"C", at(0), 0.0, 0.5}});
    CHECK(code_of([&] { exact_small_oracle(tight); }) == ErrorCode::Infeasible);
  }
  SUBCASE("adding a caregiver never increases the optimum") {
    Rng rng(31);
    for (int t = 0; t < 15; ++t) {
      std::vector<PatientNode> p;
      std::vector<CaregiverNode> c;
      const std::size_t np = 2 + rng.index(3);
      for (std::size_t i = 0; i < np; ++i) {
        p.push_back({"p" + std::to_string(i), at(rng.uniform(0, 10), rng.uniform(0, 10)),
                     1 + static_cast<int>(rng.index(2)), 1.0});
      }
      c.push_back({"c0", at(rng.uniform(0, 10), rng.uniform(0, 10)), 0.0, 60.0});
      const double before = exact_small_oracle(make(p, c)).objective;
      c.push_back({"c1", at(rng.uniform(0, 10), rng.uniform(0, 10)), 0.0, 60.0});
      CHECK(exact_small_oracle(make(p, c)).objective <= before + 1e-9);
    }
  }
}
