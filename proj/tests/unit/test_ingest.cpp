#include <doctest.h>

#include <set>
#include <sstream>

#include "careflow/clustering.hpp"
#include "careflow/error.hpp"
#include "careflow/ingest.hpp"
#include "careflow/json_io.hpp"

using namespace careflow;
using namespace careflow::ingest;

namespace {

const char* kHeader =
    "caregiver_id,patient_id,discipline,visit_date,visit_length_hours,origin_lat,origin_lon,"
    "dest_lat,dest_lon,leg_kind\n";

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const DomainError& e) {
    return e.code();
  }
  FAIL("expected a DomainError");
  return ErrorCode::Io;
}


VisitRecord visit(const std::string& cg, const std::string& pt, Date day, geo::GeoPoint from,
                  geo::GeoPoint to, LegKind kind, double hours = 1.0) {
  VisitRecord r;
  r.caregiver_id = cg;
  r.patient_id = pt;
  r.discipline = Discipline::RN;
  r.visit_date = day;
  r.visit_length = hours;
  r.origin = from;
  r.destination = to;
  r.leg_kind = kind;
  return r;
}

Date day(int y, int m, int d) {
  return Date{std::chrono::year{y} / std::chrono::month{static_cast<unsigned>(m)} /
              std::chrono::day{static_cast<unsigned>(d)}};
}

}  // namespace

TEST_CASE("parse_visit_records") {
  SUBCASE("valid rows") {
    std::istringstream in(std::string(kHeader) +
                          "C1,P1,RN,2019-07-01,1.5,35.9,-83.9,35.95,-83.95,HomeLeg\n"
                          "C1,P2,RN,2019-07-01,1.0,35.95,-83.95,36.0,-84.0,PatientLeg\n"
                          "C1,P2,RN,2019-07-01,1.0,36.0,-84.0,35.9,-83.9,HomeLeg\n");
    const auto r = parse_visit_records(in);
    CHECK(r.records.size() == 3);
    CHECK(r.dropped.empty());
    CHECK(r.records[1].leg_kind == LegKind::PatientLeg);
    CHECK(format_date(r.records[0].visit_date) == "2019-07-01");
  }
  SUBCASE("negative visit length is dropped") {
    std::istringstream in(std::string(kHeader) +
                          "C1,P1,RN,2019-07-01,1.5,35.9,-83.9,35.95,-83.95,HomeLeg\n"
                          "C1,P2,RN,2019-07-01,-1,35.95,-83.95,36.0,-84.0,PatientLeg\n"
                          "C1,P2,RN,2019-07-02,1.0,36.0,-84.0,35.9,-83.9,HomeLeg\n");
    const auto r = parse_visit_records(in);
    CHECK(r.records.size() == 2);
    REQUIRE(r.dropped.size() == 1);
    CHECK(r.dropped[0].line == 3);
  }
  SUBCASE("bad dates, coordinates and disciplines are dropped") {
    std::istringstream in(std::string(kHeader) +
                          "C1,P1,RN,2019-02-30,1.5,35.9,-83.9,35.95,-83.95,HomeLeg\n"
                          "C1,P1,RN,2019-07-01,1.5,95.9,-83.9,35.95,-83.95,HomeLeg\n"
                          "C1,P1,XX,2019-07-01,1.5,35.9,-83.9,35.95,-83.95,HomeLeg\n"
                          "C1,P1,RN,2019-07-01,1.5,35.9,-83.9,35.95\n");
    const auto r = parse_visit_records(in);
    CHECK(r.records.empty());
    CHECK(r.dropped.size() == 4);
  }
  SUBCASE("missing discipline column") {
    std::istringstream in(
        "caregiver_id,patient_id,visit_date,visit_length_hours,origin_lat,origin_lon,dest_lat,"
        "dest_lon,leg_kind\nC1,P1,2019-07-01,1,35,-83,35,-83,HomeLeg\n");
    CHECK(code_of([&] { parse_visit_records(in); }) == ErrorCode::SchemaError);
  }
  SUBCASE("empty file") {
    std::istringstream empty("");
    CHECK(code_of([&] { parse_visit_records(empty); }) == ErrorCode::EmptyDataset);
    std::istringstream header_only(kHeader);
    CHECK(code_of([&] { parse_visit_records(header_only); }) == ErrorCode::EmptyDataset);
  }
  SUBCASE("write then parse round-trips") {
    const geo::GeoPoint a(35.9, -83.9);
    const geo::GeoPoint b(35.95, -83.95);
    const std::vector<VisitRecord> recs = {visit("C1", "P1", day(2019, 7, 1), a, b, LegKind::PatientLeg, 1.25),
                                           visit("C1", "P1", day(2019, 7, 1), b, a, LegKind::HomeLeg, 1.25)};
    std::ostringstream out;
    write_visit_records(out, recs);
    std::istringstream in(out.str());
    const auto back = parse_visit_records(in);
    REQUIRE(back.records.size() == 2);
    CHECK(back.records[0].origin == a);
    CHECK(back.records[1].leg_kind == LegKind::HomeLeg);
    CHECK(back.records[0].visit_length == 1.25);
  }
}

TEST_CASE("split_train_test partitions by cutoff") {
  const geo::GeoPoint a(35.9, -83.9);
  std::vector<VisitRecord> recs;
  // Weekly records July 2019 through March 2020.
  for (auto d = day(2019, 7, 1); d < day(2020, 4, 1); d += std::chrono::days{7}) {
    recs.push_back(visit("C1", "P1", d, a, a, LegKind::PatientLeg));
  }
  const auto s = split_train_test(recs, day(2020, 1, 1));
  CHECK(s.train.size() + s.test.size() == recs.size());
  CHECK(s.train.size() == 27);
  CHECK(s.test.size() == 13);
  for (const auto& r : s.train) CHECK(r.visit_date < day(2020, 1, 1));
  for (const auto& r : s.test) CHECK(r.visit_date >= day(2020, 1, 1));
  CHECK_FALSE(s.one_side_empty);

  const auto early = split_train_test(recs, day(2019, 1, 1));
  CHECK(early.train.empty());
  CHECK(early.test.size() == recs.size());
  CHECK(early.one_side_empty);
}

TEST_CASE("gamma from printed counts") {
  const auto rn = gamma_from_counts(Discipline::RN, 56360, 23505);
  CHECK(rn.gamma_curr == doctest::Approx(23505.0 / 56360.0));
  CHECK(rn.gamma_curr == doctest::Approx(0.42).epsilon(0.005 / 0.42));
  CHECK(rn.gamma_lim == doctest::Approx(0.8 * 23505.0 / 56360.0));

  const auto slp = gamma_from_counts(Discipline::SLP, 846, 476);
  CHECK(slp.gamma_curr == doctest::Approx(0.563).epsilon(0.0005 / 0.563));
  CHECK(slp.gamma_lim == doctest::Approx(0.450).epsilon(0.0005 / 0.45));

  const auto none = gamma_from_counts(Discipline::OT, 10, 0);
  CHECK(none.gamma_curr == 0.0);
  CHECK(none.gamma_lim == 0.0);

  CHECK_THROWS_AS(gamma_from_counts(Discipline::OT, 0, 0), DomainError);
  CHECK_THROWS_AS(gamma_from_counts(Discipline::OT, 3, 4), DomainError);
}

TEST_CASE("compute_gamma counts home legs of one discipline") {
  const geo::GeoPoint h(35.9, -83.9);
  const geo::GeoPoint p(35.95, -83.95);
  std::vector<VisitRecord> recs = {visit("C1", "P1", day(2019, 7, 1), h, p, LegKind::PatientLeg),
                                   visit("C1", "P1", day(2019, 7, 1), p, h, LegKind::HomeLeg),
                                   visit("C1", "P2", day(2019, 7, 2), h, p, LegKind::PatientLeg),
                                   visit("C1", "P2", day(2019, 7, 2), p, p, LegKind::PatientLeg)};
  auto pt = visit("C9", "P9", day(2019, 7, 2), p, h, LegKind::HomeLeg);
  pt.discipline = Discipline::PT;
  recs.push_back(pt);

  const auto g = compute_gamma(recs, Discipline::RN, 0.25);
  CHECK(g.n_total == 4);
  CHECK(g.n_home == 1);
  CHECK(g.gamma_curr == 0.25);
  CHECK(g.gamma_lim == doctest::Approx(0.1875));
  CHECK(code_of([&] { compute_gamma(recs, Discipline::SLP); }) == ErrorCode::NoTravelData);
}

TEST_CASE("gamma bounds hold for any counts") {
  for (std::size_t total = 1; total < 60; total += 7) {
    for (std::size_t home = 0; home <= total; ++home) {
      for (double red : {0.0, 0.2, 0.5, 1.0}) {
        const auto g = gamma_from_counts(Discipline::RN, total, home, red);
        CHECK(g.gamma_curr >= 0.0);
        CHECK(g.gamma_curr <= 1.0);
        CHECK(g.gamma_lim <= g.gamma_curr);
        CHECK(g.gamma_lim >= 0.0);
      }
    }
  }
}

TEST_CASE("build_instance") {
  const geo::GeoPoint h1(35.90, -83.90);
  const geo::GeoPoint h2(36.10, -84.10);
  std::vector<VisitRecord> recs;
  auto tour = [&](const std::string& cg, geo::GeoPoint home, const std::string& pt,
                  geo::GeoPoint at, Date d) {
    recs.push_back(visit(cg, pt, d, home, at, LegKind::HomeLeg, 1.5));
    recs.push_back(visit(cg, pt, d, at, home, LegKind::HomeLeg, 1.5));
  };
  for (int i = 0; i < 3; ++i) {
    tour("C1", h1, "P" + std::to_string(i), geo::GeoPoint(35.91 + 0.01 * i, -83.91), day(2019, 7, 1));
    tour("C2", h2, "Q" + std::to_string(i), geo::GeoPoint(36.11 + 0.01 * i, -84.11), day(2019, 7, 2));
  }
  // P0 visited three times in the first week.
  tour("C1", h1, "P0", geo::GeoPoint(35.91, -83.91), day(2019, 7, 3));
  tour("C1", h1, "P0", geo::GeoPoint(35.91, -83.91), day(2019, 7, 4));

  const auto inst = build_instance(recs, Discipline::RN, InstanceConfig{});
  CHECK(inst.patients.size() == 6);
  CHECK(inst.caregivers.size() == 2);
  CHECK(inst.distance.size() == 8);
  CHECK(inst.find_patient("P0")->weekly_visits == 3);
  CHECK(inst.find_patient("P1")->weekly_visits == 1);
  CHECK(inst.find_patient("P1")->visit_length == 1.5);
  CHECK(inst.find_caregiver("C1")->home == h1);
  CHECK(inst.find_caregiver("C2")->home == h2);

  const auto again = build_instance(recs, Discipline::RN, InstanceConfig{});
  CHECK(again.distance.values() == inst.distance.values());
  CHECK(again.distance.labels() == inst.distance.labels());

  std::vector<VisitRecord> solo;
  for (const auto& r : recs) {
    if (r.caregiver_id == "C1") solo.push_back(r);
  }
  CHECK(build_instance(solo, Discipline::RN, InstanceConfig{}).caregivers.size() == 1);
  CHECK(code_of([&] { build_instance(recs, Discipline::OT, InstanceConfig{}); }) ==
        ErrorCode::NoCaregivers);
}

TEST_CASE("synthetic generator") {
  SynthConfig cfg;
  cfg.n_caregivers = 3;
  cfg.n_patients = 30;
  cfg.cluster_spread = 1.0;
  cfg.min_center_separation = 8.0;

  const auto a = generate_synthetic_dataset(cfg, 42);
  const auto b = generate_synthetic_dataset(cfg, 42);
  std::ostringstream sa;
  std::ostringstream sb;
  write_visit_records(sa, a.records);
  write_visit_records(sb, b.records);
  CHECK(sa.str() == sb.str());
  CHECK(a.truth.patient_ids.size() == 30);

  auto zero = cfg;
  zero.n_patients = 0;
  CHECK_THROWS_AS(generate_synthetic_dataset(zero, 1), DomainError);
  auto flat = cfg;
  flat.region.lat_max = flat.region.lat_min;
  CHECK_THROWS_AS(generate_synthetic_dataset(flat, 1), DomainError);

  SUBCASE("planted centres are recovered") {
    const auto inst = build_instance(a.records, Discipline::RN, InstanceConfig{}, a.truth.roster);
    std::vector<std::size_t> truth;
    for (const auto& p : inst.patients) {
      for (std::size_t i = 0; i < a.truth.patient_ids.size(); ++i) {
        if (a.truth.patient_ids[i] == p.id) truth.push_back(a.truth.patient_center[i]);
      }
    }
    REQUIRE(truth.size() == inst.patients.size());
    const auto pts = inst.patient_points();
    const auto c = clustering::spectral_cluster(pts, 3, clustering::SpectralParams::defaults_for(3), 7);
    CHECK(clustering::rand_index(c.labels, truth) >= 0.95);
  }
}

TEST_CASE("synthetic config JSON overlays only the keys given") {
  const auto c = decode_json<SynthConfig>(
      Json::parse(R"({"discipline":"SLP","n_patients":12,"region":{"lat_min":35.9},"start_date":"2020-02-03"})"),
      "spec");
  const SynthConfig d;
  CHECK(c.discipline == Discipline::SLP);
  CHECK(c.n_patients == 12);
  CHECK(c.n_caregivers == d.n_caregivers);
  CHECK(c.region.lat_min == 35.9);
  CHECK(c.region.lat_max == d.region.lat_max);
  CHECK(format_date(c.start_date) == "2020-02-03");

  CHECK(code_of([] { decode_json<SynthConfig>(Json::parse(R"({"n_patient":3})"), "spec"); }) ==
        ErrorCode::SchemaError);
  CHECK(code_of([] { decode_json<SynthConfig>(Json::parse(R"({"start_date":"soon"})"), "spec"); }) ==
        ErrorCode::SchemaError);
  CHECK(code_of([] { decode_json<SynthConfig>(Json::parse(R"({"weeks":"two"})"), "spec"); }) ==
        ErrorCode::SchemaError);
}
