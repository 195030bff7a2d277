#pragma once

// JSON encodings shared by the CLI artifacts and the REST API.

#include <json.hpp>

#include "careflow/allocation.hpp"
#include "careflow/clustering.hpp"
#include "careflow/error.hpp"
#include "careflow/geo.hpp"
#include "careflow/ingest.hpp"
#include "careflow/metrics.hpp"
#include "careflow/supply.hpp"
#include "careflow/tuner.hpp"

namespace careflow {

using Json = nlohmann::json;

namespace geo {
void to_json(Json& j, const GeoPoint& p);
void from_json(const Json& j, GeoPoint& p);
}  // namespace geo

namespace ingest {
void to_json(Json& j, const Discipline& d);
void from_json(const Json& j, Discipline& d);
void to_json(Json& j, const PatientNode& p);
void from_json(const Json& j, PatientNode& p);
void to_json(Json& j, const CaregiverNode& c);
void from_json(const Json& j, CaregiverNode& c);
void to_json(Json& j, const GammaProfile& g);
// Overlays the keys present in j onto c; unknown keys are a SchemaError.
void from_json(const Json& j, SynthConfig& c);
}  // namespace ingest

namespace clustering {
void to_json(Json& j, const SpectralParams& p);
void from_json(const Json& j, SpectralParams& p);
void to_json(Json& j, const ClusterAssignment& a);
void from_json(const Json& j, ClusterAssignment& a);
}  // namespace clustering

namespace metrics {
void to_json(Json& j, const MetricsReport& r);
}  // namespace metrics

namespace tuner {
void to_json(Json& j, const TuneResult& r);
void from_json(const Json& j, TuneResult& r);
}  // namespace tuner

namespace allocation {
void to_json(Json& j, const Baseline& b);
void from_json(const Json& j, Baseline& b);
void to_json(Json& j, const PatientAssignment& a);
void to_json(Json& j, const CaregiverLoad& l);
void to_json(Json& j, const FeasibilityReport& r);
void to_json(Json& j, const WeeklyResult& r);
}  // namespace allocation

namespace supply {
void to_json(Json& j, const SensitivityRow& r);
void to_json(Json& j, const SensitivityReport& r);
void from_json(const Json& j, SensitivityReport& r);
void to_json(Json& j, const TTestResult& t);
}  // namespace supply

/// Parses JSON, converting parse and type errors into DomainError(SchemaError).
template <typename T>
T decode_json(const Json& j, std::string_view what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(ErrorCode::SchemaError, std::string(what) + ": " + e.what());
  }
}

Json parse_json(std::string_view text, std::string_view what);

/// Writes through a temporary file and rename, so readers never see a
/// partial document.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace careflow
