#include "careflow/geo.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <set>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "careflow/csv.hpp"
#include "careflow/error.hpp"

namespace careflow::geo {

namespace {

constexpr double deg2rad(double deg) noexcept { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) noexcept { return rad * 180.0 / std::numbers::pi; }

}  // namespace

std::string_view to_string(PointSource s) noexcept {
  return s == PointSource::Exact ? "Exact" : "ZipCenterFallback";
}

GeoPoint::GeoPoint(double latitude, double longitude, PointSource source)
    : lat_(latitude), lon_(longitude), source_(source) {
  if (!std::isfinite(latitude) || latitude < -90.0 || latitude > 90.0) {
    throw DomainError(ErrorCode::InvalidArgument,
                      "latitude out of range: " + std::to_string(latitude));
  }
  if (!std::isfinite(longitude) || longitude < -180.0 || longitude > 180.0) {
    throw DomainError(ErrorCode::InvalidArgument,
                      "longitude out of range: " + std::to_string(longitude));
  }
}

double haversine_miles(const GeoPoint& a, const GeoPoint& b) noexcept {
  const double phi1 = deg2rad(a.latitude());
  const double phi2 = deg2rad(b.latitude());
  const double dphi = phi2 - phi1;
  const double dlambda = deg2rad(b.longitude() - a.longitude());
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  h = std::min(1.0, std::max(0.0, h));
  return 2.0 * kEarthRadiusMiles * std::asin(std::sqrt(h));
}

double corrected_distance(const GeoPoint& a, const GeoPoint& b, double coeff) {
  if (!(coeff > 0.0) || !std::isfinite(coeff)) {
    throw DomainError(ErrorCode::InvalidArgument, "correction coefficient must be positive");
  }
  return haversine_miles(a, b) * coeff;
}

GeoPoint destination_point(const GeoPoint& origin, double bearing_rad, double miles) {
  const double delta = miles / kEarthRadiusMiles;
  const double phi1 = deg2rad(origin.latitude());
  const double lambda1 = deg2rad(origin.longitude());
  const double phi2 = std::asin(std::sin(phi1) * std::cos(delta) +
                                std::cos(phi1) * std::sin(delta) * std::cos(bearing_rad));
  const double lambda2 =
      lambda1 + std::atan2(std::sin(bearing_rad) * std::sin(delta) * std::cos(phi1),
                           std::cos(delta) - std::sin(phi1) * std::sin(phi2));
  double lon = std::remainder(rad2deg(lambda2), 360.0);
  if (lon == 180.0) lon = -180.0;
  return GeoPoint(rad2deg(phi2), lon, origin.source());
}

// ---------------------------------------------------------------------------

DistanceMatrix::DistanceMatrix(std::vector<std::string> labels, std::vector<double> values)
    : labels_(std::move(labels)), values_(std::move(values)) {
  if (values_.size() != labels_.size() * labels_.size()) {
    throw DomainError(ErrorCode::InvalidArgument, "distance matrix is not square");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second) {
      throw DomainError(ErrorCode::InvalidArgument, "duplicate label: " + labels_[i]);
    }
  }
}

std::optional<std::size_t> DistanceMatrix::find(std::string_view label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t DistanceMatrix::index_of(std::string_view label) const {
  if (auto i = find(label)) return *i;
  throw DomainError(ErrorCode::InvalidArgument,
                    "unknown node label: " + std::string(label));
}

DistanceMatrix DistanceMatrix::subset(std::span<const std::size_t> indices) const {
  std::vector<std::string> labels;
  labels.reserve(indices.size());
  std::vector<double> values(indices.size() * indices.size());
  for (std::size_t a = 0; a < indices.size(); ++a) {
    labels.push_back(labels_.at(indices[a]));
    for (std::size_t b = 0; b < indices.size(); ++b) {
      values[a * indices.size() + b] = (*this)(indices[a], indices[b]);
    }
  }
  return DistanceMatrix(std::move(labels), std::move(values));
}

DistanceMatrix build_distance_matrix(std::span<const LabeledPoint> points, double coeff) {
  if (points.empty()) {
    throw DomainError(ErrorCode::InvalidArgument, "distance matrix needs at least one point");
  }
  const std::size_t n = points.size();
  std::vector<std::string> labels;
  labels.reserve(n);
  std::set<std::string_view> seen;
  for (const auto& p : points) {
    if (!seen.insert(p.label).second) {
      throw DomainError(ErrorCode::InvalidArgument, "duplicate label: " + p.label);
    }
    labels.push_back(p.label);
  }
  std::vector<double> values(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = corrected_distance(points[i].point, points[j].point, coeff);
      values[i * n + j] = d;
      values[j * n + i] = d;
    }
  }
  return DistanceMatrix(std::move(labels), std::move(values));
}

// ---------------------------------------------------------------------------

FixtureGeocoder::FixtureGeocoder(std::map<std::string, LatLon> entries)
    : entries_(std::move(entries)) {}

FixtureGeocoder FixtureGeocoder::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError(ErrorCode::Io, "cannot open geocoder fixture: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(ErrorCode::SchemaError, std::string("bad geocoder fixture: ") + e.what());
  }
  if (!doc.is_object()) {
    throw DomainError(ErrorCode::SchemaError, "geocoder fixture must be a JSON object");
  }
  std::map<std::string, LatLon> entries;
  for (const auto& [address, value] : doc.items()) {
    if (value.is_array() && value.size() == 2) {
      entries[address] = {value[0].get<double>(), value[1].get<double>()};
    } else if (value.is_object()) {
      entries[address] = {value.at("lat").get<double>(), value.at("lon").get<double>()};
    } else {
      throw DomainError(ErrorCode::SchemaError, "bad fixture entry for " + address);
    }
  }
  return FixtureGeocoder(std::move(entries));
}

std::optional<LatLon> FixtureGeocoder::lookup(const std::string& address) const {
  auto it = entries_.find(address);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

HttpGeocoder::HttpGeocoder(std::string host, int port, std::string path, std::string benchmark)
    : host_(std::move(host)), port_(port), path_(std::move(path)),
      benchmark_(std::move(benchmark)) {}

std::optional<LatLon> HttpGeocoder::lookup(const std::string& address) const {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(5);
  client.set_read_timeout(10);
  httplib::Params params{{"address", address}, {"benchmark", benchmark_}, {"format", "json"}};
  auto res = client.Get(path_, params, httplib::Headers{});
  if (!res || res->status != 200) return std::nullopt;
  try {
    const auto doc = nlohmann::json::parse(res->body);
    const auto& matches = doc.at("result").at("addressMatches");
    if (!matches.is_array() || matches.empty()) return std::nullopt;
    const auto& coords = matches.at(0).at("coordinates");
    return LatLon{coords.at("y").get<double>(), coords.at("x").get<double>()};
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

ZipTable ZipTable::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError(ErrorCode::Io, "cannot open zip table: " + path);
  std::map<std::string, LatLon, std::less<>> entries;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = csv::split_line(line);
    if (header) {
      header = false;
      if (fields.size() < 3 || fields[0] != "zip" || fields[1] != "lat" || fields[2] != "lon") {
        throw DomainError(ErrorCode::SchemaError, "zip table header must be zip,lat,lon");
      }
      continue;
    }
    if (fields.size() < 3) continue;
    entries[fields[0]] = {std::stod(fields[1]), std::stod(fields[2])};
  }
  return ZipTable(std::move(entries));
}

std::optional<LatLon> ZipTable::find(std::string_view zip) const {
  auto it = entries_.find(zip);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> extract_zip(std::string_view address) {
  static const std::regex zip_re(R"((^|[^0-9])([0-9]{5})(-[0-9]{4})?(?![0-9]))");
  std::optional<std::string> last;
  const std::string s(address);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), zip_re); it != std::sregex_iterator();
       ++it) {
    last = (*it)[2].str();
  }
  return last;
}

GeoPoint geocode_address(const std::string& address, const GeocoderBackend& backend,
                         const ZipTable& zips) {
  if (address.empty()) {
    throw DomainError(ErrorCode::InvalidArgument, "empty address");
  }
  if (auto hit = backend.lookup(address)) {
    return GeoPoint(hit->latitude, hit->longitude, PointSource::Exact);
  }
  const auto zip = extract_zip(address);
  if (zip) {
    if (auto centre = zips.find(*zip)) {
      return GeoPoint(centre->latitude, centre->longitude, PointSource::ZipCenterFallback);
    }
  }
  throw DomainError(ErrorCode::UnresolvableAddress,
                    "no geocoder match and no zip centroid for: " + address);
}

}  // namespace careflow::geo
