#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace careflow::geo {

inline constexpr double kEarthRadiusMiles = 3958.8;
inline constexpr double kDefaultRoadCorrection = 1.285;

enum class PointSource { Exact, ZipCenterFallback };

std::string_view to_string(PointSource s) noexcept;

/// A validated WGS84 coordinate in degrees.
class GeoPoint {
 public:
  GeoPoint() = default;
  /// Throws DomainError(InvalidArgument) when out of range or non-finite.
  GeoPoint(double latitude, double longitude, PointSource source = PointSource::Exact);

  double latitude() const noexcept { return lat_; }
  double longitude() const noexcept { return lon_; }
  PointSource source() const noexcept { return source_; }

  /// Equality on coordinates only; the source tag is provenance, not position.
  friend bool operator==(const GeoPoint& a, const GeoPoint& b) noexcept {
    return a.lat_ == b.lat_ && a.lon_ == b.lon_;
  }

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
  PointSource source_ = PointSource::Exact;
};

struct LabeledPoint {
  std::string label;
  GeoPoint point;
};

/// Great-circle distance on a sphere of radius kEarthRadiusMiles.
double haversine_miles(const GeoPoint& a, const GeoPoint& b) noexcept;

/// Road-distance estimate: haversine scaled by a uniform correction factor.
double corrected_distance(const GeoPoint& a, const GeoPoint& b,
                          double coeff = kDefaultRoadCorrection);

/// Point reached travelling `miles` from `origin` along initial `bearing_rad`.
GeoPoint destination_point(const GeoPoint& origin, double bearing_rad, double miles);

/// Dense symmetric matrix of corrected miles with node labels.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::vector<std::string> labels, std::vector<double> values);

  std::size_t size() const noexcept { return labels_.size(); }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return values_[i * labels_.size() + j];
  }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<double>& values() const noexcept { return values_; }

  std::optional<std::size_t> find(std::string_view label) const;
  /// Throws DomainError(InvalidArgument) for an unknown label.
  std::size_t index_of(std::string_view label) const;
  double between(std::string_view a, std::string_view b) const {
    return (*this)(index_of(a), index_of(b));
  }

  /// Sub-matrix over the given row/column indices, in that order.
  DistanceMatrix subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<std::string> labels_;
  std::vector<double> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

DistanceMatrix build_distance_matrix(std::span<const LabeledPoint> points,
                                     double coeff = kDefaultRoadCorrection);

// ---------------------------------------------------------------------------
// Geocoding

struct LatLon {
  double latitude;
  double longitude;
};

class GeocoderBackend {
 public:
  virtual ~GeocoderBackend() = default;
  virtual std::optional<LatLon> lookup(const std::string& address) const = 0;
};

/// Offline backend reading `{"<address>": [lat, lon], ...}` or
/// `{"<address>": {"lat": .., "lon": ..}}` from a JSON file.
class FixtureGeocoder final : public GeocoderBackend {
 public:
  explicit FixtureGeocoder(std::map<std::string, LatLon> entries);
  static FixtureGeocoder from_file(const std::string& path);

  std::optional<LatLon> lookup(const std::string& address) const override;

 private:
  std::map<std::string, LatLon> entries_;
};

/// Client for a Census-style one-line-address geocoding service speaking plain
/// HTTP. Expects `result.addressMatches[0].coordinates.{x,y}` in the reply.
/// Network failures are reported as not-found so the zip fallback applies.
class HttpGeocoder final : public GeocoderBackend {
 public:
  HttpGeocoder(std::string host, int port,
               std::string path = "/geocoder/locations/onelineaddress",
               std::string benchmark = "Public_AR_Current");

  std::optional<LatLon> lookup(const std::string& address) const override;

 private:
  std::string host_;
  int port_;
  std::string path_;
  std::string benchmark_;
};

/// Zip-code centroid table loaded from CSV `zip,lat,lon`.
class ZipTable {
 public:
  ZipTable() = default;
  explicit ZipTable(std::map<std::string, LatLon, std::less<>> entries)
      : entries_(std::move(entries)) {}
  static ZipTable from_csv(const std::string& path);

  std::optional<LatLon> find(std::string_view zip) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, LatLon, std::less<>> entries_;
};

/// Last standalone 5-digit group in the address, if any.
std::optional<std::string> extract_zip(std::string_view address);

/// Exact coordinate from the backend, else the zip centroid
/// (source = ZipCenterFallback). Throws UnresolvableAddress otherwise.
GeoPoint geocode_address(const std::string& address, const GeocoderBackend& backend,
                         const ZipTable& zips);

/// Running tally of how addresses were resolved.
struct GeocodeStats {
  std::size_t exact = 0;
  std::size_t fallback = 0;
  double fallback_rate() const noexcept {
    const auto total = exact + fallback;
    return total == 0 ? 0.0 : static_cast<double>(fallback) / static_cast<double>(total);
  }
  void record(const GeoPoint& p) noexcept {
    (p.source() == PointSource::Exact ? exact : fallback) += 1;
  }
};

}  // namespace careflow::geo
