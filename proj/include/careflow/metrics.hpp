#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "careflow/clustering.hpp"
#include "careflow/geo.hpp"

namespace careflow::metrics {

/// Weight pair applied to the home-leg and between-patient terms.
/// Paper: (gamma, 1 + gamma). Complement: (gamma, 1 - gamma).
enum class GammaWeighting { Paper, Complement };

std::string_view to_string(GammaWeighting w) noexcept;
std::optional<GammaWeighting> parse_gamma_weighting(std::string_view s);

/// Clusters resolved against a distance matrix: each cluster holds the matrix
/// index of its centroid (the caregiver) and of its member patients.
struct ResolvedCluster {
  std::size_t centroid = 0;
  std::vector<std::size_t> members;
};

/// Looks up patient ids and centroid caregiver ids in `d`. Throws
/// CentroidMissing when centroids are not attached.
std::vector<ResolvedCluster> resolve(const clustering::ClusterAssignment& a,
                                     const geo::DistanceMatrix& d);

/// Average of the mean pairwise mileage. `gamma` holds one ratio per cluster,
/// or a single ratio applied to all clusters.
double ampm(std::span<const ResolvedCluster> clusters, const geo::DistanceMatrix& d,
            std::span<const double> gamma, GammaWeighting w = GammaWeighting::Paper);
/// Average of the total pairwise mileage.
double atpm(std::span<const ResolvedCluster> clusters, const geo::DistanceMatrix& d,
            std::span<const double> gamma, GammaWeighting w = GammaWeighting::Paper);

double ampm(const clustering::ClusterAssignment& a, const geo::DistanceMatrix& d,
            std::span<const double> gamma, GammaWeighting w = GammaWeighting::Paper);
double atpm(const clustering::ClusterAssignment& a, const geo::DistanceMatrix& d,
            std::span<const double> gamma, GammaWeighting w = GammaWeighting::Paper);

/// Calinski-Harabasz as adapted to caregiver centroids:
///   (sum_k sum_{i in k} d(i, c_k) / (|CL| - 1)) * ((n_total - |CL|) / sum_k sum_{i != j in k} d(i, j))
double calinski_harabasz(std::span<const ResolvedCluster> clusters, const geo::DistanceMatrix& d,
                         std::size_t n_total_patients);

/// Davies-Bouldin with R_uv = (mean d(i, c_u) + mean d(j, c_v)) / d(c_u, c_v).
double davies_bouldin(std::span<const ResolvedCluster> clusters, const geo::DistanceMatrix& d);

/// 100 * (current - proposed) / current.
double percent_decrease(double current, double proposed);

struct MetricsReport {
  std::string discipline;
  double ampm = 0.0;
  double atpm = 0.0;
  std::optional<double> ch;  // absent when undefined for the assignment
  std::optional<double> db;
  std::vector<double> gamma_used;
};

MetricsReport evaluate(const clustering::ClusterAssignment& a, const geo::DistanceMatrix& d,
                       std::span<const double> gamma, GammaWeighting w = GammaWeighting::Paper);

}  // namespace careflow::metrics
