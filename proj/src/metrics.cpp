#include "careflow/metrics.hpp"

#include <cmath>

#include "careflow/error.hpp"

namespace careflow::metrics {

namespace {

struct ClusterSums {
  double centroid_sum = 0.0;  // sum_i d(i, c)
  double pair_sum = 0.0;      // ordered pairs i != j
  std::size_t size = 0;
};

ClusterSums sums(const ResolvedCluster& k, const geo::DistanceMatrix& d) {
  ClusterSums s;
  s.size = k.members.size();
  for (auto i : k.members) {
    s.centroid_sum += d(i, k.centroid);
    for (auto j : k.members) {
      if (i != j) s.pair_sum += d(i, j);
    }
  }
  return s;
}

double gamma_for(std::span<const double> gamma, std::size_t k, std::size_t clusters) {
  if (gamma.size() == 1) return gamma[0];
  if (gamma.size() != clusters) {
    throw DomainError(ErrorCode::InvalidArgument,
                      "gamma must have one entry or one per cluster");
  }
  return gamma[k];
}

double pair_weight(double g, GammaWeighting w) {
  return w == GammaWeighting::Paper ? 1.0 + g : 1.0 - g;
}

void require_clusters(std::span<const ResolvedCluster> clusters) {
  if (clusters.empty()) {
    throw DomainError(ErrorCode::InvalidArgument, "metric needs at least one cluster");
  }
  for (const auto& k : clusters) {
    if (k.members.empty()) {
      throw DomainError(ErrorCode::InvalidArgument, "metric needs non-empty clusters");
    }
  }
}

}  // namespace

std::string_view to_string(GammaWeighting w) noexcept {
  return w == GammaWeighting::Paper ? "paper" : "complement";
}

std::optional<GammaWeighting> parse_gamma_weighting(std::string_view s) {
  if (s == "paper") return GammaWeighting::Paper;
  if (s == "complement") return GammaWeighting::Complement;
  return std::nullopt;
}

std::vector<ResolvedCluster> resolve(const clustering::ClusterAssignment& a,
                                     const geo::DistanceMatrix& d) {
  if (!a.has_centroids()) {
    throw DomainError(ErrorCode::CentroidMissing, "clusters have no attached caregivers");
  }
  if (a.patient_ids.size() != a.labels.size()) {
    throw DomainError(ErrorCode::InvalidArgument, "assignment lacks patient ids");
  }
  std::vector<ResolvedCluster> out(a.clusters);
  for (std::size_t k = 0; k < a.clusters; ++k) {
    if (a.centroid_of[k].empty()) {
      throw DomainError(ErrorCode::CentroidMissing,
                        "cluster " + std::to_string(k) + " has no caregiver");
    }
    out[k].centroid = d.index_of(a.centroid_of[k]);
  }
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    out.at(a.labels[i]).members.push_back(d.index_of(a.patient_ids[i]));
  }
  return out;
}

double ampm(std::span<const ResolvedCluster> clusters, const geo::DistanceMatrix& d,
            std::span<const double> gamma, GammaWeighting w) {
  require_clusters(clusters);
  double total = 0.0;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto s = sums(clusters[k], d);
    const double g = gamma_for(gamma, k, clusters.size());
    const double n = static_cast<double>(s.size);
    const double centroid_mean = s.centroid_sum / n;
    // Singletons have no pairs; their pairwise mean is taken as zero.
    const double pair_mean = s.size > 1 ? s.pair_sum / (n * (n - 1.0)) : 0.0;
    total += g * centroid_mean + pair_weight(g, w) * pair_mean;
  }
  return total / static_cast<double>(clusters.size());
}

double atpm(std::span<const ResolvedCluster> clusters, const geo::DistanceMatrix& d,
            std::span<const double> gamma, GammaWeighting w) {
  require_clusters(clusters);
  double total = 0.0;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto s = sums(clusters[k], d);
    const double g = gamma_for(gamma, k, clusters.size());
    total += g * s.centroid_sum + pair_weight(g, w) * s.pair_sum;
  }
  return total / static_cast<double>(clusters.size());
}

double ampm(const clustering::ClusterAssignment& a, const geo::DistanceMatrix& d,
            std::span<const double> gamma, GammaWeighting w) {
  const auto r = resolve(a, d);
  return ampm(r, d, gamma, w);
}

double atpm(const clustering::ClusterAssignment& a, const geo::DistanceMatrix& d,
            std::span<const double> gamma, GammaWeighting w) {
  const auto r = resolve(a, d);
  return atpm(r, d, gamma, w);
}

double calinski_harabasz(std::span<const ResolvedCluster> clusters, const geo::DistanceMatrix& d,
                         std::size_t n_total_patients) {
  if (clusters.size() < 2) {
    throw DomainError(ErrorCode::UndefinedForSingleCluster,
                      "Calinski-Harabasz needs at least two clusters");
  }
  double centroid_sum = 0.0;
  double pair_sum = 0.0;
  for (const auto& k : clusters) {
    const auto s = sums(k, d);
    centroid_sum += s.centroid_sum;
    pair_sum += s.pair_sum;
  }
  if (!(pair_sum > 0.0)) {
    throw DomainError(ErrorCode::UndefinedDegenerate,
                      "Calinski-Harabasz undefined with zero within-cluster dispersion");
  }
  const double c = static_cast<double>(clusters.size());
  return (centroid_sum / (c - 1.0)) *
         ((static_cast<double>(n_total_patients) - c) / pair_sum);
}

double davies_bouldin(std::span<const ResolvedCluster> clusters, const geo::DistanceMatrix& d) {
  if (clusters.size() < 2) {
    throw DomainError(ErrorCode::UndefinedForSingleCluster,
                      "Davies-Bouldin needs at least two clusters");
  }
  require_clusters(clusters);
  std::vector<double> scatter;
  scatter.reserve(clusters.size());
  for (const auto& k : clusters) {
    const auto s = sums(k, d);
    scatter.push_back(s.centroid_sum / static_cast<double>(s.size));
  }
  double total = 0.0;
  for (std::size_t u = 0; u < clusters.size(); ++u) {
    double worst = 0.0;
    for (std::size_t v = 0; v < clusters.size(); ++v) {
      if (u == v) continue;
      const double sep = d(clusters[u].centroid, clusters[v].centroid);
      if (!(sep > 0.0)) {
        throw DomainError(ErrorCode::CoincidentCentroids,
                          "clusters " + std::to_string(u) + " and " + std::to_string(v) +
                              " share a centroid location");
      }
      worst = std::max(worst, (scatter[u] + scatter[v]) / sep);
    }
    total += worst;
  }
  return total / static_cast<double>(clusters.size());
}

double percent_decrease(double current, double proposed) {
  if (!(current > 0.0)) {
    throw DomainError(ErrorCode::InvalidArgument, "current value must be positive");
  }
  return 100.0 * (current - proposed) / current;
}

MetricsReport evaluate(const clustering::ClusterAssignment& a, const geo::DistanceMatrix& d,
                       std::span<const double> gamma, GammaWeighting w) {
  const auto r = resolve(a, d);
  MetricsReport report;
  report.discipline = std::string(ingest::to_string(a.discipline));
  report.ampm = ampm(r, d, gamma, w);
  report.atpm = atpm(r, d, gamma, w);
  for (std::size_t k = 0; k < r.size(); ++k) {
    report.gamma_used.push_back(gamma_for(gamma, k, r.size()));
  }
  try {
    report.ch = calinski_harabasz(r, d, a.labels.size());
  } catch (const DomainError&) {
  }
  try {
    report.db = davies_bouldin(r, d);
  } catch (const DomainError&) {
  }
  return report;
}

}  // namespace careflow::metrics
