#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "careflow/geo.hpp"
#include "careflow/ingest.hpp"

namespace careflow::clustering {

enum class Kernel { RBF, KNearest };
enum class EigStrategy { Dense, Iterative };

std::string_view to_string(Kernel k) noexcept;
std::string_view to_string(EigStrategy s) noexcept;
std::optional<Kernel> parse_kernel(std::string_view s);
std::optional<EigStrategy> parse_eig_strategy(std::string_view s);

/// Tunable spectral-clustering hyperparameters.
struct SpectralParams {
  Kernel kernel = Kernel::RBF;
  double psi = 1.0;                // RBF coefficient, per mile
  std::size_t knn_k = 10;          // neighbours for the KNearest kernel
  std::size_t embed_dim = 1;       // eigenvectors kept
  std::size_t kmeans_n_init = 10;  // seeded restarts
  EigStrategy eig_strategy = EigStrategy::Iterative;
  std::size_t eig_max_iter = 100;
  double eig_tol = 1e-8;

  /// Defaults tuned for C clusters: embed_dim = C, knn_k = 10C.
  static SpectralParams defaults_for(std::size_t clusters);

  friend bool operator==(const SpectralParams&, const SpectralParams&) = default;
};

/// Throws InvalidArgument when the params cannot be used on n points.
void validate(const SpectralParams& params, std::size_t n);

struct ClusterAssignment {
  ingest::Discipline discipline = ingest::Discipline::RN;
  std::size_t clusters = 0;            // C
  std::vector<std::size_t> labels;     // per patient, in [0, C)
  std::vector<std::string> patient_ids;  // parallel to labels; may be empty
  std::vector<std::string> centroid_of;  // cluster -> caregiver id; empty until attached
  SpectralParams params;
  std::uint64_t seed = 0;

  std::vector<std::vector<std::size_t>> members() const;
  bool has_centroids() const noexcept { return centroid_of.size() == clusters; }
};

using Matrix = Eigen::MatrixXd;

/// k[i][j] = exp(-psi * D[i][j]).
Matrix rbf_affinity(const geo::DistanceMatrix& d, double psi);
Matrix rbf_affinity(const Matrix& d, double psi);

/// Symmetrized (OR) k-nearest-neighbour adjacency, zero diagonal, ties to the
/// lower index.
Matrix knn_affinity(const geo::DistanceMatrix& d, std::size_t k);
Matrix knn_affinity(const Matrix& d, std::size_t k);

/// I - D^-1/2 A D^-1/2; isolated vertices get identity rows.
Matrix normalized_laplacian(const Matrix& affinity);

struct EigenResult {
  Eigen::VectorXd values;  // ascending
  Matrix vectors;          // columns
  bool converged = true;
  std::size_t iterations = 0;
  bool fell_back = false;
};

/// Smallest `count` eigenpairs of a symmetric matrix whose spectrum lies in
/// [0, 2]. The iterative route is shift-inverted block subspace iteration
/// with Rayleigh-Ritz; non-convergence falls back to the dense solver.
EigenResult smallest_eigenpairs(const Matrix& laplacian, std::size_t count,
                                EigStrategy strategy, std::size_t max_iter, double tol);

/// Rows of the `embed_dim` smallest eigenvectors, normalized to unit length.
Matrix spectral_embed(const Matrix& laplacian, std::size_t embed_dim, EigStrategy strategy,
                      std::size_t max_iter, double tol);

struct KMeansResult {
  std::vector<std::size_t> labels;
  Matrix centroids;  // C x dim
  double inertia = 0.0;
  std::size_t best_restart = 0;
};

/// Lloyd's algorithm with k-means++ seeding; best inertia over n_init
/// restarts (ties to the lower restart). Labels are canonical: clusters are
/// numbered in order of their lowest member.
KMeansResult kmeans(const Matrix& points, std::size_t clusters, std::size_t n_init,
                    std::uint64_t seed);

/// Full pipeline on a patient distance matrix. Exactly `clusters` non-empty
/// clusters; throws InsufficientPatients when n < clusters.
ClusterAssignment spectral_cluster(const geo::DistanceMatrix& patient_distances,
                                   std::size_t clusters, const SpectralParams& params,
                                   std::uint64_t seed);

ClusterAssignment spectral_cluster(std::span<const geo::GeoPoint> patients, std::size_t clusters,
                                   const SpectralParams& params, std::uint64_t seed,
                                   double road_coeff = geo::kDefaultRoadCorrection);

/// Agreement between two labelings over all unordered pairs.
double rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

}  // namespace careflow::clustering
