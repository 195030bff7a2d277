#include "careflow/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "careflow/error.hpp"
#include "careflow/log.hpp"
#include "careflow/random.hpp"

namespace careflow::clustering {

namespace {

constexpr std::uint64_t kSubspaceStartSeed = 0x5EEDF00DULL;
constexpr double kInverseShift = 1e-3;
constexpr int kMaxReseeds = 5;
constexpr std::size_t kMaxLloydIterations = 300;

Matrix to_matrix(const geo::DistanceMatrix& d) {
  const auto n = static_cast<Eigen::Index>(d.size());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = d(i, j);
  }
  return m;
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw DomainError(ErrorCode::InvalidArgument, std::string(what) + " must be square");
  }
}

bool is_symmetric(const Matrix& m) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

/// Flip each column so its largest-magnitude entry (lowest index on ties) is
/// positive; makes eigenvector output independent of solver sign choices.
void canonical_signs(Matrix& v) {
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      if (std::abs(v(r, c)) > best + 1e-12) {
        best = std::abs(v(r, c));
        arg = r;
      }
    }
    if (v(arg, c) < 0) v.col(c) *= -1.0;
  }
}

EigenResult dense_eigenpairs(const Matrix& l, std::size_t count) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(l);
  if (solver.info() != Eigen::Success) {
    throw DomainError(ErrorCode::InvalidArgument, "dense eigen-decomposition failed");
  }
  EigenResult r;
  const auto k = static_cast<Eigen::Index>(count);
  r.values = solver.eigenvalues().head(k);
  r.vectors = solver.eigenvectors().leftCols(k);
  canonical_signs(r.vectors);
  return r;
}

Matrix orthonormalize(const Matrix& m) {
  Eigen::HouseholderQR<Matrix> qr(m);
  return qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
}

std::optional<EigenResult> subspace_eigenpairs(const Matrix& l, std::size_t count,
                                               std::size_t max_iter, double tol) {
  const auto n = l.rows();
  const auto k = static_cast<Eigen::Index>(count);
  const Eigen::Index block = std::min<Eigen::Index>(n, k + std::max<Eigen::Index>(k, 8));
  // Shift-invert: the smallest eigenvalues of L dominate (L + sigma I)^-1.
  Eigen::LLT<Matrix> factor(l + kInverseShift * Matrix::Identity(n, n));
  if (factor.info() != Eigen::Success) return std::nullopt;

  Rng rng(kSubspaceStartSeed);
  Matrix q(n, block);
  for (Eigen::Index j = 0; j < block; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) q(i, j) = rng.uniform(-1.0, 1.0);
  }
  q = orthonormalize(q);

  for (std::size_t iter = 1; iter <= max_iter; ++iter) {
    q = orthonormalize(factor.solve(q));
    const Matrix h = q.transpose() * l * q;
    Eigen::SelfAdjointEigenSolver<Matrix> small(0.5 * (h + h.transpose()));
    q = q * small.eigenvectors();
    const Eigen::VectorXd theta = small.eigenvalues();

    double worst = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double res = (l * q.col(c) - theta(c) * q.col(c)).norm();
      worst = std::max(worst, res);
    }
    if (worst <= tol) {
      EigenResult r;
      r.values = theta.head(k);
      r.vectors = q.leftCols(k);
      r.iterations = iter;
      canonical_signs(r.vectors);
      return r;
    }
  }
  return std::nullopt;
}

double squared_distance(const Matrix& points, Eigen::Index row, const Matrix& centroids,
                        Eigen::Index c) {
  return (points.row(row) - centroids.row(c)).squaredNorm();
}

struct LloydOutcome {
  std::vector<std::size_t> labels;
  Matrix centroids;
  double inertia = 0.0;
};

Matrix kmeanspp_init(const Matrix& x, std::size_t clusters, Rng& rng) {
  const auto n = x.rows();
  Matrix centroids(static_cast<Eigen::Index>(clusters), x.cols());
  std::size_t first = rng.index(static_cast<std::size_t>(n));
  centroids.row(0) = x.row(static_cast<Eigen::Index>(first));
  std::vector<double> closest(static_cast<std::size_t>(n), std::numeric_limits<double>::max());
  for (std::size_t c = 1; c < clusters; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = squared_distance(x, i, centroids, static_cast<Eigen::Index>(c - 1));
      closest[i] = std::min(closest[i], d);
      total += closest[i];
    }
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.index(static_cast<std::size_t>(n));
    } else {
      const double target = rng.uniform() * total;
      double cumulative = 0.0;
      pick = static_cast<std::size_t>(n) - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (closest[i] <= 0.0) continue;
        cumulative += closest[i];
        if (cumulative > target) {
          pick = static_cast<std::size_t>(i);
          break;
        }
      }
    }
    centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
  }
  return centroids;
}

void update_means(const Matrix& x, const std::vector<std::size_t>& labels, Matrix& centroids) {
  const auto k = centroids.rows();
  Matrix sums = Matrix::Zero(k, x.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    sums.row(static_cast<Eigen::Index>(labels[i])) += x.row(i);
    counts[labels[i]] += 1;
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    if (counts[c] > 0) centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
  }
}

LloydOutcome lloyd(const Matrix& x, std::size_t clusters, Rng& rng) {
  const auto n = x.rows();
  const auto k = static_cast<Eigen::Index>(clusters);
  Matrix centroids = kmeanspp_init(x, clusters, rng);
  constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> labels(static_cast<std::size_t>(n), kUnassigned);
  int reseeds = 0;

  for (std::size_t iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::size_t best = labels[i];
      double best_d = best == kUnassigned
                          ? std::numeric_limits<double>::infinity()
                          : squared_distance(x, i, centroids, static_cast<Eigen::Index>(best));
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = squared_distance(x, i, centroids, c);
        // Strict improvement keeps the current label on ties, lowest index otherwise.
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::size_t>(c);
        }
      }
      if (best != labels[i]) {
        labels[i] = best;
        changed = true;
      }
    }

    std::vector<std::size_t> counts(clusters, 0);
    for (auto l : labels) counts[l] += 1;
    for (std::size_t c = 0; c < clusters; ++c) {
      if (counts[c] != 0) continue;
      if (++reseeds > kMaxReseeds) {
        throw DomainError(ErrorCode::EmptyCluster,
                          "k-means left a cluster empty after repeated re-seeding");
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[labels[i]] <= 1) continue;
        const double d =
            squared_distance(x, i, centroids, static_cast<Eigen::Index>(labels[i]));
        if (d > far_d) {
          far_d = d;
          far = static_cast<std::size_t>(i);
        }
      }
      counts[labels[far]] -= 1;
      labels[far] = c;
      counts[c] = 1;
      centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(far));
      changed = true;
    }

    update_means(x, labels, centroids);
    if (!changed) break;
  }
  update_means(x, labels, centroids);

  LloydOutcome out;
  out.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.inertia += squared_distance(x, i, centroids, static_cast<Eigen::Index>(labels[i]));
  }
  out.labels = std::move(labels);
  out.centroids = std::move(centroids);
  return out;
}

}  // namespace

std::string_view to_string(Kernel k) noexcept { return k == Kernel::RBF ? "rbf" : "knn"; }

std::string_view to_string(EigStrategy s) noexcept {
  return s == EigStrategy::Dense ? "dense" : "iterative";
}

std::optional<Kernel> parse_kernel(std::string_view s) {
  if (s == "rbf") return Kernel::RBF;
  if (s == "knn") return Kernel::KNearest;
  return std::nullopt;
}

std::optional<EigStrategy> parse_eig_strategy(std::string_view s) {
  if (s == "dense") return EigStrategy::Dense;
  if (s == "iterative") return EigStrategy::Iterative;
  return std::nullopt;
}

SpectralParams SpectralParams::defaults_for(std::size_t clusters) {
  SpectralParams p;
  p.embed_dim = std::max<std::size_t>(1, clusters);
  p.knn_k = 10 * std::max<std::size_t>(1, clusters);
  return p;
}

void validate(const SpectralParams& p, std::size_t n) {
  auto fail = [](const std::string& m) { throw DomainError(ErrorCode::InvalidArgument, m); };
  if (!(p.psi > 0.0) || !std::isfinite(p.psi)) fail("psi must be positive");
  if (p.knn_k < 1 || p.knn_k >= n) fail("knn_k must lie in [1, n)");
  if (p.embed_dim < 1 || p.embed_dim > n - 1) fail("embed_dim must lie in [1, n-1]");
  if (p.kmeans_n_init < 1) fail("kmeans_n_init must be positive");
  if (p.eig_max_iter < 1) fail("eig_max_iter must be positive");
  if (!(p.eig_tol > 0.0)) fail("eig_tol must be positive");
}

std::vector<std::vector<std::size_t>> ClusterAssignment::members() const {
  std::vector<std::vector<std::size_t>> out(clusters);
  for (std::size_t i = 0; i < labels.size(); ++i) out.at(labels[i]).push_back(i);
  return out;
}

// ---------------------------------------------------------------------------

Matrix rbf_affinity(const Matrix& d, double psi) {
  require_square(d, "distance matrix");
  if (!(psi > 0.0) || !std::isfinite(psi)) {
    throw DomainError(ErrorCode::InvalidArgument, "psi must be positive");
  }
  Matrix k = (-psi * d.array()).exp().matrix();
  k.diagonal().setOnes();
  return k;
}

Matrix rbf_affinity(const geo::DistanceMatrix& d, double psi) {
  return rbf_affinity(to_matrix(d), psi);
}

Matrix knn_affinity(const Matrix& d, std::size_t k) {
  require_square(d, "distance matrix");
  const auto n = static_cast<std::size_t>(d.rows());
  if (k < 1 || k >= n) {
    throw DomainError(ErrorCode::InvalidArgument, "knn k must lie in [1, n)");
  }
  Matrix a = Matrix::Zero(d.rows(), d.cols());
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return d(i, x) < d(i, y);
    });
    for (std::size_t t = 0; t < k; ++t) {
      a(i, order[t]) = 1.0;
      a(order[t], i) = 1.0;
    }
  }
  return a;
}

Matrix knn_affinity(const geo::DistanceMatrix& d, std::size_t k) {
  return knn_affinity(to_matrix(d), k);
}

Matrix normalized_laplacian(const Matrix& a) {
  require_square(a, "affinity matrix");
  if (!is_symmetric(a)) {
    throw DomainError(ErrorCode::InvalidArgument, "affinity matrix must be symmetric");
  }
  if ((a.array() < 0.0).any()) {
    throw DomainError(ErrorCode::InvalidArgument, "affinity matrix must be non-negative");
  }
  const auto n = a.rows();
  const Eigen::VectorXd degree = a.rowwise().sum();
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inv_sqrt(i) = degree(i) > 0.0 ? 1.0 / std::sqrt(degree(i)) : 0.0;
  }
  Matrix l = -(inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (degree(i) > 0.0) {
      l(i, i) += 1.0;
    } else {
      l.row(i).setZero();
      l.col(i).setZero();
      l(i, i) = 1.0;
    }
  }
  return 0.5 * (l + l.transpose());
}

EigenResult smallest_eigenpairs(const Matrix& l, std::size_t count, EigStrategy strategy,
                                std::size_t max_iter, double tol) {
  require_square(l, "laplacian");
  if (count < 1 || count > static_cast<std::size_t>(l.rows())) {
    throw DomainError(ErrorCode::InvalidArgument, "eigenpair count out of range");
  }
  if (strategy == EigStrategy::Iterative) {
    if (auto r = subspace_eigenpairs(l, count, max_iter, tol)) return *r;
    log::debug("iterative eigensolver did not converge in " + std::to_string(max_iter) +
              " iterations; falling back to dense");
    auto r = dense_eigenpairs(l, count);
    r.converged = false;
    r.fell_back = true;
    r.iterations = max_iter;
    return r;
  }
  return dense_eigenpairs(l, count);
}

Matrix spectral_embed(const Matrix& l, std::size_t embed_dim, EigStrategy strategy,
                      std::size_t max_iter, double tol) {
  Matrix v = smallest_eigenpairs(l, embed_dim, strategy, max_iter, tol).vectors;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double norm = v.row(i).norm();
    if (norm > 0.0) v.row(i) /= norm;
  }
  return v;
}

KMeansResult kmeans(const Matrix& points, std::size_t clusters, std::size_t n_init,
                    std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (clusters < 1) throw DomainError(ErrorCode::InvalidArgument, "k-means needs C >= 1");
  if (clusters > n) {
    throw DomainError(ErrorCode::InvalidArgument, "k-means needs C <= number of points");
  }
  if (n_init < 1) throw DomainError(ErrorCode::InvalidArgument, "n_init must be positive");

  std::optional<LloydOutcome> best;
  std::size_t best_restart = 0;
  for (std::size_t r = 0; r < n_init; ++r) {
    Rng rng(mix_seed(seed, r));
    auto outcome = lloyd(points, clusters, rng);
    if (!best || outcome.inertia < best->inertia) {
      best = std::move(outcome);
      best_restart = r;
    }
  }

  // Canonical numbering: clusters ordered by their lowest member index.
  constexpr std::size_t kUnseen = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> remap(clusters, kUnseen);
  std::size_t next = 0;
  for (auto l : best->labels) {
    if (remap[l] == kUnseen) remap[l] = next++;
  }
  KMeansResult out;
  out.labels.reserve(n);
  for (auto l : best->labels) out.labels.push_back(remap[l]);
  out.centroids = Matrix(static_cast<Eigen::Index>(clusters), points.cols());
  for (std::size_t c = 0; c < clusters; ++c) {
    out.centroids.row(static_cast<Eigen::Index>(remap[c])) =
        best->centroids.row(static_cast<Eigen::Index>(c));
  }
  out.inertia = best->inertia;
  out.best_restart = best_restart;
  return out;
}

ClusterAssignment spectral_cluster(const geo::DistanceMatrix& d, std::size_t clusters,
                                   const SpectralParams& params, std::uint64_t seed) {
  const std::size_t n = d.size();
  if (clusters < 1) throw DomainError(ErrorCode::InvalidArgument, "cluster count must be >= 1");
  if (n < clusters) {
    throw DomainError(ErrorCode::InsufficientPatients,
                      std::to_string(n) + " patients cannot fill " + std::to_string(clusters) +
                          " clusters");
  }
  ClusterAssignment out;
  out.clusters = clusters;
  out.patient_ids = d.labels();
  out.seed = seed;
  out.params = params;

  if (clusters == 1) {
    out.labels.assign(n, 0);
    return out;
  }
  if (n == clusters) {
    out.labels.resize(n);
    std::iota(out.labels.begin(), out.labels.end(), 0);
    return out;
  }

  SpectralParams p = params;
  p.knn_k = std::min(p.knn_k, n - 1);
  p.embed_dim = std::min(p.embed_dim, n - 1);
  validate(p, n);
  out.params = p;

  const Matrix dm = to_matrix(d);
  const Matrix affinity =
      p.kernel == Kernel::RBF ? rbf_affinity(dm, p.psi) : knn_affinity(dm, p.knn_k);
  const Matrix laplacian = normalized_laplacian(affinity);
  const Matrix embedding =
      spectral_embed(laplacian, p.embed_dim, p.eig_strategy, p.eig_max_iter, p.eig_tol);
  out.labels = kmeans(embedding, clusters, p.kmeans_n_init, seed).labels;
  return out;
}

ClusterAssignment spectral_cluster(std::span<const geo::GeoPoint> patients, std::size_t clusters,
                                   const SpectralParams& params, std::uint64_t seed,
                                   double road_coeff) {
  std::vector<geo::LabeledPoint> labeled;
  labeled.reserve(patients.size());
  for (std::size_t i = 0; i < patients.size(); ++i) {
    labeled.push_back({std::to_string(i), patients[i]});
  }
  if (labeled.empty()) {
    throw DomainError(ErrorCode::InsufficientPatients, "no patients to cluster");
  }
  return spectral_cluster(geo::build_distance_matrix(labeled, road_coeff), clusters, params,
                          seed);
}

double rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) {
    throw DomainError(ErrorCode::InvalidArgument, "labelings differ in length");
  }
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::size_t agree = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      agree += ((a[i] == a[j]) == (b[i] == b[j])) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(total);
}

}  // namespace careflow::clustering
