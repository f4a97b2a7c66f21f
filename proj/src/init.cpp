#include "mcwdfa/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mcwdfa/aecm.hpp"
#include "mcwdfa/error.hpp"
#include "mcwdfa/rng.hpp"

namespace mcwdfa {

namespace {

constexpr int kRestarts = 20;
constexpr int kMaxLloyd = 100;

MatrixXd standardized_features(const Dataset& data) {
  MatrixXd f(data.N(), data.p() + data.M());
  f.leftCols(data.p()) = data.X;
  f.rightCols(data.M()) = data.Y;
  const Eigen::RowVectorXd mean = f.colwise().mean();
  f.rowwise() -= mean;
  for (Eigen::Index k = 0; k < f.cols(); ++k) {
    const double sd = std::sqrt(f.col(k).squaredNorm() / static_cast<double>(std::max<Eigen::Index>(f.rows() - 1, 1)));
    if (sd > 0.0) f.col(k) /= sd;
  }
  return f;
}

struct Clustering {
  std::vector<int> labels;
  double wcss = std::numeric_limits<double>::infinity();
};

MatrixXd seed_centroids(const MatrixXd& f, int k, Rng& rng) {
  const Eigen::Index n = f.rows();
  MatrixXd centers(k, f.cols());
  centers.row(0) = f.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  VectorXd d2 = (f.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    Eigen::Index pick = 0;
    if (d2.sum() > 0.0) {
      pick = rng.categorical(d2);
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = f.row(pick);
    d2 = d2.cwiseMin((f.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

Clustering lloyd(const MatrixXd& f, MatrixXd centers) {
  const Eigen::Index n = f.rows();
  const int k = static_cast<int>(centers.rows());
  Clustering out;
  out.labels.assign(static_cast<size_t>(n), -1);
  VectorXd dist(n);
  for (int it = 0; it < kMaxLloyd; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (f.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      dist[i] = best_d;
      if (out.labels[static_cast<size_t>(i)] != best) {
        out.labels[static_cast<size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;

    MatrixXd sums = MatrixXd::Zero(k, f.cols());
    std::vector<long> counts(static_cast<size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(out.labels[static_cast<size_t>(i)]) += f.row(i);
      ++counts[static_cast<size_t>(out.labels[static_cast<size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<size_t>(c)]);
      } else {
        // Empty cluster: move its centroid onto the point farthest from its
        // own centroid.
        Eigen::Index far = 0;
        dist.maxCoeff(&far);
        centers.row(c) = f.row(far);
        dist[far] = 0.0;
      }
    }
  }
  out.wcss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) out.wcss += (f.row(i) - centers.row(out.labels[static_cast<size_t>(i)])).squaredNorm();
  return out;
}

}  // namespace

std::vector<int> kmeans_partition(const Dataset& data, int G, std::uint64_t seed) {
  if (G < 1) throw InvalidArgument("kmeans_partition: G must be positive");
  if (data.N() < G) throw InvalidArgument("kmeans_partition: fewer observations than clusters");
  if (G == 1) return std::vector<int>(static_cast<size_t>(data.N()), 0);
  const MatrixXd f = standardized_features(data);
  Rng rng(seed);
  Clustering best;
  for (int r = 0; r < kRestarts; ++r) {
    Clustering c = lloyd(f, seed_centroids(f, G, rng));
    if (c.wcss < best.wcss) best = std::move(c);
  }
  return best.labels;
}

MatrixXd hard_assignment(const std::vector<int>& labels, int G) {
  MatrixXd z = MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), G);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= G) throw InvalidArgument("label out of range");
    z(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return z;
}

LoadingInit pca_loading_init(const MatrixXd& x_g, int Q) {
  const Eigen::Index n = x_g.rows();
  const Eigen::Index p = x_g.cols();
  if (Q < 1 || Q >= p) throw InvalidArgument("pca_loading_init: need 1 <= Q < p");
  if (n <= Q) throw DegenerateComponent("pca_loading_init: subsample of " + std::to_string(n) +
                                            " rows cannot support " + std::to_string(Q) + " factors", -1);
  const MatrixXd centered = x_g.rowwise() - x_g.colwise().mean();
  MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  cov = (0.5 * (cov + cov.transpose())).eval();

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalFailure("pca_loading_init: eigendecomposition failed");
  // Eigenvalues ascend, so the leading axes are the last Q columns.
  MatrixXd loadings(p, Q);
  for (int q = 0; q < Q; ++q) {
    const Eigen::Index col = p - 1 - q;
    loadings.col(q) = eig.eigenvectors().col(col) * std::sqrt(std::max(eig.eigenvalues()[col], 0.0));
  }
  const MatrixXd mag = loadings.cwiseAbs();

  LoadingInit out;
  out.segments.n_segments = Q;
  out.segments.index.resize(static_cast<size_t>(p));
  out.weights.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::Index best = 0;
    out.weights[j] = mag.row(j).maxCoeff(&best);  // first maximum wins ties
    out.segments.index[static_cast<size_t>(j)] = static_cast<int>(best);
  }

  // Repair empty segments: take the variable (from a segment with spare
  // members) whose non-best loading on the empty segment is largest.
  for (;;) {
    auto sizes = out.segments.sizes();
    const auto empty = std::find(sizes.begin(), sizes.end(), 0);
    if (empty == sizes.end()) break;
    const int q = static_cast<int>(empty - sizes.begin());
    Eigen::Index pick = -1;
    double pick_val = -1.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (sizes[static_cast<size_t>(out.segments.index[static_cast<size_t>(j)])] < 2) continue;
      if (mag(j, q) > pick_val) {
        pick_val = mag(j, q);
        pick = j;
      }
    }
    out.segments.index[static_cast<size_t>(pick)] = q;
  }

  out.uniqueness.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double w = out.weights[j];
    out.uniqueness[j] = std::max(std::abs(cov(j, j) - w * w), kUniquenessFloor);
  }
  return out;
}

InitState initialize(const Dataset& data, int G, int Q, std::uint64_t seed, double min_component_weight) {
  const auto labels = kmeans_partition(data, G, seed);
  InitState out;
  out.Z0 = hard_assignment(labels, G);
  const auto c1 = cm_step_cycle1(data, Responsibilities{out.Z0}, min_component_weight);

  ModelParams theta;
  theta.n_segments = Q;
  theta.components.resize(static_cast<size_t>(G));
  for (int g = 0; g < G; ++g) {
    std::vector<Eigen::Index> rows;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == g) rows.push_back(static_cast<Eigen::Index>(i));
    }
    const MatrixXd x_g = data.X(rows, Eigen::all);
    LoadingInit li;
    try {
      li = pca_loading_init(x_g, Q);
    } catch (const DegenerateComponent& e) {
      throw DegenerateComponent(std::string("component ") + std::to_string(g) + ": " + e.what(), g);
    }
    auto& c = theta.components[static_cast<size_t>(g)];
    c.segments = std::move(li.segments);
    c.weights = std::move(li.weights);
    c.uniqueness = std::move(li.uniqueness);
  }
  c1.apply_to(theta);
  out.theta0 = std::move(theta);
  return out;
}

}  // namespace mcwdfa
