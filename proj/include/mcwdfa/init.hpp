#pragma once

#include <cstdint>
#include <vector>

#include "mcwdfa/model.hpp"

namespace mcwdfa {

/// Hard k-means partition of the column-standardized [X | Y] into G
/// clusters: Lloyd iterations from k-means++ seeds, 20 restarts, lowest
/// within-cluster sum of squares kept. Labels are 0-based.
std::vector<int> kmeans_partition(const Dataset& data, int G, std::uint64_t seed);

MatrixXd hard_assignment(const std::vector<int>& labels, int G);

struct LoadingInit {
  SegmentMap segments;
  VectorXd weights;
  VectorXd uniqueness;
};

/// Segment map, weights and uniquenesses from the first Q principal axes of
/// the subsample covariance.
LoadingInit pca_loading_init(const MatrixXd& x_g, int Q);

struct InitState {
  MatrixXd Z0;
  ModelParams theta0;
};

/// k-means partition, one first-cycle update on the hard partition, then PCA
/// loadings per cluster.
InitState initialize(const Dataset& data, int G, int Q, std::uint64_t seed,
                     double min_component_weight = 2.0);

}  // namespace mcwdfa
