#pragma once

#include <span>
#include <string>
#include <vector>

#include "mcwdfa/model.hpp"

namespace mcwdfa {

/// Hubert-Arabie adjusted Rand index from the pair-counting contingency
/// table. Labels may be arbitrary integers.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// perm[g_est] = matching true component. Maximizes the number of
/// observations on which MAP and true labels agree (Hungarian assignment on
/// the confusion matrix); among equally good assignments the one with the
/// smallest total distance between matched means wins.
std::vector<int> align_components(const ModelParams& est, const ModelParams& truth,
                                  std::span<const int> labels_est, std::span<const int> labels_true);

/// Reorders components so that estimated component g lands at perm[g].
ModelParams permute_components(const ModelParams& theta, const std::vector<int>& perm);
std::vector<int> relabel(std::span<const int> labels, const std::vector<int>& perm);

/// Entrywise squared error, averaged over runs, of each parameter block.
struct ComponentMse {
  MatrixXd btilde;     // (p+1) x M, intercept row first
  MatrixXd resid_cov;  // M x M
  VectorXd mean;
  VectorXd weights;
  VectorXd uniqueness;
};

struct ParameterMse {
  std::vector<ComponentMse> components;
  long runs = 0;
};

/// `aligned` must already be in the component order of `truth`.
ParameterMse parameter_mse(const std::vector<ModelParams>& aligned, const ModelParams& truth);

struct CorrelationExport {
  int component = 0;
  MatrixXd correlation;
  SegmentMap segments;
};

/// Correlation matrix of X implied by component g's factor covariance.
CorrelationExport export_correlation(const ModelParams& theta, int g);

/// Correlation matrix of an arbitrary covariance.
MatrixXd covariance_to_correlation(const MatrixXd& cov);

/// counts(j, l) = number of maps placing variables j and l in the same segment.
MatrixXd comembership_counts(const std::vector<SegmentMap>& maps);

}  // namespace mcwdfa
