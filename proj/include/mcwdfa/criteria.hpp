#pragma once

#include <Eigen/Dense>

namespace mcwdfa {

/// Information criteria of one fitted model. All four are "smaller is better".
struct Criteria {
  long eta = 0;
  double loglik = 0.0;
  double aic = 0.0;
  double aic3 = 0.0;
  double bic = 0.0;
  double icl = 0.0;
  /// -sum_i sum_g z_ig log z_ig, so icl == bic + entropy.
  double entropy = 0.0;
};

/// Free parameters: (G-1) mixing weights plus, per component, B0 (M), B1 (pM),
/// Sigma_e (M(M+1)/2), mu (p), diag W (p) and diag Psi (p). The binary
/// segment map is a discrete structure and is not charged, so the count does
/// not depend on Q.
long count_parameters(int G, int Q, int p, int M);

/// Shannon entropy of the responsibilities with 0 log 0 = 0.
double responsibility_entropy(const Eigen::MatrixXd& z);

Criteria compute_criteria(double loglik, long eta, long n, const Eigen::MatrixXd& z);

}  // namespace mcwdfa
