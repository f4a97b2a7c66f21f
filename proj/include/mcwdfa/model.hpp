#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace mcwdfa {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Assignment of each explanatory variable to exactly one of Q segments.
///
/// Stored as a 0-based segment index per variable, which is the compact form
/// of the p x Q binary row-stochastic membership matrix V: row j of V has its
/// single 1 in column index[j].
struct SegmentMap {
  std::vector<int> index;
  int n_segments = 0;

  SegmentMap() = default;
  SegmentMap(std::vector<int> idx, int q) : index(std::move(idx)), n_segments(q) {}

  int n_variables() const { return static_cast<int>(index.size()); }
  std::vector<int> sizes() const;
  /// Every row one-hot in range and every segment non-empty.
  bool valid() const;
  MatrixXd membership() const;
  static SegmentMap from_membership(const MatrixXd& v);
  /// Variables split into Q nearly equal runs: j -> floor(j*Q/p).
  static SegmentMap contiguous(int p, int q);

  bool operator==(const SegmentMap&) const = default;
};

struct ComponentParams {
  VectorXd intercept;   // B0, length M
  MatrixXd slopes;      // B1, p x M
  MatrixXd resid_cov;   // Sigma_e, M x M
  VectorXd mean;        // mu, length p
  SegmentMap segments;  // V
  VectorXd weights;     // diag(W), length p
  VectorXd uniqueness;  // diag(Psi), length p

  int p() const { return static_cast<int>(mean.size()); }
  int m() const { return static_cast<int>(intercept.size()); }
  /// Stacked coefficients [B0'; B1], (p+1) x M; row 0 is the intercept.
  MatrixXd btilde() const;
  void set_btilde(const MatrixXd& bt);
};

struct ModelParams {
  VectorXd pi;
  std::vector<ComponentParams> components;
  int n_segments = 0;

  int G() const { return static_cast<int>(components.size()); }
  int Q() const { return n_segments; }
  int p() const { return components.empty() ? 0 : components.front().p(); }
  int M() const { return components.empty() ? 0 : components.front().m(); }

  /// Throws InvalidArgument naming the first violated invariant.
  void validate() const;
};

struct Dataset {
  MatrixXd X;  // N x p
  MatrixXd Y;  // N x M
  std::optional<std::vector<int>> labels;  // 0-based component labels

  long N() const { return X.rows(); }
  int p() const { return static_cast<int>(X.cols()); }
  int M() const { return static_cast<int>(Y.cols()); }

  void validate() const;
};

/// Gamma = W V V' W + Psi as a dense p x p matrix.
MatrixXd assemble_covariance(const VectorXd& weights, const SegmentMap& segments,
                             const VectorXd& uniqueness);

/// Log of the multivariate normal density through a Cholesky factorization.
/// Falls back to a single ridge of 1e-8 * mean(diag) before failing.
double log_mvn_density(const VectorXd& x, const VectorXd& mu, const MatrixXd& sigma,
                       int component = -1);

/// Reusable Cholesky factor of a covariance matrix for repeated log-density
/// evaluations. `ridged()` reports whether the ridge repair was needed.
class GaussianFactor {
public:
  GaussianFactor() = default;
  explicit GaussianFactor(const MatrixXd& sigma, int component = -1);

  int dim() const { return static_cast<int>(llt_.rows()); }
  bool ridged() const { return ridged_; }
  double log_det() const { return log_det_; }
  /// Log density of a residual r = x - mu.
  double log_density(const Eigen::Ref<const VectorXd>& residual) const;
  const Eigen::LLT<MatrixXd>& llt() const { return llt_; }

private:
  Eigen::LLT<MatrixXd> llt_;
  double log_det_ = 0.0;
  bool ridged_ = false;
};

/// Log density of the disjoint factor covariance W V V' W + Psi without
/// forming it. The covariance is block-diagonal with one rank-one-plus-
/// diagonal block per segment, so both the determinant and the quadratic
/// form reduce to O(p) sums (matrix determinant lemma / Sherman-Morrison).
class FactorCovariance {
public:
  FactorCovariance(const VectorXd& weights, const SegmentMap& segments,
                   const VectorXd& uniqueness);

  double log_det() const { return log_det_; }
  double quadratic_form(const Eigen::Ref<const VectorXd>& residual) const;
  double log_density(const Eigen::Ref<const VectorXd>& residual) const;

  // Building blocks reused by the incremental segment scan.
  const VectorXd& inv_uniqueness() const { return inv_psi_; }
  const VectorXd& load_ratio() const { return ratio_; }          // w_j / psi_j
  const VectorXd& segment_strength() const { return strength_; }  // sum w_j^2/psi_j
  double log_det_uniqueness() const { return log_det_psi_; }

private:
  SegmentMap segments_;
  VectorXd inv_psi_;
  VectorXd ratio_;
  VectorXd strength_;
  double log_det_psi_ = 0.0;
  double log_det_ = 0.0;
};

/// log(exp(a) + exp(b)) without overflow.
double log_add_exp(double a, double b);
double log_sum_exp(const Eigen::Ref<const VectorXd>& v);

/// Per-component log terms log pi_g + log f(y|x) + log f(x), G entries.
VectorXd component_log_terms(const Eigen::Ref<const VectorXd>& x,
                             const Eigen::Ref<const VectorXd>& y, const ModelParams& theta);

/// log p(x, y; theta) for one observation.
double joint_log_density(const VectorXd& x, const VectorXd& y, const ModelParams& theta);

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace mcwdfa
