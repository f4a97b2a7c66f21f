#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcwdfa/criteria.hpp"
#include "mcwdfa/model.hpp"

namespace mcwdfa {

/// N x G posterior membership probabilities.
struct Responsibilities {
  MatrixXd Z;

  long N() const { return Z.rows(); }
  int G() const { return static_cast<int>(Z.cols()); }
  VectorXd weight_sums() const { return Z.colwise().sum().transpose(); }
  /// MAP allocation, ties to the lowest component index.
  std::vector<int> map_labels() const;
};

struct EStep {
  Responsibilities resp;
  double loglik = 0.0;
  int ridge_events = 0;
};

/// Posterior probabilities and the observed-data log-likelihood at theta.
EStep e_step(const Dataset& data, const ModelParams& theta);
Responsibilities e_step_responsibilities(const Dataset& data, const ModelParams& theta);
double observed_loglik(const Dataset& data, const ModelParams& theta);

/// Expected complete-data log-likelihood of the first cycle,
/// sum_i sum_g z_ig [log pi_g + log f(y_i | x_i) + log f(x_i)].
double cycle1_objective(const Dataset& data, const Responsibilities& resp, const ModelParams& theta);

/// Closed-form maximizers of the first-cycle objective for fixed Z.
struct CycleOneUpdate {
  VectorXd pi;
  VectorXd weight_sums;              // N_g
  std::vector<VectorXd> mean;        // mu_g
  std::vector<MatrixXd> btilde;      // (p+1) x M, intercept row first
  std::vector<MatrixXd> resid_cov;   // Sigma_e_g, symmetrized

  void apply_to(ModelParams& theta) const;
};

/// Throws DegenerateComponent when N_g < min_component_weight or the
/// weighted Gram matrix of [1, x] is singular.
CycleOneUpdate cm_step_cycle1(const Dataset& data, const Responsibilities& resp,
                              double min_component_weight = 0.0);

/// Conditional factor moments for one component.
struct FactorMoments {
  MatrixXd delta;  // Q x p, V'W (W V V' W + Psi)^-1
  MatrixXd omega;  // Q x Q, I - delta W V + delta S delta'
  MatrixXd S;      // p x p weighted scatter about mu_g
};

std::vector<FactorMoments> factor_moments(const Dataset& data, const Responsibilities& resp,
                                          const ModelParams& theta);

struct LoadingUpdate {
  VectorXd weights;
  VectorXd uniqueness;
};

constexpr double kUniquenessFloor = 1e-8;

/// Diagonal W update followed by the Psi update at the new W, for the segment
/// maps currently stored in theta.
std::vector<LoadingUpdate> cm_step_cycle2(const std::vector<FactorMoments>& moments,
                                          const ModelParams& theta);

/// One sweep j = 1..p per component of the segment reassignment: each
/// variable moves to the segment that maximizes the observed-data
/// log-likelihood with everything else held fixed. Components are swept in
/// index order and each sweep sees the already-updated maps of earlier
/// components. Moves that would empty a segment are skipped; ties go to the
/// lowest segment index.
std::vector<SegmentMap> update_segment_memberships(const Dataset& data, const ModelParams& theta);

struct AitkenStep {
  double rate = 0.0;         // c
  double accelerated = 0.0;  // l_A
  double delta = 0.0;        // l_A - l_k
  bool degenerate = false;   // zero previous gain or c == 1

  bool converged(double tol) const;
};

AitkenStep aitken_step(double l_km1, double l_k, double l_kp1);

struct FitConfig {
  double tol = 1e-6;
  int max_iter = 500;
  int n_starts = 10;
  std::uint64_t seed = 0;
  double min_component_weight = 2.0;
  bool update_segments = true;
};

struct StartReport {
  int start = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string message;
  double final_loglik = 0.0;
  int n_iter = 0;
  bool converged = false;
  int ridge_events = 0;
  std::vector<double> loglik_trace;
};

struct FitResult {
  ModelParams theta;
  std::vector<double> loglik_trace;
  bool converged = false;
  int n_iter = 0;
  std::vector<int> map_labels;
  Criteria criteria;
  int ridge_events = 0;
  Responsibilities resp;
  int best_start = 0;
  std::vector<StartReport> starts;
};

/// Multi-start fit at fixed (G, Q). Start s is initialized from k-means with
/// seed derive_seed(config.seed, s); the start with the highest final
/// log-likelihood wins. Throws FitFailure if every start degenerates.
FitResult fit(const Dataset& data, int G, int Q, const FitConfig& config);

/// Single run of the iteration from a given starting point.
FitResult fit_from(const Dataset& data, ModelParams theta0, const FitConfig& config);

/// Flip the sign of every segment whose weights sum to a negative value.
/// The covariance (and hence the likelihood) is unchanged.
void orient_loadings(ModelParams& theta);

}  // namespace mcwdfa
