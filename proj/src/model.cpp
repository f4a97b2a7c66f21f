#include "mcwdfa/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mcwdfa/error.hpp"

namespace mcwdfa {

namespace {

constexpr double kRidgeFactor = 1e-8;

std::string dims(long r, long c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

bool all_finite(const MatrixXd& m) { return m.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------
// SegmentMap

std::vector<int> SegmentMap::sizes() const {
  std::vector<int> s(static_cast<size_t>(std::max(n_segments, 0)), 0);
  for (int q : index) {
    if (q >= 0 && q < n_segments) ++s[static_cast<size_t>(q)];
  }
  return s;
}

bool SegmentMap::valid() const {
  if (n_segments < 1) return false;
  for (int q : index) {
    if (q < 0 || q >= n_segments) return false;
  }
  const auto s = sizes();
  return std::all_of(s.begin(), s.end(), [](int c) { return c > 0; });
}

MatrixXd SegmentMap::membership() const {
  MatrixXd v = MatrixXd::Zero(n_variables(), n_segments);
  for (int j = 0; j < n_variables(); ++j) v(j, index[static_cast<size_t>(j)]) = 1.0;
  return v;
}

SegmentMap SegmentMap::from_membership(const MatrixXd& v) {
  SegmentMap out;
  out.n_segments = static_cast<int>(v.cols());
  out.index.resize(static_cast<size_t>(v.rows()));
  for (Eigen::Index j = 0; j < v.rows(); ++j) {
    int hit = -1;
    for (Eigen::Index q = 0; q < v.cols(); ++q) {
      if (v(j, q) == 1.0) {
        if (hit >= 0) throw InvalidArgument("membership row " + std::to_string(j) + " is not one-hot");
        hit = static_cast<int>(q);
      } else if (v(j, q) != 0.0) {
        throw InvalidArgument("membership matrix must be binary");
      }
    }
    if (hit < 0) throw InvalidArgument("membership row " + std::to_string(j) + " is empty");
    out.index[static_cast<size_t>(j)] = hit;
  }
  return out;
}

SegmentMap SegmentMap::contiguous(int p, int q) {
  SegmentMap out;
  out.n_segments = q;
  out.index.resize(static_cast<size_t>(p));
  for (int j = 0; j < p; ++j) out.index[static_cast<size_t>(j)] = (j * q) / p;
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

MatrixXd ComponentParams::btilde() const {
  MatrixXd bt(slopes.rows() + 1, intercept.size());
  bt.row(0) = intercept.transpose();
  bt.bottomRows(slopes.rows()) = slopes;
  return bt;
}

void ComponentParams::set_btilde(const MatrixXd& bt) {
  intercept = bt.row(0).transpose();
  slopes = bt.bottomRows(bt.rows() - 1);
}

void ModelParams::validate() const {
  const int g_count = G();
  if (g_count < 1) throw InvalidArgument("model needs at least one component");
  if (pi.size() != g_count) throw InvalidArgument("pi has " + std::to_string(pi.size()) + " entries for G=" + std::to_string(g_count));
  const int pp = p();
  const int mm = M();
  if (pp < 1 || mm < 1) throw InvalidArgument("dimensions p and M must be positive");
  if (n_segments < 1 || n_segments >= pp)
    throw InvalidArgument("Q must satisfy 1 <= Q < p (Q=" + std::to_string(n_segments) + ", p=" + std::to_string(pp) + ")");
  double total = 0.0;
  for (int g = 0; g < g_count; ++g) {
    if (!(pi[g] > 0.0 && pi[g] < 1.0) && !(g_count == 1 && pi[g] == 1.0))
      throw InvalidArgument("pi entries must lie in (0,1)");
    total += pi[g];
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("pi must sum to 1");

  for (int g = 0; g < g_count; ++g) {
    const auto& c = components[static_cast<size_t>(g)];
    const std::string tag = "component " + std::to_string(g) + ": ";
    if (c.p() != pp || c.m() != mm) throw InvalidArgument(tag + "inconsistent dimensions");
    if (c.slopes.rows() != pp || c.slopes.cols() != mm)
      throw InvalidArgument(tag + "slopes must be " + dims(pp, mm));
    if (c.resid_cov.rows() != mm || c.resid_cov.cols() != mm)
      throw InvalidArgument(tag + "residual covariance must be " + dims(mm, mm));
    if (c.weights.size() != pp || c.uniqueness.size() != pp)
      throw InvalidArgument(tag + "W and Psi must have p entries");
    if (c.segments.n_variables() != pp || c.segments.n_segments != n_segments || !c.segments.valid())
      throw InvalidArgument(tag + "segment map must assign every variable to one of Q non-empty segments");
    if (!all_finite(c.slopes) || !all_finite(c.resid_cov) || !c.intercept.allFinite() || !c.mean.allFinite() ||
        !c.weights.allFinite() || !c.uniqueness.allFinite())
      throw InvalidArgument(tag + "non-finite parameter");
    if ((c.uniqueness.array() <= 0.0).any()) throw InvalidArgument(tag + "Psi entries must be positive");
    if (!c.resid_cov.isApprox(c.resid_cov.transpose(), 1e-10))
      throw InvalidArgument(tag + "residual covariance must be symmetric");
    Eigen::LLT<MatrixXd> llt(c.resid_cov);
    if (llt.info() != Eigen::Success) throw InvalidArgument(tag + "residual covariance must be positive definite");
  }
}

void Dataset::validate() const {
  if (X.rows() < 1) throw InvalidArgument("dataset needs at least one observation");
  if (X.rows() != Y.rows()) throw InvalidArgument("X and Y row counts differ");
  if (X.cols() < 1 || Y.cols() < 1) throw InvalidArgument("X and Y need at least one column");
  if (!X.allFinite() || !Y.allFinite()) throw InvalidArgument("dataset contains non-finite entries");
  if (labels && static_cast<long>(labels->size()) != X.rows())
    throw InvalidArgument("label vector length differs from row count");
}

// ---------------------------------------------------------------------------
// Densities

MatrixXd assemble_covariance(const VectorXd& weights, const SegmentMap& segments,
                             const VectorXd& uniqueness) {
  const auto p = weights.size();
  if (uniqueness.size() != p || segments.n_variables() != p)
    throw InvalidArgument("assemble_covariance: W, V and Psi dimensions disagree");
  MatrixXd gamma(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index l = 0; l < p; ++l) {
      const bool same = segments.index[static_cast<size_t>(j)] == segments.index[static_cast<size_t>(l)];
      gamma(j, l) = same ? weights[j] * weights[l] : 0.0;
    }
    gamma(j, j) += uniqueness[j];
  }
  return gamma;
}

GaussianFactor::GaussianFactor(const MatrixXd& sigma, int component) {
  if (sigma.rows() != sigma.cols()) throw InvalidArgument("covariance must be square");
  llt_.compute(sigma);
  if (llt_.info() != Eigen::Success) {
    const double ridge = kRidgeFactor * sigma.diagonal().mean();
    MatrixXd repaired = sigma;
    repaired.diagonal().array() += ridge;
    llt_.compute(repaired);
    ridged_ = true;
    if (llt_.info() != Eigen::Success || !(ridge > 0.0))
      throw NumericalFailure("covariance is not positive definite after ridge repair", component);
  }
  const auto& l = llt_.matrixLLT();
  log_det_ = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) log_det_ += std::log(l(i, i));
  log_det_ *= 2.0;
}

double GaussianFactor::log_density(const Eigen::Ref<const VectorXd>& residual) const {
  VectorXd u = llt_.matrixL().solve(residual);
  return -0.5 * (static_cast<double>(residual.size()) * kLog2Pi + log_det_ + u.squaredNorm());
}

double log_mvn_density(const VectorXd& x, const VectorXd& mu, const MatrixXd& sigma, int component) {
  if (x.size() != mu.size() || sigma.rows() != x.size() || sigma.cols() != x.size())
    throw InvalidArgument("log_mvn_density: dimension mismatch");
  GaussianFactor f(sigma, component);
  return f.log_density(x - mu);
}

FactorCovariance::FactorCovariance(const VectorXd& weights, const SegmentMap& segments,
                                   const VectorXd& uniqueness)
    : segments_(segments) {
  const auto p = weights.size();
  if (uniqueness.size() != p || segments.n_variables() != p)
    throw InvalidArgument("FactorCovariance: W, V and Psi dimensions disagree");
  inv_psi_ = uniqueness.cwiseInverse();
  ratio_ = weights.cwiseProduct(inv_psi_);
  strength_ = VectorXd::Zero(segments.n_segments);
  log_det_psi_ = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    strength_[segments.index[static_cast<size_t>(j)]] += weights[j] * ratio_[j];
    log_det_psi_ += std::log(uniqueness[j]);
  }
  log_det_ = log_det_psi_;
  for (Eigen::Index q = 0; q < strength_.size(); ++q) log_det_ += std::log1p(strength_[q]);
}

double FactorCovariance::quadratic_form(const Eigen::Ref<const VectorXd>& residual) const {
  const auto q_count = strength_.size();
  double t_buf[64];
  std::vector<double> t_heap;
  double* t = t_buf;
  if (q_count > 64) {
    t_heap.assign(static_cast<size_t>(q_count), 0.0);
    t = t_heap.data();
  } else {
    std::fill(t, t + q_count, 0.0);
  }
  double quad = 0.0;
  for (Eigen::Index j = 0; j < residual.size(); ++j) {
    const double r = residual[j];
    quad += r * r * inv_psi_[j];
    t[segments_.index[static_cast<size_t>(j)]] += ratio_[j] * r;
  }
  for (Eigen::Index q = 0; q < q_count; ++q) quad -= t[q] * t[q] / (1.0 + strength_[q]);
  return quad;
}

double FactorCovariance::log_density(const Eigen::Ref<const VectorXd>& residual) const {
  return -0.5 * (static_cast<double>(residual.size()) * kLog2Pi + log_det_ + quadratic_form(residual));
}

double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

double log_sum_exp(const Eigen::Ref<const VectorXd>& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

VectorXd component_log_terms(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& y,
                             const ModelParams& theta) {
  const int g_count = theta.G();
  VectorXd terms(g_count);
  for (int g = 0; g < g_count; ++g) {
    const auto& c = theta.components[static_cast<size_t>(g)];
    GaussianFactor resid(c.resid_cov, g);
    FactorCovariance marginal(c.weights, c.segments, c.uniqueness);
    VectorXd e = y - c.intercept - c.slopes.transpose() * x;
    terms[g] = std::log(theta.pi[g]) + resid.log_density(e) + marginal.log_density(x - c.mean);
  }
  return terms;
}

double joint_log_density(const VectorXd& x, const VectorXd& y, const ModelParams& theta) {
  if (x.size() != theta.p() || y.size() != theta.M())
    throw InvalidArgument("joint_log_density: observation dimensions do not match the model");
  return log_sum_exp(component_log_terms(x, y, theta));
}

}  // namespace mcwdfa
