#include <gtest/gtest.h>

#include <cmath>

#include "mcwdfa/aecm.hpp"
#include "mcwdfa/error.hpp"
#include "mcwdfa/evaluate.hpp"
#include "mcwdfa/simgen.hpp"
#include "support.hpp"

using namespace mcwdfa;
using mcwdfa::test::random_spd;
using mcwdfa::test::random_theta;
using mcwdfa::test::sample;

namespace {

using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

long double ld_log_density(const VectorXd& r, const MatrixXd& sigma) {
  const MatrixXld s = sigma.cast<long double>();
  const VectorXld v = r.cast<long double>();
  return -0.5L * (static_cast<long double>(r.size()) * std::log(2.0L * 3.14159265358979323846264338327950288L) +
                  std::log(s.determinant()) + v.dot(s.inverse() * v));
}

MatrixXd design(const Dataset& d) {
  MatrixXd xt(d.N(), d.p() + 1);
  xt.col(0).setOnes();
  xt.rightCols(d.p()) = d.X;
  return xt;
}

MatrixXd random_soft_z(Rng& rng, long n, int g) {
  MatrixXd z(n, g);
  for (long i = 0; i < n; ++i) {
    for (int k = 0; k < g; ++k) z(i, k) = rng.uniform(0.05, 1.0);
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

Dataset pair_structure_data(long n, std::uint64_t seed) {
  // x1, x2 share one strong factor; x3 is independent noise.
  ModelParams theta;
  theta.n_segments = 2;
  theta.pi = VectorXd::Ones(1);
  ComponentParams c;
  c.intercept = VectorXd::Zero(1);
  c.slopes = MatrixXd::Constant(3, 1, 0.5);
  c.resid_cov = MatrixXd::Identity(1, 1);
  c.mean = VectorXd::Zero(3);
  c.segments = SegmentMap({0, 0, 1}, 2);
  c.weights = (VectorXd(3) << 1.5, 1.4, 0.3).finished();
  c.uniqueness = (VectorXd(3) << 0.2, 0.25, 1.0).finished();
  theta.components.push_back(c);
  return sample(theta, n, seed);
}

// argmax of the observed log-likelihood over every valid segment map of a
// single-component model, everything else fixed.
std::pair<SegmentMap, double> exhaustive_best(const Dataset& d, ModelParams theta) {
  const int p = theta.p();
  const int q = theta.Q();
  std::vector<int> idx(static_cast<size_t>(p), 0);
  SegmentMap best;
  double best_val = -INFINITY;
  long total = 1;
  for (int j = 0; j < p; ++j) total *= q;
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (int j = 0; j < p; ++j) {
      idx[static_cast<size_t>(j)] = static_cast<int>(c % q);
      c /= q;
    }
    SegmentMap s(idx, q);
    if (!s.valid()) continue;
    theta.components[0].segments = s;
    const double v = observed_loglik(d, theta);
    if (v > best_val) {
      best_val = v;
      best = s;
    }
  }
  return {best, best_val};
}

}  // namespace

TEST(EStep, SingleComponentGivesOnes) {
  Rng rng(1);
  const ModelParams theta = random_theta(rng, 1, 2, 4, 2);
  const Dataset d = sample(theta, 30, 2);
  const auto z = e_step_responsibilities(d, theta);
  EXPECT_EQ(z.Z, MatrixXd::Ones(30, 1));
}

TEST(EStep, MirrorSymmetricComponentsSplitEvenly) {
  Rng rng(2);
  ModelParams theta = random_theta(rng, 2, 2, 4, 2);
  theta.pi = VectorXd::Constant(2, 0.5);
  auto& a = theta.components[0];
  auto& b = theta.components[1];
  b.segments = a.segments;
  b.weights = a.weights;
  b.uniqueness = a.uniqueness;
  b.resid_cov = a.resid_cov;
  const VectorXd xstar = rng.normal_vector(4);
  const VectorXd d = rng.normal_vector(4);
  a.mean = xstar + d;
  b.mean = xstar - d;
  b.slopes = -a.slopes;
  b.intercept = a.intercept + 2.0 * a.slopes.transpose() * xstar;
  Dataset data;
  data.X = xstar.transpose();
  data.Y = (a.intercept + a.slopes.transpose() * xstar + rng.normal_vector(2)).transpose();
  const auto z = e_step_responsibilities(data, theta);
  EXPECT_NEAR(z.Z(0, 0), 0.5, 1e-10);
  EXPECT_NEAR(z.Z(0, 1), 0.5, 1e-10);
}

TEST(EStep, MatchesBayesRuleOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams theta = random_theta(rng, 2, 2, 5, 2, 0.7);
    const Dataset d = sample(theta, 20, 100 + trial);
    const EStep es = e_step(d, theta);
    long double loglik = 0.0L;
    for (long i = 0; i < 20; ++i) {
      VectorXld dens(2);
      for (int g = 0; g < 2; ++g) {
        const auto& c = theta.components[static_cast<size_t>(g)];
        const VectorXd x = d.X.row(i).transpose();
        const VectorXd y = d.Y.row(i).transpose();
        dens[g] = static_cast<long double>(theta.pi[g]) *
                  std::exp(ld_log_density(y - c.intercept - c.slopes.transpose() * x, c.resid_cov) +
                           ld_log_density(x - c.mean, assemble_covariance(c.weights, c.segments, c.uniqueness)));
      }
      const long double total = dens.sum();
      loglik += std::log(total);
      for (int g = 0; g < 2; ++g) EXPECT_NEAR(es.resp.Z(i, g), static_cast<double>(dens[g] / total), 1e-10);
    }
    EXPECT_NEAR(es.loglik, static_cast<double>(loglik), 1e-8 * std::abs(static_cast<double>(loglik)));
  }
}

TEST(EStep, RowsSumToOne) {
  Rng rng(4);
  const ModelParams theta = random_theta(rng, 3, 2, 6, 2, 1.0);
  const Dataset d = sample(theta, 200, 5);
  const auto z = e_step_responsibilities(d, theta);
  EXPECT_LE((z.Z.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
  EXPECT_GE(z.Z.minCoeff(), 0.0);
  EXPECT_LE(z.Z.maxCoeff(), 1.0);
}

TEST(CycleOne, SingleComponentIsOrdinaryLeastSquares) {
  Rng rng(5);
  const ModelParams theta = random_theta(rng, 1, 2, 5, 3);
  const Dataset d = sample(theta, 120, 6);
  const auto up = cm_step_cycle1(d, Responsibilities{MatrixXd::Ones(120, 1)});
  const MatrixXd xt = design(d);
  const MatrixXd ols = xt.householderQr().solve(d.Y);
  EXPECT_LE((up.btilde[0] - ols).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((up.mean[0] - d.X.colwise().mean().transpose()).cwiseAbs().maxCoeff(), 1e-12);
  const MatrixXd e = d.Y - xt * ols;
  EXPECT_LE((up.resid_cov[0] - e.transpose() * e / 120.0).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_DOUBLE_EQ(up.pi[0], 1.0);
}

TEST(CycleOne, HardPartitionFitsEachSubsetSeparately) {
  Rng rng(6);
  const ModelParams theta = random_theta(rng, 2, 2, 4, 2);
  const Dataset d = sample(theta, 200, 7);
  MatrixXd z = MatrixXd::Zero(200, 2);
  for (long i = 0; i < 200; ++i) z(i, (*d.labels)[static_cast<size_t>(i)]) = 1.0;
  const auto up = cm_step_cycle1(d, Responsibilities{z});
  for (int g = 0; g < 2; ++g) {
    std::vector<Eigen::Index> rows;
    for (long i = 0; i < 200; ++i)
      if ((*d.labels)[static_cast<size_t>(i)] == g) rows.push_back(i);
    const MatrixXd xt = design(d)(rows, Eigen::all);
    const MatrixXd y = d.Y(rows, Eigen::all);
    EXPECT_LE((up.btilde[static_cast<size_t>(g)] - xt.householderQr().solve(y)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(up.pi[g], static_cast<double>(rows.size()) / 200.0, 1e-15);
  }
}

TEST(CycleOne, SoftWeightsMatchNormalEquationsOracle) {
  Rng rng(7);
  const ModelParams theta = random_theta(rng, 2, 2, 3, 2);
  const Dataset d = sample(theta, 30, 8);
  const MatrixXd z = random_soft_z(rng, 30, 2);
  const auto up = cm_step_cycle1(d, Responsibilities{z});
  EXPECT_NEAR(up.pi.sum(), 1.0, 1e-12);
  EXPECT_NEAR(up.weight_sums.sum(), 30.0, 1e-12);
  for (int g = 0; g < 2; ++g) {
    // Accumulate sum_i z x~ x~' and sum_i z x~ y' term by term.
    MatrixXd gram = MatrixXd::Zero(4, 4);
    MatrixXd cross = MatrixXd::Zero(4, 2);
    for (long i = 0; i < 30; ++i) {
      VectorXd xt(4);
      xt << 1.0, d.X.row(i).transpose();
      gram += z(i, g) * xt * xt.transpose();
      cross += z(i, g) * xt * d.Y.row(i);
    }
    const MatrixXd oracle = gram.fullPivLu().solve(cross);
    EXPECT_LE((up.btilde[static_cast<size_t>(g)] - oracle).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(up.resid_cov[static_cast<size_t>(g)], up.resid_cov[static_cast<size_t>(g)].transpose());
  }
}

TEST(CycleOne, TinyComponentIsDegenerate) {
  Rng rng(8);
  const ModelParams theta = random_theta(rng, 2, 2, 3, 1);
  const Dataset d = sample(theta, 40, 9);
  MatrixXd z(40, 2);
  z.col(0).setConstant(1.0 - 1e-3);
  z.col(1).setConstant(1e-3);
  try {
    cm_step_cycle1(d, Responsibilities{z}, 2.0);
    FAIL() << "expected DegenerateComponent";
  } catch (const DegenerateComponent& e) {
    EXPECT_EQ(e.component(), 1);
  }
}

TEST(FactorMoments, ZeroLoadingsGivePriorMoments) {
  Rng rng(9);
  ModelParams theta = random_theta(rng, 1, 2, 4, 1);
  theta.components[0].weights.setZero();
  const Dataset d = sample(theta, 50, 10);
  const auto fm = factor_moments(d, Responsibilities{MatrixXd::Ones(50, 1)}, theta);
  EXPECT_EQ(fm[0].delta, MatrixXd::Zero(2, 4));
  EXPECT_LE((fm[0].omega - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FactorMoments, NoiseDominatedLimit) {
  Rng rng(10);
  ModelParams theta = random_theta(rng, 1, 2, 4, 1);
  const Dataset d = sample(theta, 50, 11);
  theta.components[0].uniqueness.setConstant(1e6);
  const auto fm = factor_moments(d, Responsibilities{MatrixXd::Ones(50, 1)}, theta);
  EXPECT_LE(fm[0].delta.cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LE((fm[0].omega - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(FactorMoments, MatchesExplicitInverseOracle) {
  Rng rng(11);
  const ModelParams theta = random_theta(rng, 2, 2, 4, 1, 1.0);
  const Dataset d = sample(theta, 40, 12);
  const MatrixXd z = random_soft_z(rng, 40, 2);
  const auto fm = factor_moments(d, Responsibilities{z}, theta);
  for (int g = 0; g < 2; ++g) {
    const auto& c = theta.components[static_cast<size_t>(g)];
    const MatrixXd wv = MatrixXd(c.weights.asDiagonal()) * c.segments.membership();
    const MatrixXd gamma = wv * wv.transpose() + MatrixXd(c.uniqueness.asDiagonal());
    const MatrixXd delta = wv.transpose() * gamma.inverse();
    MatrixXd s = MatrixXd::Zero(4, 4);
    for (long i = 0; i < 40; ++i) {
      const VectorXd r = d.X.row(i).transpose() - c.mean;
      s += z(i, g) * r * r.transpose();
    }
    s /= z.col(g).sum();
    const MatrixXd omega = MatrixXd::Identity(2, 2) - delta * wv + delta * s * delta.transpose();
    EXPECT_LE((fm[static_cast<size_t>(g)].delta - delta).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((fm[static_cast<size_t>(g)].omega - omega).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((fm[static_cast<size_t>(g)].S - s).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(fm[static_cast<size_t>(g)].omega);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(CycleTwo, PopulationCovarianceIsFixedPoint) {
  Rng rng(12);
  const ModelParams theta = random_theta(rng, 1, 3, 7, 1);
  const auto& c = theta.components[0];
  const MatrixXd gamma = assemble_covariance(c.weights, c.segments, c.uniqueness);
  const MatrixXd wv = MatrixXd(c.weights.asDiagonal()) * c.segments.membership();
  FactorMoments fm;
  fm.S = gamma;
  fm.delta = wv.transpose() * gamma.inverse();
  fm.omega = MatrixXd::Identity(3, 3) - fm.delta * wv + fm.delta * fm.S * fm.delta.transpose();
  const auto up = cm_step_cycle2({fm}, theta);
  EXPECT_LE((up[0].weights - c.weights).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((up[0].uniqueness - c.uniqueness).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(CycleTwo, ScalarCase) {
  ModelParams theta;
  theta.n_segments = 1;
  theta.pi = VectorXd::Ones(1);
  ComponentParams c;
  c.segments = SegmentMap({0}, 1);
  theta.components.push_back(c);
  const double w = 0.8, psi = 0.5, s = 1.7;
  const double delta = w / (w * w + psi);
  const double omega = 1.0 - delta * w + delta * delta * s;
  FactorMoments fm{MatrixXd::Constant(1, 1, delta), MatrixXd::Constant(1, 1, omega), MatrixXd::Constant(1, 1, s)};
  const auto up = cm_step_cycle2({fm}, theta);
  const double w_new = s * delta / omega;
  EXPECT_NEAR(up[0].weights[0], w_new, 1e-15);
  EXPECT_NEAR(up[0].uniqueness[0], s - 2.0 * s * delta * w_new + w_new * w_new * omega, 1e-15);
}

TEST(CycleTwo, UniquenessFloorApplies) {
  ModelParams theta;
  theta.n_segments = 1;
  theta.pi = VectorXd::Ones(1);
  ComponentParams c;
  c.segments = SegmentMap({0, 0}, 1);
  theta.components.push_back(c);
  // A rank-one scatter drives the uniqueness to zero.
  FactorMoments fm;
  fm.S = MatrixXd::Ones(2, 2);
  fm.delta = MatrixXd::Constant(1, 2, 0.5);
  fm.omega = MatrixXd::Identity(1, 1) - fm.delta * VectorXd::Ones(2) + fm.delta * fm.S * fm.delta.transpose();
  const auto up = cm_step_cycle2({fm}, theta);
  EXPECT_GE(up[0].uniqueness.minCoeff(), kUniquenessFloor);
}

TEST(CycleTwo, ZeroDenominatorIsDegenerateSegment) {
  ModelParams theta;
  theta.n_segments = 1;
  theta.pi = VectorXd::Ones(1);
  ComponentParams c;
  c.segments = SegmentMap({0, 0}, 1);
  theta.components.push_back(c);
  FactorMoments fm{MatrixXd::Zero(1, 2), MatrixXd::Zero(1, 1), MatrixXd::Identity(2, 2)};
  EXPECT_THROW(cm_step_cycle2({fm}, theta), DegenerateSegment);
}

TEST(CycleTwo, OneUpdateFromTruthStaysNearTruth) {
  Rng rng(13);
  const ModelParams theta = random_theta(rng, 1, 2, 6, 1);
  const Dataset d = sample(theta, 5000, 14);
  ModelParams at = theta;
  at.components[0].mean = d.X.colwise().mean().transpose();
  const Responsibilities z{MatrixXd::Ones(5000, 1)};
  const auto up = cm_step_cycle2(factor_moments(d, z, at), at);
  const auto& c = theta.components[0];
  EXPECT_LE((up[0].weights - c.weights).norm() / c.weights.norm(), 0.05);
  EXPECT_LE((up[0].uniqueness - c.uniqueness).norm() / c.uniqueness.norm(), 0.05);
}

TEST(SegmentScan, SingleSegmentIsNoOp) {
  Rng rng(15);
  const ModelParams theta = random_theta(rng, 2, 1, 4, 1);
  const Dataset d = sample(theta, 50, 16);
  const auto maps = update_segment_memberships(d, theta);
  EXPECT_EQ(maps[0], theta.components[0].segments);
  EXPECT_EQ(maps[1], theta.components[1].segments);
}

TEST(SegmentScan, RecoversCorrelatedPair) {
  const Dataset d = pair_structure_data(400, 17);
  ModelParams theta;
  theta.n_segments = 2;
  theta.pi = VectorXd::Ones(1);
  ComponentParams c;
  const auto c1 = cm_step_cycle1(d, Responsibilities{MatrixXd::Ones(400, 1)});
  c.intercept = c1.btilde[0].row(0).transpose();
  c.slopes = c1.btilde[0].bottomRows(3);
  c.resid_cov = c1.resid_cov[0];
  c.mean = c1.mean[0];
  c.weights = (VectorXd(3) << 1.5, 1.4, 0.3).finished();
  c.uniqueness = (VectorXd(3) << 0.2, 0.25, 1.0).finished();
  c.segments = SegmentMap({0, 1, 1}, 2);
  theta.components.push_back(c);
  const auto maps = update_segment_memberships(d, theta);
  EXPECT_EQ(maps[0].index, (std::vector<int>{0, 0, 1}));
  const auto [best, best_val] = exhaustive_best(d, theta);
  theta.components[0].segments = maps[0];
  EXPECT_NEAR(observed_loglik(d, theta), best_val, 1e-10 * std::abs(best_val));
}

TEST(SegmentScan, GlobalOptimumIsFixedPoint) {
  Rng rng(18);
  const ModelParams truth = random_theta(rng, 1, 2, 5, 1);
  const Dataset d = sample(truth, 300, 19);
  ModelParams theta = truth;
  const auto [best, val] = exhaustive_best(d, theta);
  theta.components[0].segments = best;
  EXPECT_EQ(update_segment_memberships(d, theta)[0], best);
}

TEST(SegmentScan, NeverDecreasesLikelihoodAndKeepsSegmentsNonEmpty) {
  Rng rng(20);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams truth = random_theta(rng, 2, 3, 8, 2, 1.5);
    const Dataset d = sample(truth, 150, 200 + trial);
    ModelParams theta = random_theta(rng, 2, 3, 8, 2, 1.5);
    for (int g = 0; g < 2; ++g) theta.components[static_cast<size_t>(g)].mean = truth.components[static_cast<size_t>(g)].mean;
    const double before = observed_loglik(d, theta);
    const auto maps = update_segment_memberships(d, theta);
    for (int g = 0; g < 2; ++g) {
      EXPECT_TRUE(maps[static_cast<size_t>(g)].valid());
      theta.components[static_cast<size_t>(g)].segments = maps[static_cast<size_t>(g)];
    }
    EXPECT_GE(observed_loglik(d, theta), before - 1e-9 * std::abs(before));
  }
}

TEST(Aitken, GeometricSeriesLimit) {
  const auto a = aitken_step(1.0, 1.5, 1.75);
  EXPECT_DOUBLE_EQ(a.rate, 0.5);
  EXPECT_DOUBLE_EQ(a.accelerated, 2.0);
  EXPECT_FALSE(a.degenerate);
}

TEST(Aitken, ZeroImprovementConverges) {
  const auto a = aitken_step(1.0, 1.5, 1.5);
  EXPECT_EQ(a.delta, 0.0);
  EXPECT_TRUE(a.converged(1e-6));
  EXPECT_TRUE(aitken_step(2.0, 2.0, 2.0).converged(1e-12));
}

TEST(Aitken, ContractionMatchesClosedForm) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const double r = 0.3;
    const double a0 = rng.uniform(0.1, 10.0);
    const double l0 = rng.uniform(-1000.0, 0.0);
    const double limit = l0 + a0 / (1.0 - r);
    const double l1 = l0 + a0;
    const double l2 = l1 + a0 * r;
    const auto a = aitken_step(l0, l1, l2);
    EXPECT_NEAR(a.accelerated, limit, 1e-9 * std::max(1.0, std::abs(limit)));
  }
}

TEST(Aitken, NonFiniteInputThrows) { EXPECT_THROW(aitken_step(0.0, NAN, 1.0), InvalidArgument); }

TEST(Fit, SettingOneRecoversPartition) {
  SimSpec spec = load_appendix_spec(1);
  spec.seed = 5;
  const Dataset d = generate_dataset(spec);
  FitConfig cfg;
  cfg.n_starts = 3;
  const FitResult r = fit(d, 2, 3, cfg);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(r.map_labels, *d.labels), 1.0);
  EXPECT_EQ(r.map_labels, r.resp.map_labels());
  EXPECT_EQ(r.starts.size(), 3u);
}

TEST(Fit, SingleComponentFixedSegmentsEndsAtOls) {
  Rng rng(22);
  const ModelParams truth = random_theta(rng, 1, 2, 5, 2);
  const Dataset d = sample(truth, 200, 23);
  FitConfig cfg;
  cfg.update_segments = false;
  const FitResult r = fit_from(d, truth, cfg);
  const MatrixXd ols = design(d).householderQr().solve(d.Y);
  EXPECT_LE((r.theta.components[0].btilde() - ols).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(r.theta.components[0].segments, truth.components[0].segments);
}

TEST(Fit, LikelihoodTraceIsMonotone) {
  Rng rng(24);
  for (int trial = 0; trial < 6; ++trial) {
    const int g = 1 + trial % 3;
    const ModelParams truth = random_theta(rng, g, 2, 6, 2, 2.0);
    const Dataset d = sample(truth, 200, 300 + trial);
    FitConfig cfg;
    cfg.n_starts = 1;
    cfg.seed = trial;
    const FitResult r = fit(d, g, 2, cfg);
    for (size_t k = 1; k < r.loglik_trace.size(); ++k)
      EXPECT_GE(r.loglik_trace[k], r.loglik_trace[k - 1] - 1e-8 * std::abs(r.loglik_trace[k - 1])) << "iter " << k;
  }
}

TEST(Fit, DeterministicUnderSeed) {
  Rng rng(25);
  const ModelParams truth = random_theta(rng, 2, 2, 5, 1);
  const Dataset d = sample(truth, 150, 26);
  FitConfig cfg;
  cfg.n_starts = 2;
  cfg.seed = 9;
  const FitResult a = fit(d, 2, 2, cfg);
  const FitResult b = fit(d, 2, 2, cfg);
  EXPECT_EQ(a.loglik_trace, b.loglik_trace);
  EXPECT_EQ(a.map_labels, b.map_labels);
  EXPECT_EQ(a.criteria.icl, b.criteria.icl);
}

TEST(Fit, PermutingStartPermutesResult) {
  Rng rng(27);
  const ModelParams truth = random_theta(rng, 2, 2, 5, 2, 6.0);
  const Dataset d = sample(truth, 300, 28);
  ModelParams start = truth;
  for (auto& c : start.components) c.weights *= 0.8;
  ModelParams swapped = permute_components(start, {1, 0});
  FitConfig cfg;
  const FitResult a = fit_from(d, start, cfg);
  const FitResult b = fit_from(d, swapped, cfg);
  EXPECT_NEAR(a.loglik_trace.back(), b.loglik_trace.back(), 1e-8 * std::abs(a.loglik_trace.back()));
  EXPECT_EQ(relabel(a.map_labels, {1, 0}), b.map_labels);
}

TEST(Fit, StationaryInRegressionCoefficients) {
  Rng rng(29);
  const ModelParams truth = random_theta(rng, 2, 2, 4, 2, 3.0);
  Dataset d = sample(truth, 300, 30);
  for (auto* m : {&d.X, &d.Y}) {
    m->rowwise() -= m->colwise().mean();
    *m = *m * (m->colwise().norm() / std::sqrt(299.0)).cwiseInverse().asDiagonal();
  }
  FitConfig cfg;
  cfg.n_starts = 2;
  cfg.tol = 1e-10;
  cfg.max_iter = 2000;
  const FitResult r = fit(d, 2, 2, cfg);
  const double h = 1e-5;
  double worst = 0.0;
  for (int g = 0; g < 2; ++g) {
    const MatrixXd bt = r.theta.components[static_cast<size_t>(g)].btilde();
    for (Eigen::Index i = 0; i < bt.rows(); ++i)
      for (Eigen::Index k = 0; k < bt.cols(); ++k) {
        ModelParams up = r.theta, dn = r.theta;
        MatrixXd b1 = bt, b2 = bt;
        b1(i, k) += h;
        b2(i, k) -= h;
        up.components[static_cast<size_t>(g)].set_btilde(b1);
        dn.components[static_cast<size_t>(g)].set_btilde(b2);
        const double grad = (cycle1_objective(d, r.resp, up) - cycle1_objective(d, r.resp, dn)) / (2 * h);
        worst = std::max(worst, std::abs(grad));
      }
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(Fit, AllStartsDegenerateIsFitFailure) {
  Rng rng(31);
  const ModelParams truth = random_theta(rng, 2, 2, 4, 1);
  const Dataset d = sample(truth, 60, 32);
  FitConfig cfg;
  cfg.n_starts = 2;
  cfg.min_component_weight = 1e9;
  EXPECT_THROW(fit(d, 2, 2, cfg), FitFailure);
}

TEST(Fit, RejectsInvalidDimensions) {
  Rng rng(33);
  const ModelParams truth = random_theta(rng, 1, 2, 4, 1);
  const Dataset d = sample(truth, 60, 34);
  EXPECT_THROW(fit(d, 1, 4, FitConfig{}), InvalidArgument);
  EXPECT_THROW(fit(d, 0, 2, FitConfig{}), InvalidArgument);
}

TEST(OrientLoadings, FlipsNegativeSegmentsOnly) {
  Rng rng(35);
  ModelParams theta = random_theta(rng, 1, 2, 4, 1);
  theta.components[0].segments = SegmentMap({0, 0, 1, 1}, 2);
  theta.components[0].weights = (VectorXd(4) << -1.0, -0.5, 0.7, 0.2).finished();
  const Dataset d = sample(theta, 20, 36);
  const double before = observed_loglik(d, theta);
  orient_loadings(theta);
  EXPECT_EQ(theta.components[0].weights, (VectorXd(4) << 1.0, 0.5, 0.7, 0.2).finished());
  EXPECT_NEAR(observed_loglik(d, theta), before, 1e-10 * std::abs(before));
}
