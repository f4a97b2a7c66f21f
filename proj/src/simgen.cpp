#include "mcwdfa/simgen.hpp"

#include <cmath>
#include <cstdlib>

#include "mcwdfa/error.hpp"
#include "mcwdfa/io.hpp"
#include "mcwdfa/rng.hpp"

#ifndef MCWDFA_DATA_DIR
#define MCWDFA_DATA_DIR "data"
#endif

namespace mcwdfa {

void SimSpec::validate() const {
  if (N < 1) throw InvalidArgument("simulation needs N >= 1");
  if (noise_m && !(*noise_m >= 0.0)) throw InvalidArgument("noise level m must be non-negative");
  const int g_count = theta.G();
  if (g_count < 1 || theta.pi.size() != g_count) throw InvalidArgument("pi must have one entry per component");
  double total = 0.0;
  for (int g = 0; g < g_count; ++g) {
    if (!(theta.pi[g] >= 0.0 && theta.pi[g] <= 1.0)) throw InvalidArgument("pi entries must lie in [0,1]");
    total += theta.pi[g];
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("pi must sum to 1");
  ModelParams structural = theta;
  structural.pi = VectorXd::Constant(g_count, 1.0 / g_count);
  structural.validate();
}

SegmentMap segment_rule(const std::string& rule, int p, int q) {
  if (p < 1 || q < 1 || q > p) throw InvalidArgument("segment rule needs 1 <= Q <= p");
  std::vector<int> idx(static_cast<size_t>(p));
  for (int j = 0; j < p; ++j) {
    if (rule == "contiguous") {
      idx[static_cast<size_t>(j)] = j * q / p;
    } else if (rule == "round_robin") {
      idx[static_cast<size_t>(j)] = j % q;
    } else if (rule == "paired") {
      idx[static_cast<size_t>(j)] = (j / 2) % q;
    } else {
      throw InvalidArgument("unknown segment rule '" + rule + "'");
    }
  }
  SegmentMap out(std::move(idx), q);
  if (!out.valid()) throw InvalidArgument("segment rule '" + rule + "' leaves a segment empty at p=" + std::to_string(p));
  return out;
}

Dataset generate_dataset(const SimSpec& spec) {
  spec.validate();
  const ModelParams& theta = spec.theta;
  const int g_count = theta.G();
  const int p = theta.p();
  const int q = theta.Q();
  const int m = theta.M();

  std::vector<MatrixXd> noise_chol(static_cast<size_t>(g_count));
  std::vector<MatrixXd> resp_chol(static_cast<size_t>(g_count));
  for (int g = 0; g < g_count; ++g) {
    const auto& c = theta.components[static_cast<size_t>(g)];
    resp_chol[static_cast<size_t>(g)] = Eigen::LLT<MatrixXd>(c.resid_cov).matrixL();
    if (spec.noise_m) {
      const MatrixXd gamma = assemble_covariance(c.weights, c.segments, c.uniqueness);
      const MatrixXd r = perturb_covariance(gamma, *spec.noise_m, derive_seed(spec.seed, 1000 + static_cast<std::uint64_t>(g)));
      noise_chol[static_cast<size_t>(g)] = Eigen::LLT<MatrixXd>(r).matrixL();
    }
  }

  Dataset out;
  out.X.resize(spec.N, p);
  out.Y.resize(spec.N, m);
  std::vector<int> labels(static_cast<size_t>(spec.N));
  Rng rng(spec.seed);
  VectorXd f(q), eps(p), e(m);
  for (long i = 0; i < spec.N; ++i) {
    const int g = rng.categorical(theta.pi);
    const auto& c = theta.components[static_cast<size_t>(g)];
    for (int k = 0; k < q; ++k) f[k] = rng.normal();
    for (int j = 0; j < p; ++j) eps[j] = rng.normal();
    for (int k = 0; k < m; ++k) e[k] = rng.normal();
    if (spec.noise_m) {
      eps = noise_chol[static_cast<size_t>(g)] * eps;
    } else {
      eps = eps.cwiseProduct(c.uniqueness.cwiseSqrt());
    }
    VectorXd x = c.mean + eps;
    for (int j = 0; j < p; ++j) x[j] += c.weights[j] * f[c.segments.index[static_cast<size_t>(j)]];
    const VectorXd y = c.intercept + c.slopes.transpose() * x + resp_chol[static_cast<size_t>(g)] * e;
    out.X.row(i) = x.transpose();
    out.Y.row(i) = y.transpose();
    labels[static_cast<size_t>(i)] = g;
  }
  out.labels = std::move(labels);
  return out;
}

MatrixXd perturb_covariance(const MatrixXd& gamma, double m, std::uint64_t seed) {
  if (!(m >= 0.0)) throw InvalidArgument("perturb_covariance: m must be non-negative");
  if (gamma.rows() != gamma.cols() || gamma.rows() < 1) throw InvalidArgument("perturb_covariance: Gamma must be square");
  if ((gamma.diagonal().array() <= 0.0).any()) throw InvalidArgument("perturb_covariance: Gamma needs a positive diagonal");
  const Eigen::Index p = gamma.rows();
  if (m == 0.0) return MatrixXd::Identity(p, p);

  Rng rng(seed);
  const VectorXd sd = gamma.diagonal().cwiseSqrt();
  MatrixXd phi(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i; j < p; ++j) {
      phi(i, j) = rng.uniform(-m, m) * sd[i] * sd[j];
      phi(j, i) = phi(i, j);
    }
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(phi);
  if (eig.info() != Eigen::Success) throw NumericalFailure("perturb_covariance: eigendecomposition failed");
  const VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
  MatrixXd out = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
  out = (0.5 * (out + out.transpose())).eval();
  out.diagonal().array() += 1.0;
  return out;
}

std::filesystem::path data_directory() {
  if (const char* env = std::getenv("MCWDFA_DATA_DIR"); env && *env) return env;
  return MCWDFA_DATA_DIR;
}

SimSpec load_appendix_spec(int setting) {
  if (setting < 1 || setting > 3) throw InvalidArgument("setting must be 1, 2 or 3");
  const auto path = data_directory() / ("setting" + std::to_string(setting) + ".json");
  if (!std::filesystem::exists(path)) throw ConfigError("missing setting file " + path.string());
  return read_sim_spec(path);
}

SimSpec resize_explanatory(const SimSpec& spec, int p) {
  const int p_old = spec.theta.p();
  const int q = spec.theta.Q();
  if (p <= q) throw InvalidArgument("resize_explanatory: p must exceed Q");
  if (!spec.segment_rules.empty() && static_cast<int>(spec.segment_rules.size()) != spec.theta.G())
    throw InvalidArgument("resize_explanatory: one segment rule per component expected");
  SimSpec out = spec;
  for (int g = 0; g < spec.theta.G(); ++g) {
    const auto& src = spec.theta.components[static_cast<size_t>(g)];
    auto& dst = out.theta.components[static_cast<size_t>(g)];
    dst.mean.resize(p);
    dst.weights.resize(p);
    dst.uniqueness.resize(p);
    dst.slopes.resize(p, src.m());
    std::vector<int> idx(static_cast<size_t>(p));
    for (int j = 0; j < p; ++j) {
      const int s = j % p_old;
      dst.mean[j] = src.mean[s];
      dst.weights[j] = src.weights[s];
      dst.uniqueness[j] = src.uniqueness[s];
      dst.slopes.row(j) = src.slopes.row(s);
      idx[static_cast<size_t>(j)] = src.segments.index[static_cast<size_t>(s)];
    }
    dst.segments = spec.segment_rules.empty() ? SegmentMap(std::move(idx), q)
                                              : segment_rule(spec.segment_rules[static_cast<size_t>(g)], p, q);
  }
  out.validate();
  return out;
}

SimSpec simulation2_spec(int p, long N) {
  SimSpec spec = resize_explanatory(load_appendix_spec(2), p);
  spec.N = N;
  return spec;
}

SimSpec simulation3_spec(double m) {
  SimSpec spec = resize_explanatory(load_appendix_spec(1), 20);
  spec.N = 750;
  spec.noise_m = m;
  return spec;
}

}  // namespace mcwdfa
