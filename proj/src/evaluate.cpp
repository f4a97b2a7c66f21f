#include "mcwdfa/evaluate.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "mcwdfa/error.hpp"

namespace mcwdfa {

namespace {

double choose2(double n) { return n * (n - 1.0) / 2.0; }

std::vector<int> dense_codes(std::span<const int> labels, int& n_classes) {
  std::map<int, int> codes;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    const auto it = codes.try_emplace(l, static_cast<int>(codes.size())).first;
    out.push_back(it->second);
  }
  n_classes = static_cast<int>(codes.size());
  return out;
}

// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
// potentials). Returns assignment[row] = column.
std::vector<int> hungarian(const MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(n + 1), 0.0);
  std::vector<int> match(static_cast<size_t>(n + 1), 0), way(static_cast<size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n + 1), inf);
    std::vector<char> used(static_cast<size_t>(n + 1), 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = match[static_cast<size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(static_cast<size_t>(n), -1);
  for (int j = 1; j <= n; ++j) assignment[static_cast<size_t>(match[static_cast<size_t>(j)] - 1)] = j - 1;
  return assignment;
}

}  // namespace

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InvalidArgument("adjusted_rand_index: label vectors differ in length");
  if (a.size() < 2) throw InvalidArgument("adjusted_rand_index: need at least two observations");
  int ka = 0;
  int kb = 0;
  const auto ca = dense_codes(a, ka);
  const auto cb = dense_codes(b, kb);
  MatrixXd table = MatrixXd::Zero(ka, kb);
  for (size_t i = 0; i < ca.size(); ++i) table(ca[i], cb[i]) += 1.0;

  double index = 0.0;
  for (Eigen::Index i = 0; i < table.rows(); ++i)
    for (Eigen::Index j = 0; j < table.cols(); ++j) index += choose2(table(i, j));
  double sum_a = 0.0;
  for (Eigen::Index i = 0; i < table.rows(); ++i) sum_a += choose2(table.row(i).sum());
  double sum_b = 0.0;
  for (Eigen::Index j = 0; j < table.cols(); ++j) sum_b += choose2(table.col(j).sum());
  const double expected = sum_a * sum_b / choose2(static_cast<double>(a.size()));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial and equal
  return (index - expected) / (max_index - expected);
}

std::vector<int> align_components(const ModelParams& est, const ModelParams& truth, std::span<const int> labels_est,
                                  std::span<const int> labels_true) {
  const int g_count = est.G();
  if (truth.G() != g_count) throw InvalidArgument("align_components: component counts differ");
  if (labels_est.size() != labels_true.size()) throw InvalidArgument("align_components: label vectors differ in length");
  MatrixXd confusion = MatrixXd::Zero(g_count, g_count);
  for (size_t i = 0; i < labels_est.size(); ++i) {
    const int e = labels_est[i];
    const int t = labels_true[i];
    if (e < 0 || e >= g_count || t < 0 || t >= g_count) throw InvalidArgument("align_components: label out of range");
    confusion(e, t) += 1.0;
  }
  MatrixXd dist(g_count, g_count);
  for (int e = 0; e < g_count; ++e)
    for (int t = 0; t < g_count; ++t)
      dist(e, t) = (est.components[static_cast<size_t>(e)].mean - truth.components[static_cast<size_t>(t)].mean).norm();
  const double dmax = dist.maxCoeff();
  // Agreement counts are integers; the scaled distances sum to less than one
  // over any assignment, so they only separate equally good matchings.
  const double scale = dmax > 0.0 ? 1.0 / (dmax * (g_count + 1)) : 0.0;
  const MatrixXd cost = -confusion + scale * dist;
  return hungarian(cost);
}

ModelParams permute_components(const ModelParams& theta, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != theta.G()) throw InvalidArgument("permutation length differs from G");
  ModelParams out = theta;
  for (int g = 0; g < theta.G(); ++g) {
    out.components[static_cast<size_t>(perm[static_cast<size_t>(g)])] = theta.components[static_cast<size_t>(g)];
    out.pi[perm[static_cast<size_t>(g)]] = theta.pi[g];
  }
  return out;
}

std::vector<int> relabel(std::span<const int> labels, const std::vector<int>& perm) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(perm.at(static_cast<size_t>(l)));
  return out;
}

ParameterMse parameter_mse(const std::vector<ModelParams>& aligned, const ModelParams& truth) {
  if (aligned.empty()) throw InvalidArgument("parameter_mse: no runs");
  ParameterMse out;
  out.runs = static_cast<long>(aligned.size());
  for (const auto& tc : truth.components) {
    ComponentMse m;
    m.btilde = MatrixXd::Zero(tc.p() + 1, tc.m());
    m.resid_cov = MatrixXd::Zero(tc.m(), tc.m());
    m.mean = VectorXd::Zero(tc.p());
    m.weights = VectorXd::Zero(tc.p());
    m.uniqueness = VectorXd::Zero(tc.p());
    out.components.push_back(std::move(m));
  }
  for (const auto& run : aligned) {
    if (run.G() != truth.G() || run.p() != truth.p() || run.M() != truth.M())
      throw InvalidArgument("parameter_mse: run dimensions differ from truth");
    for (int g = 0; g < truth.G(); ++g) {
      const auto& e = run.components[static_cast<size_t>(g)];
      const auto& t = truth.components[static_cast<size_t>(g)];
      auto& m = out.components[static_cast<size_t>(g)];
      m.btilde.array() += (e.btilde() - t.btilde()).array().square();
      m.resid_cov.array() += (e.resid_cov - t.resid_cov).array().square();
      m.mean.array() += (e.mean - t.mean).array().square();
      m.weights.array() += (e.weights - t.weights).array().square();
      m.uniqueness.array() += (e.uniqueness - t.uniqueness).array().square();
    }
  }
  const double inv = 1.0 / static_cast<double>(out.runs);
  for (auto& m : out.components) {
    m.btilde *= inv;
    m.resid_cov *= inv;
    m.mean *= inv;
    m.weights *= inv;
    m.uniqueness *= inv;
  }
  return out;
}

MatrixXd covariance_to_correlation(const MatrixXd& cov) {
  const VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  MatrixXd corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  corr = (0.5 * (corr + corr.transpose())).eval();
  corr.diagonal().setOnes();
  return corr;
}

CorrelationExport export_correlation(const ModelParams& theta, int g) {
  if (g < 0 || g >= theta.G()) throw InvalidArgument("export_correlation: component index out of range");
  const auto& c = theta.components[static_cast<size_t>(g)];
  CorrelationExport out;
  out.component = g;
  out.correlation = covariance_to_correlation(assemble_covariance(c.weights, c.segments, c.uniqueness));
  out.segments = c.segments;
  return out;
}

MatrixXd comembership_counts(const std::vector<SegmentMap>& maps) {
  if (maps.empty()) return {};
  const int p = maps.front().n_variables();
  MatrixXd counts = MatrixXd::Zero(p, p);
  for (const auto& m : maps) {
    if (m.n_variables() != p) throw InvalidArgument("comembership_counts: maps differ in length");
    for (int j = 0; j < p; ++j)
      for (int l = 0; l < p; ++l)
        if (m.index[static_cast<size_t>(j)] == m.index[static_cast<size_t>(l)]) counts(j, l) += 1.0;
  }
  return counts;
}

}  // namespace mcwdfa
