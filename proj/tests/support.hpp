#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <string>

#include "mcwdfa/model.hpp"
#include "mcwdfa/rng.hpp"
#include "mcwdfa/simgen.hpp"

namespace mcwdfa::test {

inline MatrixXd random_spd(Rng& rng, int d, double ridge = 0.5) {
  MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  MatrixXd s = a * a.transpose() / d;
  s.diagonal().array() += ridge;
  return 0.5 * (s + s.transpose());
}

/// Every segment non-empty, otherwise a random assignment.
inline SegmentMap random_segments(Rng& rng, int p, int q) {
  std::vector<int> idx(static_cast<size_t>(p));
  for (int j = 0; j < p; ++j) idx[static_cast<size_t>(j)] = j < q ? j : static_cast<int>(rng.below(static_cast<std::uint64_t>(q)));
  for (int j = p - 1; j > 0; --j) std::swap(idx[static_cast<size_t>(j)], idx[rng.below(static_cast<std::uint64_t>(j + 1))]);
  return SegmentMap(std::move(idx), q);
}

inline ModelParams random_theta(Rng& rng, int G, int Q, int p, int M, double separation = 4.0) {
  ModelParams theta;
  theta.n_segments = Q;
  theta.pi.resize(G);
  for (int g = 0; g < G; ++g) theta.pi[g] = 0.5 + rng.uniform();
  theta.pi /= theta.pi.sum();
  for (int g = 0; g < G; ++g) {
    ComponentParams c;
    c.intercept = rng.normal_vector(M);
    c.slopes = MatrixXd(p, M);
    for (int j = 0; j < p; ++j)
      for (int k = 0; k < M; ++k) c.slopes(j, k) = 0.5 * rng.normal();
    c.resid_cov = random_spd(rng, M);
    c.mean = separation * rng.normal_vector(p);
    c.segments = random_segments(rng, p, Q);
    c.weights = VectorXd(p);
    c.uniqueness = VectorXd(p);
    for (int j = 0; j < p; ++j) {
      c.weights[j] = rng.uniform(0.5, 1.5);
      c.uniqueness[j] = rng.uniform(0.2, 1.0);
    }
    theta.components.push_back(std::move(c));
  }
  return theta;
}

inline Dataset sample(const ModelParams& theta, long N, std::uint64_t seed) {
  SimSpec spec;
  spec.theta = theta;
  spec.N = N;
  spec.seed = seed;
  return generate_dataset(spec);
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mcwdfa_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace mcwdfa::test
