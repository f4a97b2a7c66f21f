#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace mcwdfa {

/// Seeded generator with a fully specified stream.
///
/// The engine is std::mt19937_64 (whose output sequence the C++ standard
/// fixes). Uniforms take the top 53 bits of one engine output; normals use
/// the Marsaglia polar method, caching the second variate of each pair. The
/// standard library distributions are avoided because their algorithms are
/// implementation-defined.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Index drawn with probability proportional to `weights` (non-negative).
  int categorical(const Eigen::Ref<const Eigen::VectorXd>& weights);
  Eigen::VectorXd normal_vector(Eigen::Index n);

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Independent child seed for stream `stream` of `base`: two rounds of the
/// splitmix64 finalizer over base + (stream + 1) * golden-ratio increment.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace mcwdfa
