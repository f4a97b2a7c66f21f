#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mcwdfa/model.hpp"

namespace mcwdfa {

/// Everything needed to regenerate a synthetic dataset.
struct SimSpec {
  ModelParams theta;
  long N = 500;
  std::uint64_t seed = 0;
  /// Noise level m of the perturbed covariance design; absent for the
  /// block-diagonal simulations.
  std::optional<double> noise_m;
  /// Optional per-component name of the rule that built each segment map
  /// ("contiguous", "round_robin", "paired"); used when resizing p.
  std::vector<std::string> segment_rules;

  /// Structural checks; mixing weights may be zero here.
  void validate() const;
};

/// Segment map produced by a named rule:
///   contiguous   j -> floor(j*Q/p)
///   round_robin  j -> j mod Q
///   paired       j -> floor(j/2) mod Q
SegmentMap segment_rule(const std::string& rule, int p, int q);

/// Draws N labelled observations. Per observation the stream is consumed as:
/// one uniform for the label, Q factor normals, p noise normals, M response
/// normals. With noise_m set, component g's X noise covariance is
/// perturb_covariance(Gamma_g, m, derive_seed(seed, 1000 + g)) instead of Psi_g.
Dataset generate_dataset(const SimSpec& spec);

/// I + Phi~ where Phi~ is the PSD part of a random symmetric matrix scaled
/// by sqrt(Gamma_ii Gamma_jj) with U(-m, m) entries.
MatrixXd perturb_covariance(const MatrixXd& gamma, double m, std::uint64_t seed);

/// Directory holding the shipped setting files. The MCWDFA_DATA_DIR
/// environment variable overrides the build-time location.
std::filesystem::path data_directory();

/// Shipped parameter bundle for Setting 1, 2 or 3.
SimSpec load_appendix_spec(int setting);

/// Changes the number of explanatory variables. Variable j of the result
/// copies variable j mod p of the input (mean, W, Psi, slope row); segment
/// maps are rebuilt from segment_rules when present.
SimSpec resize_explanatory(const SimSpec& spec, int p);

/// Setting 2 parameters at the requested p (the varying-p study).
SimSpec simulation2_spec(int p, long N);

/// Setting 1 parameters at p = 20, N = 750 with the perturbed covariance.
SimSpec simulation3_spec(double m);

}  // namespace mcwdfa
