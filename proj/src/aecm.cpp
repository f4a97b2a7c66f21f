#include "mcwdfa/aecm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mcwdfa/error.hpp"
#include "mcwdfa/init.hpp"
#include "mcwdfa/rng.hpp"

namespace mcwdfa {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Per-observation, per-component pieces of the log joint density. `ylog`
// carries log pi_g + log f(y | x), `xlog` carries log f(x).
struct ComponentTerms {
  MatrixXd ylog;
  MatrixXd xlog;
  int ridge_events = 0;
};

// p x Q matrix with (j, seg_j) = values_j; W V when values = diag(W).
MatrixXd scatter_by_segment(const VectorXd& values, const SegmentMap& seg) {
  MatrixXd out = MatrixXd::Zero(values.size(), seg.n_segments);
  for (Eigen::Index j = 0; j < values.size(); ++j) out(j, seg.index[static_cast<size_t>(j)]) = values[j];
  return out;
}

VectorXd response_log_density(const Dataset& data, const ComponentParams& c, int g, int& ridge_events) {
  GaussianFactor resid(c.resid_cov, g);
  if (resid.ridged()) ++ridge_events;
  MatrixXd e = data.Y - data.X * c.slopes;
  e.rowwise() -= c.intercept.transpose();
  MatrixXd u = resid.llt().matrixL().solve(e.transpose());
  const double constant = static_cast<double>(c.m()) * kLog2Pi + resid.log_det();
  return (-0.5 * (u.colwise().squaredNorm().array() + constant)).transpose();
}

VectorXd marginal_log_density(const Dataset& data, const ComponentParams& c) {
  FactorCovariance fc(c.weights, c.segments, c.uniqueness);
  MatrixXd r = data.X.rowwise() - c.mean.transpose();
  VectorXd quad = (r.array().square().rowwise() * fc.inv_uniqueness().transpose().array()).rowwise().sum();
  MatrixXd t = r * scatter_by_segment(fc.load_ratio(), c.segments);
  const Eigen::RowVectorXd shrink = (1.0 + fc.segment_strength().array()).inverse().matrix().transpose();
  quad -= (t.array().square().rowwise() * shrink.array()).rowwise().sum().matrix();
  const double constant = static_cast<double>(c.p()) * kLog2Pi + fc.log_det();
  return -0.5 * (quad.array() + constant);
}

ComponentTerms component_terms(const Dataset& data, const ModelParams& theta) {
  const int g_count = theta.G();
  ComponentTerms out;
  out.ylog.resize(data.N(), g_count);
  out.xlog.resize(data.N(), g_count);
  for (int g = 0; g < g_count; ++g) {
    const auto& c = theta.components[static_cast<size_t>(g)];
    out.ylog.col(g) = response_log_density(data, c, g, out.ridge_events).array() + std::log(theta.pi[g]);
    out.xlog.col(g) = marginal_log_density(data, c);
  }
  return out;
}

void check_dims(const Dataset& data, const ModelParams& theta) {
  if (data.p() != theta.p() || data.M() != theta.M())
    throw InvalidArgument("dataset dimensions (p=" + std::to_string(data.p()) + ", M=" + std::to_string(data.M()) +
                          ") do not match the model (p=" + std::to_string(theta.p()) +
                          ", M=" + std::to_string(theta.M()) + ")");
}

}  // namespace

std::vector<int> Responsibilities::map_labels() const {
  std::vector<int> labels(static_cast<size_t>(Z.rows()));
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    Eigen::Index best = 0;
    Z.row(i).maxCoeff(&best);
    labels[static_cast<size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

// ---------------------------------------------------------------------------
// E-step

EStep e_step(const Dataset& data, const ModelParams& theta) {
  check_dims(data, theta);
  const auto terms = component_terms(data, theta);
  const MatrixXd logc = terms.ylog + terms.xlog;
  EStep out;
  out.ridge_events = terms.ridge_events;
  out.resp.Z.resize(data.N(), theta.G());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logc.rows(); ++i) {
    const double mx = logc.row(i).maxCoeff();
    if (!std::isfinite(mx))
      throw NumericalFailure("all component densities underflow at row " + std::to_string(i), -1, static_cast<long>(i));
    auto row = out.resp.Z.row(i);
    row = (logc.row(i).array() - mx).exp().matrix();
    const double s = row.sum();
    row /= s;
    total += mx + std::log(s);
  }
  out.loglik = total;
  return out;
}

Responsibilities e_step_responsibilities(const Dataset& data, const ModelParams& theta) {
  return e_step(data, theta).resp;
}

double observed_loglik(const Dataset& data, const ModelParams& theta) { return e_step(data, theta).loglik; }

double cycle1_objective(const Dataset& data, const Responsibilities& resp, const ModelParams& theta) {
  check_dims(data, theta);
  const auto terms = component_terms(data, theta);
  return (resp.Z.array() * (terms.ylog + terms.xlog).array()).sum();
}

// ---------------------------------------------------------------------------
// First cycle

void CycleOneUpdate::apply_to(ModelParams& theta) const {
  theta.pi = pi;
  for (size_t g = 0; g < theta.components.size(); ++g) {
    auto& c = theta.components[g];
    c.mean = mean[g];
    c.set_btilde(btilde[g]);
    c.resid_cov = resid_cov[g];
  }
}

CycleOneUpdate cm_step_cycle1(const Dataset& data, const Responsibilities& resp, double min_component_weight) {
  const long n = data.N();
  const int g_count = resp.G();
  if (resp.N() != n) throw InvalidArgument("responsibilities and data row counts differ");
  MatrixXd xt(n, data.p() + 1);
  xt.col(0).setOnes();
  xt.rightCols(data.p()) = data.X;

  CycleOneUpdate out;
  out.weight_sums = resp.weight_sums();
  out.pi = out.weight_sums / out.weight_sums.sum();
  for (int g = 0; g < g_count; ++g) {
    const double ng = out.weight_sums[g];
    if (!(ng > 0.0) || ng < min_component_weight)
      throw DegenerateComponent("component " + std::to_string(g) + " has effective size " + std::to_string(ng), g);
    const auto z = resp.Z.col(g);
    out.mean.push_back(data.X.transpose() * z / ng);

    const MatrixXd zxt = xt.array().colwise() * z.array();
    const MatrixXd gram = zxt.transpose() * xt;
    const MatrixXd cross = zxt.transpose() * data.Y;
    Eigen::LLT<MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
      throw DegenerateComponent("weighted Gram matrix of component " + std::to_string(g) + " is singular", g);
    MatrixXd bt = llt.solve(cross);

    const MatrixXd e = data.Y - xt * bt;
    MatrixXd sig = (e.array().colwise() * z.array()).matrix().transpose() * e / ng;
    sig = (0.5 * (sig + sig.transpose())).eval();
    out.btilde.push_back(std::move(bt));
    out.resid_cov.push_back(std::move(sig));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Second cycle

std::vector<FactorMoments> factor_moments(const Dataset& data, const Responsibilities& resp,
                                          const ModelParams& theta) {
  check_dims(data, theta);
  std::vector<FactorMoments> out;
  const VectorXd ng = resp.weight_sums();
  for (int g = 0; g < theta.G(); ++g) {
    const auto& c = theta.components[static_cast<size_t>(g)];
    if (!(ng[g] > 0.0)) throw DegenerateComponent("component " + std::to_string(g) + " has no weight", g);
    FactorMoments fm;
    const MatrixXd r = data.X.rowwise() - c.mean.transpose();
    fm.S = (r.array().colwise() * resp.Z.col(g).array()).matrix().transpose() * r / ng[g];
    fm.S = (0.5 * (fm.S + fm.S.transpose())).eval();

    const MatrixXd gamma = assemble_covariance(c.weights, c.segments, c.uniqueness);
    const MatrixXd wv = scatter_by_segment(c.weights, c.segments);
    Eigen::LLT<MatrixXd> llt(gamma);
    if (llt.info() != Eigen::Success)
      throw NumericalFailure("factor covariance of component " + std::to_string(g) + " is not positive definite", g);
    fm.delta = llt.solve(wv).transpose();
    const int q = theta.Q();
    fm.omega = MatrixXd::Identity(q, q) - fm.delta * wv + fm.delta * fm.S * fm.delta.transpose();
    fm.omega = (0.5 * (fm.omega + fm.omega.transpose())).eval();
    out.push_back(std::move(fm));
  }
  return out;
}

std::vector<LoadingUpdate> cm_step_cycle2(const std::vector<FactorMoments>& moments, const ModelParams& theta) {
  if (static_cast<int>(moments.size()) != theta.G()) throw InvalidArgument("one FactorMoments per component required");
  std::vector<LoadingUpdate> out;
  for (int g = 0; g < theta.G(); ++g) {
    const auto& fm = moments[static_cast<size_t>(g)];
    const auto& seg = theta.components[static_cast<size_t>(g)].segments;
    const MatrixXd s_delta = fm.S * fm.delta.transpose();  // p x Q
    const int p = static_cast<int>(fm.S.rows());
    LoadingUpdate up;
    up.weights.resize(p);
    up.uniqueness.resize(p);
    for (int j = 0; j < p; ++j) {
      const int q = seg.index[static_cast<size_t>(j)];
      const double den = fm.omega(q, q);
      if (!(den > 0.0))
        throw DegenerateSegment("segment denominator vanishes for component " + std::to_string(g) + ", variable " +
                                    std::to_string(j), g, j);
      const double w = s_delta(j, q) / den;
      const double psi = fm.S(j, j) - 2.0 * s_delta(j, q) * w + w * w * den;
      up.weights[j] = w;
      up.uniqueness[j] = std::max(psi, kUniquenessFloor);
    }
    out.push_back(std::move(up));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Segment reassignment

std::vector<SegmentMap> update_segment_memberships(const Dataset& data, const ModelParams& theta) {
  check_dims(data, theta);
  const long n = data.N();
  const int g_count = theta.G();
  const int p = theta.p();
  const int q_count = theta.Q();
  const double pconst = static_cast<double>(p) * kLog2Pi;

  auto terms = component_terms(data, theta);
  std::vector<SegmentMap> maps;
  for (const auto& c : theta.components) maps.push_back(c.segments);
  if (q_count < 2) return maps;

  VectorXd other(n);
  VectorXd lg(n);
  for (int g = 0; g < g_count; ++g) {
    const auto& c = theta.components[static_cast<size_t>(g)];
    SegmentMap& seg = maps[static_cast<size_t>(g)];

    for (long i = 0; i < n; ++i) {
      double acc = kNegInf;
      for (int h = 0; h < g_count; ++h) {
        if (h != g) acc = log_add_exp(acc, terms.ylog(i, h) + terms.xlog(i, h));
      }
      other[i] = acc;
    }

    const MatrixXd r = data.X.rowwise() - c.mean.transpose();
    const VectorXd inv_psi = c.uniqueness.cwiseInverse();
    const VectorXd ratio = c.weights.cwiseProduct(inv_psi);
    double log_det_psi = 0.0;
    for (int j = 0; j < p; ++j) log_det_psi += std::log(c.uniqueness[j]);

    VectorXd strength = VectorXd::Zero(q_count);
    for (int j = 0; j < p; ++j) strength[seg.index[static_cast<size_t>(j)]] += c.weights[j] * ratio[j];
    MatrixXd t = r * scatter_by_segment(ratio, seg);  // n x Q
    const VectorXd base = (r.array().square().rowwise() * inv_psi.transpose().array()).rowwise().sum();
    const VectorXd ylog = terms.ylog.col(g);
    std::vector<int> sizes = seg.sizes();

    VectorXd quad(n);
    double log_det = 0.0;
    auto refresh = [&]() {
      VectorXd shrink = (1.0 + strength.array()).inverse();
      quad = base;
      for (int q = 0; q < q_count; ++q) quad.array() -= t.col(q).array().square() * shrink[q];
      log_det = log_det_psi;
      for (int q = 0; q < q_count; ++q) log_det += std::log1p(strength[q]);
      double total = 0.0;
      for (long i = 0; i < n; ++i) {
        lg[i] = ylog[i] - 0.5 * (pconst + log_det + quad[i]);
        total += log_add_exp(other[i], lg[i]);
      }
      return total;
    };
    double current = refresh();

    for (int j = 0; j < p; ++j) {
      const int cur = seg.index[static_cast<size_t>(j)];
      if (sizes[static_cast<size_t>(cur)] < 2) continue;
      const double wr = c.weights[j] * ratio[j];
      int best_q = -1;
      double best_val = kNegInf;
      for (int q = 0; q < q_count; ++q) {
        double val = current;
        if (q != cur) {
          const double a_from = strength[cur] - wr;
          const double a_to = strength[q] + wr;
          const double ld = log_det - std::log1p(strength[cur]) - std::log1p(strength[q]) + std::log1p(a_from) +
                            std::log1p(a_to);
          const double old_from = 1.0 / (1.0 + strength[cur]);
          const double old_to = 1.0 / (1.0 + strength[q]);
          const double new_from = 1.0 / (1.0 + a_from);
          const double new_to = 1.0 / (1.0 + a_to);
          val = 0.0;
          for (long i = 0; i < n; ++i) {
            const double shift = ratio[j] * r(i, j);
            const double tf = t(i, cur);
            const double tt = t(i, q);
            const double tf2 = tf - shift;
            const double tt2 = tt + shift;
            const double qd = quad[i] + tf * tf * old_from + tt * tt * old_to - tf2 * tf2 * new_from - tt2 * tt2 * new_to;
            val += log_add_exp(other[i], ylog[i] - 0.5 * (pconst + ld + qd));
          }
        }
        if (val > best_val) {
          best_val = val;
          best_q = q;
        }
      }
      if (best_q != cur) {
        strength[cur] -= wr;
        strength[best_q] += wr;
        t.col(cur) -= ratio[j] * r.col(j);
        t.col(best_q) += ratio[j] * r.col(j);
        --sizes[static_cast<size_t>(cur)];
        ++sizes[static_cast<size_t>(best_q)];
        seg.index[static_cast<size_t>(j)] = best_q;
        current = refresh();
      }
    }
    terms.xlog.col(g) = lg - ylog;
  }
  return maps;
}

// ---------------------------------------------------------------------------
// Stopping rule

bool AitkenStep::converged(double tol) const {
  if (degenerate) return true;
  return rate < 1.0 && std::abs(delta) < tol;
}

AitkenStep aitken_step(double l_km1, double l_k, double l_kp1) {
  if (!std::isfinite(l_km1) || !std::isfinite(l_k) || !std::isfinite(l_kp1))
    throw InvalidArgument("aitken_step: non-finite log-likelihood");
  AitkenStep out;
  const double prev_gain = l_k - l_km1;
  const double gain = l_kp1 - l_k;
  if (prev_gain == 0.0) {
    out.degenerate = true;
    out.accelerated = l_kp1;
    return out;
  }
  out.rate = gain / prev_gain;
  if (std::abs(1.0 - out.rate) < 1e-12) {
    out.degenerate = true;
    out.accelerated = l_kp1;
    return out;
  }
  out.accelerated = l_k + gain / (1.0 - out.rate);
  out.delta = out.accelerated - l_k;
  return out;
}

// ---------------------------------------------------------------------------
// Driver

void orient_loadings(ModelParams& theta) {
  for (auto& c : theta.components) {
    VectorXd sums = VectorXd::Zero(c.segments.n_segments);
    for (int j = 0; j < c.p(); ++j) sums[c.segments.index[static_cast<size_t>(j)]] += c.weights[j];
    for (int j = 0; j < c.p(); ++j) {
      if (sums[c.segments.index[static_cast<size_t>(j)]] < 0.0) c.weights[j] = -c.weights[j];
    }
  }
}

namespace {

void check_weights(const Responsibilities& resp, double min_weight) {
  const VectorXd ng = resp.weight_sums();
  for (Eigen::Index g = 0; g < ng.size(); ++g) {
    if (!(ng[g] > 0.0) || ng[g] < min_weight)
      throw DegenerateComponent("component " + std::to_string(g) + " has effective size " + std::to_string(ng[g]),
                                static_cast<int>(g));
  }
}

FitResult run_iterations(const Dataset& data, ModelParams theta, const FitConfig& config) {
  FitResult out;
  EStep es = e_step(data, theta);
  out.ridge_events += es.ridge_events;
  out.loglik_trace.push_back(es.loglik);

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    // Cycle 1: z as missing data.
    const auto c1 = cm_step_cycle1(data, es.resp, config.min_component_weight);
    c1.apply_to(theta);

    // Cycle 2: segment scan, then z and factors as missing data at the
    // half-step parameters.
    if (config.update_segments && theta.Q() > 1) {
      auto maps = update_segment_memberships(data, theta);
      for (int g = 0; g < theta.G(); ++g) theta.components[static_cast<size_t>(g)].segments = std::move(maps[static_cast<size_t>(g)]);
    }
    const EStep mid = e_step(data, theta);
    out.ridge_events += mid.ridge_events;
    check_weights(mid.resp, config.min_component_weight);
    const auto moments = factor_moments(data, mid.resp, theta);
    const auto loads = cm_step_cycle2(moments, theta);
    for (int g = 0; g < theta.G(); ++g) {
      auto& c = theta.components[static_cast<size_t>(g)];
      c.weights = loads[static_cast<size_t>(g)].weights;
      c.uniqueness = loads[static_cast<size_t>(g)].uniqueness;
    }

    es = e_step(data, theta);
    out.ridge_events += es.ridge_events;
    out.loglik_trace.push_back(es.loglik);
    out.n_iter = iter;
    const auto& tr = out.loglik_trace;
    if (tr.size() >= 3) {
      const auto a = aitken_step(tr[tr.size() - 3], tr[tr.size() - 2], tr[tr.size() - 1]);
      if (a.converged(config.tol)) {
        out.converged = true;
        break;
      }
    }
  }

  orient_loadings(theta);
  out.theta = std::move(theta);
  out.resp = std::move(es.resp);
  out.map_labels = out.resp.map_labels();
  out.criteria = compute_criteria(out.loglik_trace.back(), count_parameters(out.theta.G(), out.theta.Q(),
                                                                           out.theta.p(), out.theta.M()),
                                  data.N(), out.resp.Z);
  return out;
}

StartReport report_of(const FitResult& r, int start, std::uint64_t seed) {
  StartReport rep;
  rep.start = start;
  rep.seed = seed;
  rep.ok = true;
  rep.final_loglik = r.loglik_trace.back();
  rep.n_iter = r.n_iter;
  rep.converged = r.converged;
  rep.ridge_events = r.ridge_events;
  rep.loglik_trace = r.loglik_trace;
  return rep;
}

}  // namespace

FitResult fit_from(const Dataset& data, ModelParams theta0, const FitConfig& config) {
  data.validate();
  theta0.validate();
  check_dims(data, theta0);
  FitResult out = run_iterations(data, std::move(theta0), config);
  out.starts.push_back(report_of(out, 0, config.seed));
  return out;
}

FitResult fit(const Dataset& data, int G, int Q, const FitConfig& config) {
  data.validate();
  if (G < 1) throw InvalidArgument("G must be at least 1");
  if (Q < 1 || Q >= data.p()) throw InvalidArgument("Q must satisfy 1 <= Q < p");
  if (data.N() <= G) throw InvalidArgument("need more observations than components");
  if (config.n_starts < 1) throw InvalidArgument("n_starts must be at least 1");
  if (config.max_iter < 1) throw InvalidArgument("max_iter must be at least 1");

  std::vector<StartReport> reports;
  FitResult best;
  bool have_best = false;
  for (int s = 0; s < config.n_starts; ++s) {
    const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(s));
    try {
      InitState init = initialize(data, G, Q, seed, config.min_component_weight);
      FitResult r = run_iterations(data, std::move(init.theta0), config);
      reports.push_back(report_of(r, s, seed));
      if (!have_best || r.loglik_trace.back() > best.loglik_trace.back()) {
        best = std::move(r);
        best.best_start = s;
        have_best = true;
      }
    } catch (const DegenerateComponent& e) {
      reports.push_back(StartReport{s, seed, false, e.what(), 0.0, 0, false, 0, {}});
    } catch (const DegenerateSegment& e) {
      reports.push_back(StartReport{s, seed, false, e.what(), 0.0, 0, false, 0, {}});
    } catch (const NumericalFailure& e) {
      reports.push_back(StartReport{s, seed, false, e.what(), 0.0, 0, false, 0, {}});
    }
  }
  if (!have_best) {
    std::string msg = "all " + std::to_string(config.n_starts) + " starts failed at G=" + std::to_string(G) +
                      ", Q=" + std::to_string(Q);
    if (!reports.empty()) msg += " (last: " + reports.back().message + ")";
    throw FitFailure(msg);
  }
  best.starts = std::move(reports);
  return best;
}

}  // namespace mcwdfa
