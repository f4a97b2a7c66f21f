#include "mcwdfa/selection.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "mcwdfa/error.hpp"
#include "mcwdfa/evaluate.hpp"
#include "mcwdfa/parallel.hpp"

namespace mcwdfa {

long count_parameters(int G, int /*Q*/, int p, int M) {
  const long per_component = static_cast<long>(M) + static_cast<long>(p) * M + static_cast<long>(M) * (M + 1) / 2 +
                             3L * p;
  return (G - 1) + static_cast<long>(G) * per_component;
}

double responsibility_entropy(const Eigen::MatrixXd& z) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index g = 0; g < z.cols(); ++g) {
      const double v = z(i, g);
      if (v > 0.0) h -= v * std::log(v);
    }
  }
  return h;
}

Criteria compute_criteria(double loglik, long eta, long n, const Eigen::MatrixXd& z) {
  if (n < 1) throw InvalidArgument("compute_criteria: N must be positive");
  Criteria c;
  c.eta = eta;
  c.loglik = loglik;
  const double deviance = -2.0 * loglik;
  const auto e = static_cast<double>(eta);
  c.aic = deviance + 2.0 * e;
  c.aic3 = deviance + 3.0 * e;
  c.bic = deviance + e * std::log(static_cast<double>(n));
  c.entropy = responsibility_entropy(z);
  c.icl = c.bic + c.entropy;
  return c;
}

std::string_view criterion_name(Criterion c) {
  switch (c) {
    case Criterion::AIC: return "AIC";
    case Criterion::AIC3: return "AIC3";
    case Criterion::BIC: return "BIC";
    case Criterion::ICL: return "ICL";
  }
  return "?";
}

double criterion_value(const Criteria& c, Criterion which) {
  switch (which) {
    case Criterion::AIC: return c.aic;
    case Criterion::AIC3: return c.aic3;
    case Criterion::BIC: return c.bic;
    case Criterion::ICL: return c.icl;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

const GridCell* GridResult::winner(Criterion c) const {
  const auto& idx = best[static_cast<size_t>(c)];
  return idx ? &cells[*idx] : nullptr;
}

const GridCell* GridResult::find(int G, int Q) const {
  for (const auto& c : cells) {
    if (c.G == G && c.Q == Q) return &c;
  }
  return nullptr;
}

std::optional<std::size_t> select_best(const std::vector<GridCell>& cells, Criterion which) {
  std::optional<std::size_t> best;
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& c = cells[k];
    if (c.failed || !c.converged) continue;
    const double v = criterion_value(c.criteria, which);
    if (!best || v < best_val) {
      best = k;
      best_val = v;
    }
  }
  return best;
}

GridResult grid_search(const Dataset& data, const GridOptions& options) {
  if (options.G_values.empty() || options.Q_values.empty()) throw InvalidArgument("grid ranges must be non-empty");
  for (int q : options.Q_values) {
    if (q < 1 || q >= data.p()) throw InvalidArgument("every Q in the grid must satisfy 1 <= Q < p");
  }
  GridResult out;
  for (int g : options.G_values) {
    for (int q : options.Q_values) {
      GridCell cell;
      cell.G = g;
      cell.Q = q;
      out.cells.push_back(std::move(cell));
    }
  }

  parallel_for(out.cells.size(), options.jobs, [&](std::size_t k) {
    GridCell& cell = out.cells[k];
    try {
      FitResult r = fit(data, cell.G, cell.Q, options.config);
      cell.converged = r.converged;
      cell.criteria = r.criteria;
      if (data.labels) cell.ari = adjusted_rand_index(r.map_labels, *data.labels);
      if (options.keep_fits) cell.fit = std::move(r);
    } catch (const FitFailure& e) {
      cell.failed = true;
      cell.message = e.what();
      const double nan = std::numeric_limits<double>::quiet_NaN();
      cell.criteria = Criteria{count_parameters(cell.G, cell.Q, data.p(), data.M()), nan, nan, nan, nan, nan, nan};
    }
  });

  bool any = false;
  for (const auto& c : out.cells) any = any || !c.failed;
  if (!any) throw FitFailure("every grid cell failed");
  for (Criterion c : kAllCriteria) out.best[static_cast<size_t>(c)] = select_best(out.cells, c);
  return out;
}

std::vector<int> parse_range(std::string_view text) {
  auto parse_int = [&](std::string_view s) {
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw InvalidArgument("cannot parse integer range '" + std::string(text) + "'");
    return v;
  };
  const auto dots = text.find("..");
  if (dots == std::string_view::npos) return {parse_int(text)};
  const int lo = parse_int(text.substr(0, dots));
  const int hi = parse_int(text.substr(dots + 2));
  if (hi < lo) throw InvalidArgument("empty range '" + std::string(text) + "'");
  std::vector<int> out;
  for (int v = lo; v <= hi; ++v) out.push_back(v);
  return out;
}

}  // namespace mcwdfa
