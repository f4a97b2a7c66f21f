#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcwdfa/aecm.hpp"
#include "mcwdfa/criteria.hpp"

namespace mcwdfa {

enum class Criterion { AIC = 0, AIC3 = 1, BIC = 2, ICL = 3 };

inline constexpr std::array<Criterion, 4> kAllCriteria{Criterion::AIC, Criterion::AIC3, Criterion::BIC,
                                                        Criterion::ICL};

std::string_view criterion_name(Criterion c);
double criterion_value(const Criteria& c, Criterion which);

/// One (G, Q) cell of a grid search.
struct GridCell {
  int G = 0;
  int Q = 0;
  bool failed = false;     // every start degenerated
  bool converged = false;  // the winning start met the Aitken rule
  Criteria criteria;
  std::optional<double> ari;  // against dataset labels, when present
  std::string message;
  std::optional<FitResult> fit;
};

struct GridOptions {
  std::vector<int> G_values;
  std::vector<int> Q_values;
  FitConfig config;
  int jobs = 1;
  bool keep_fits = true;
};

struct GridResult {
  std::vector<GridCell> cells;  // G-major, then Q, in the order given
  std::array<std::optional<std::size_t>, 4> best;

  const GridCell* winner(Criterion c) const;
  const GridCell* find(int G, int Q) const;
};

/// Index of the cell minimizing `which` among converged, non-failed cells;
/// ties go to the earliest cell.
std::optional<std::size_t> select_best(const std::vector<GridCell>& cells, Criterion which);

/// Fits every (G, Q) cell. Throws FitFailure if every cell failed.
GridResult grid_search(const Dataset& data, const GridOptions& options);

/// Parses an inclusive span "a..b" or a single integer.
std::vector<int> parse_range(std::string_view text);

}  // namespace mcwdfa
