#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcwdfa/aecm.hpp"
#include "mcwdfa/evaluate.hpp"
#include "mcwdfa/model.hpp"
#include "mcwdfa/selection.hpp"
#include "mcwdfa/simgen.hpp"

namespace mcwdfa {

using Json = nlohmann::json;
namespace fs = std::filesystem;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Segment indices and labels are written 1-based in every file format and
// held 0-based in memory.

Json params_to_json(const ModelParams& theta);
ModelParams params_from_json(const Json& j);

Json sim_spec_to_json(const SimSpec& spec);
SimSpec sim_spec_from_json(const Json& j);
SimSpec read_sim_spec(const fs::path& path);
void write_sim_spec(const fs::path& path, const SimSpec& spec);

/// Recognized keys: tol, max_iter, n_starts, seed, min_component_weight,
/// update_segments. Unknown keys raise ConfigError.
FitConfig fit_config_from_json(const Json& j, FitConfig base = {});
Json fit_config_to_json(const FitConfig& c);

Json criteria_to_json(const Criteria& c);
Json fit_to_json(const FitResult& fit);
/// Restores theta, trace, labels, criteria and convergence flags.
FitResult fit_from_json(const Json& j);

Json grid_to_json(const GridResult& grid);
/// Header G,Q,loglik,eta,AIC,AIC3,BIC,ICL,converged,ARI; one row per cell.
std::string grid_to_csv(const GridResult& grid);

/// Columns x1..xp, y1..yM and, when labels are present, label.
std::string dataset_to_csv(const Dataset& data);
/// The first p columns are X and the next M are Y; an extra final column is
/// read as 1-based labels. A header row is detected and skipped.
Dataset dataset_from_csv(const std::string& text, int p, int M);

std::string matrix_to_csv(const MatrixXd& m);
MatrixXd matrix_from_csv(const std::string& text);

/// Long-form table: block,component,row,col,mse with 1-based indices.
std::string mse_to_csv(const ParameterMse& mse);

/// Sidecar describing a matrix CSV for the plotting tool.
Json correlation_sidecar(const CorrelationExport& c, const std::string& matrix_file,
                         const std::string& kind = "correlation", double scale = 1.0);

std::string read_text(const fs::path& path);
/// Writes through a temporary file and renames it into place.
void write_text(const fs::path& path, const std::string& text);
Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& j);

/// Appends one run record to dir/manifest.json, creating it if needed.
void append_manifest(const fs::path& dir, const Json& run);

}  // namespace mcwdfa
