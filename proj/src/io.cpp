#include "mcwdfa/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mcwdfa/error.hpp"

namespace mcwdfa {

namespace {

Json vector_json(const VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json matrix_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

VectorXd vector_from(const Json& j, Eigen::Index n, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw ConfigError(what + ": expected an array of " + std::to_string(n) + " numbers");
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = j[static_cast<size_t>(i)].get<double>();
  return v;
}

MatrixXd matrix_from(const Json& j, Eigen::Index r, Eigen::Index c, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != r)
    throw ConfigError(what + ": expected " + std::to_string(r) + " rows");
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) m.row(i) = vector_from(j[static_cast<size_t>(i)], c, what).transpose();
  return m;
}

void require_format(const Json& j, const std::string& format) {
  if (!j.is_object() || !j.contains("format") || j.at("format") != format)
    throw ConfigError("expected a \"" + format + "\" document");
}

Json one_based(const std::vector<int>& v) {
  Json a = Json::array();
  for (int x : v) a.push_back(x + 1);
  return a;
}

std::vector<int> zero_based(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + ": expected an array");
  std::vector<int> out;
  for (const auto& x : j) {
    const int v = x.get<int>();
    if (v < 1) throw ConfigError(what + ": indices are 1-based");
    out.push_back(v - 1);
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_number(std::string_view s, double& v) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && !s.empty();
}

std::vector<std::pair<long, std::string_view>> numbered_lines(const std::string& text) {
  std::vector<std::pair<long, std::string_view>> out;
  std::string_view rest(text);
  long line_no = 0;
  while (!rest.empty()) {
    ++line_no;
    const size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    if (!trim(line).empty()) out.emplace_back(line_no, line);
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Json params_to_json(const ModelParams& theta) {
  Json j;
  j["format"] = "mcwdfa-params-v1";
  j["G"] = theta.G();
  j["Q"] = theta.Q();
  j["p"] = theta.p();
  j["M"] = theta.M();
  j["pi"] = vector_json(theta.pi);
  Json comps = Json::array();
  for (const auto& c : theta.components) {
    Json cj;
    cj["B0"] = vector_json(c.intercept);
    cj["B1"] = matrix_json(c.slopes);
    cj["Sigma_e"] = matrix_json(c.resid_cov);
    cj["mu"] = vector_json(c.mean);
    cj["segments"] = one_based(c.segments.index);
    cj["W"] = vector_json(c.weights);
    cj["Psi"] = vector_json(c.uniqueness);
    comps.push_back(std::move(cj));
  }
  j["components"] = std::move(comps);
  return j;
}

ModelParams params_from_json(const Json& j) {
  require_format(j, "mcwdfa-params-v1");
  try {
    const int g_count = j.at("G").get<int>();
    const int q = j.at("Q").get<int>();
    const int p = j.at("p").get<int>();
    const int m = j.at("M").get<int>();
    if (g_count < 1 || p < 1 || m < 1) throw ConfigError("params: G, p and M must be positive");
    ModelParams theta;
    theta.n_segments = q;
    theta.pi = vector_from(j.at("pi"), g_count, "pi");
    const auto& comps = j.at("components");
    if (!comps.is_array() || static_cast<int>(comps.size()) != g_count)
      throw ConfigError("params: expected " + std::to_string(g_count) + " components");
    for (const auto& cj : comps) {
      ComponentParams c;
      c.intercept = vector_from(cj.at("B0"), m, "B0");
      c.slopes = matrix_from(cj.at("B1"), p, m, "B1");
      c.resid_cov = matrix_from(cj.at("Sigma_e"), m, m, "Sigma_e");
      c.mean = vector_from(cj.at("mu"), p, "mu");
      c.segments = SegmentMap(zero_based(cj.at("segments"), "segments"), q);
      if (c.segments.n_variables() != p) throw ConfigError("segments: expected " + std::to_string(p) + " entries");
      c.weights = vector_from(cj.at("W"), p, "W");
      c.uniqueness = vector_from(cj.at("Psi"), p, "Psi");
      theta.components.push_back(std::move(c));
    }
    return theta;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
}

Json sim_spec_to_json(const SimSpec& spec) {
  Json j;
  j["format"] = "mcwdfa-sim-v1";
  j["N"] = spec.N;
  j["seed"] = spec.seed;
  j["noise_m"] = spec.noise_m ? Json(*spec.noise_m) : Json(nullptr);
  j["segment_rules"] = spec.segment_rules;
  j["theta"] = params_to_json(spec.theta);
  return j;
}

SimSpec sim_spec_from_json(const Json& j) {
  require_format(j, "mcwdfa-sim-v1");
  try {
    SimSpec spec;
    spec.theta = params_from_json(j.at("theta"));
    spec.N = j.value("N", 500L);
    spec.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("noise_m") && !j.at("noise_m").is_null()) spec.noise_m = j.at("noise_m").get<double>();
    if (j.contains("segment_rules")) spec.segment_rules = j.at("segment_rules").get<std::vector<std::string>>();
    spec.validate();
    return spec;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("simulation spec: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("simulation spec: ") + e.what());
  }
}

SimSpec read_sim_spec(const fs::path& path) { return sim_spec_from_json(read_json(path)); }

void write_sim_spec(const fs::path& path, const SimSpec& spec) { write_json(path, sim_spec_to_json(spec)); }

FitConfig fit_config_from_json(const Json& j, FitConfig base) {
  if (!j.is_object()) throw ConfigError("fit config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "tol") base.tol = value.get<double>();
      else if (key == "max_iter") base.max_iter = value.get<int>();
      else if (key == "n_starts") base.n_starts = value.get<int>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "min_component_weight") base.min_component_weight = value.get<double>();
      else if (key == "update_segments") base.update_segments = value.get<bool>();
      else throw ConfigError("unknown fit config key '" + key + "'");
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("fit config: ") + e.what());
  }
  if (!(base.tol > 0.0)) throw ConfigError("tol must be positive");
  if (base.max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (base.n_starts < 1) throw ConfigError("n_starts must be at least 1");
  return base;
}

Json fit_config_to_json(const FitConfig& c) {
  return Json{{"tol", c.tol},
              {"max_iter", c.max_iter},
              {"n_starts", c.n_starts},
              {"seed", c.seed},
              {"min_component_weight", c.min_component_weight},
              {"update_segments", c.update_segments}};
}

Json criteria_to_json(const Criteria& c) {
  return Json{{"eta", c.eta}, {"loglik", c.loglik}, {"AIC", c.aic}, {"AIC3", c.aic3},
              {"BIC", c.bic}, {"ICL", c.icl},       {"entropy", c.entropy}};
}

namespace {

Criteria criteria_from_json(const Json& j) {
  auto num = [&](const char* k) {
    const auto& v = j.at(k);
    return v.is_null() ? std::nan("") : v.get<double>();
  };
  Criteria c;
  c.eta = j.at("eta").get<long>();
  c.loglik = num("loglik");
  c.aic = num("AIC");
  c.aic3 = num("AIC3");
  c.bic = num("BIC");
  c.icl = num("ICL");
  c.entropy = num("entropy");
  return c;
}

}  // namespace

Json fit_to_json(const FitResult& fit) {
  Json j;
  j["format"] = "mcwdfa-fit-v1";
  j["G"] = fit.theta.G();
  j["Q"] = fit.theta.Q();
  j["converged"] = fit.converged;
  j["n_iter"] = fit.n_iter;
  j["loglik_trace"] = fit.loglik_trace;
  j["criteria"] = criteria_to_json(fit.criteria);
  j["ridge_events"] = fit.ridge_events;
  j["labels"] = one_based(fit.map_labels);
  j["best_start"] = fit.best_start + 1;
  Json starts = Json::array();
  for (const auto& s : fit.starts) {
    starts.push_back(Json{{"start", s.start + 1},
                          {"seed", s.seed},
                          {"ok", s.ok},
                          {"message", s.message},
                          {"final_loglik", s.ok ? Json(s.final_loglik) : Json(nullptr)},
                          {"n_iter", s.n_iter},
                          {"converged", s.converged},
                          {"ridge_events", s.ridge_events}});
  }
  j["starts"] = std::move(starts);
  j["theta"] = params_to_json(fit.theta);
  return j;
}

FitResult fit_from_json(const Json& j) {
  require_format(j, "mcwdfa-fit-v1");
  try {
    FitResult f;
    f.theta = params_from_json(j.at("theta"));
    f.converged = j.at("converged").get<bool>();
    f.n_iter = j.at("n_iter").get<int>();
    f.loglik_trace = j.at("loglik_trace").get<std::vector<double>>();
    f.criteria = criteria_from_json(j.at("criteria"));
    f.ridge_events = j.value("ridge_events", 0);
    f.map_labels = zero_based(j.at("labels"), "labels");
    f.best_start = j.value("best_start", 1) - 1;
    return f;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("fit file: ") + e.what());
  }
}

Json grid_to_json(const GridResult& grid) {
  Json j;
  j["format"] = "mcwdfa-grid-v1";
  Json cells = Json::array();
  for (const auto& c : grid.cells) {
    Json cj{{"G", c.G}, {"Q", c.Q}, {"failed", c.failed}, {"converged", c.converged},
            {"criteria", criteria_to_json(c.criteria)}};
    cj["ARI"] = c.ari ? Json(*c.ari) : Json(nullptr);
    if (!c.message.empty()) cj["message"] = c.message;
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  Json winners = Json::object();
  for (Criterion c : kAllCriteria) {
    const GridCell* w = grid.winner(c);
    winners[std::string(criterion_name(c))] =
        w ? Json{{"G", w->G}, {"Q", w->Q}, {"value", criterion_value(w->criteria, c)}} : Json(nullptr);
  }
  j["winners"] = std::move(winners);
  return j;
}

std::string grid_to_csv(const GridResult& grid) {
  std::ostringstream out;
  out << "G,Q,loglik,eta,AIC,AIC3,BIC,ICL,converged,ARI\n";
  for (const auto& c : grid.cells) {
    out << c.G << ',' << c.Q << ',' << format_double(c.criteria.loglik) << ',' << c.criteria.eta << ','
        << format_double(c.criteria.aic) << ',' << format_double(c.criteria.aic3) << ','
        << format_double(c.criteria.bic) << ',' << format_double(c.criteria.icl) << ','
        << (c.failed ? "failed" : (c.converged ? "true" : "false")) << ',' << (c.ari ? format_double(*c.ari) : "")
        << '\n';
  }
  return out.str();
}

std::string dataset_to_csv(const Dataset& data) {
  std::ostringstream out;
  for (int j = 0; j < data.p(); ++j) out << (j ? "," : "") << 'x' << j + 1;
  for (int k = 0; k < data.M(); ++k) out << ",y" << k + 1;
  if (data.labels) out << ",label";
  out << '\n';
  for (long i = 0; i < data.N(); ++i) {
    for (int j = 0; j < data.p(); ++j) out << (j ? "," : "") << format_double(data.X(i, j));
    for (int k = 0; k < data.M(); ++k) out << ',' << format_double(data.Y(i, k));
    if (data.labels) out << ',' << (*data.labels)[static_cast<size_t>(i)] + 1;
    out << '\n';
  }
  return out.str();
}

Dataset dataset_from_csv(const std::string& text, int p, int M) {
  if (p < 1 || M < 1) throw InvalidArgument("dataset needs p >= 1 and M >= 1");
  const auto lines = numbered_lines(text);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  bool has_labels = false;
  bool header_checked = false;
  for (const auto& [line_no, line] : lines) {
    const auto fields = split_fields(line);
    const auto width = static_cast<int>(fields.size());
    if (!header_checked) {
      header_checked = true;
      has_labels = width == p + M + 1;
      double probe = 0.0;
      if (!parse_number(fields.front(), probe)) continue;
    }
    if (width != p + M + (has_labels ? 1 : 0))
      throw ParseError("expected " + std::to_string(p + M + (has_labels ? 1 : 0)) + " columns, found " +
                           std::to_string(width),
                       line_no);
    std::vector<double> row(static_cast<size_t>(p + M));
    for (int c = 0; c < p + M; ++c) {
      if (!parse_number(fields[static_cast<size_t>(c)], row[static_cast<size_t>(c)]))
        throw ParseError("cannot parse '" + std::string(fields[static_cast<size_t>(c)]) + "' as a number", line_no);
    }
    if (has_labels) {
      double l = 0.0;
      if (!parse_number(fields.back(), l) || l < 1.0 || l != std::floor(l))
        throw ParseError("label must be a positive integer", line_no);
      labels.push_back(static_cast<int>(l) - 1);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no data rows", lines.empty() ? 1 : lines.back().first);
  Dataset d;
  d.X.resize(static_cast<Eigen::Index>(rows.size()), p);
  d.Y.resize(static_cast<Eigen::Index>(rows.size()), M);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < p; ++c) d.X(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<size_t>(c)];
    for (int c = 0; c < M; ++c) d.Y(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<size_t>(p + c)];
  }
  if (has_labels) d.labels = std::move(labels);
  d.validate();
  return d;
}

std::string matrix_to_csv(const MatrixXd& m) {
  std::ostringstream out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
  return out.str();
}

MatrixXd matrix_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  for (const auto& [line_no, line] : numbered_lines(text)) {
    const auto fields = split_fields(line);
    std::vector<double> row;
    for (auto f : fields) {
      double v = 0.0;
      if (!parse_number(f, v)) throw ParseError("cannot parse '" + std::string(f) + "' as a number", line_no);
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("ragged matrix row", line_no);
    rows.push_back(std::move(row));
  }
  MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

std::string mse_to_csv(const ParameterMse& mse) {
  std::ostringstream out;
  out << "block,component,row,col,mse\n";
  auto emit = [&](const char* block, size_t g, const MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        out << block << ',' << g + 1 << ',' << i + 1 << ',' << j + 1 << ',' << format_double(m(i, j)) << '\n';
  };
  for (size_t g = 0; g < mse.components.size(); ++g) {
    const auto& c = mse.components[g];
    emit("btilde", g, c.btilde);
    emit("Sigma_e", g, c.resid_cov);
    emit("mu", g, c.mean.transpose());
    emit("W", g, c.weights.transpose());
    emit("Psi", g, c.uniqueness.transpose());
  }
  return out.str();
}

Json correlation_sidecar(const CorrelationExport& c, const std::string& matrix_file, const std::string& kind,
                         double scale) {
  return Json{{"format", "mcwdfa-corr-v1"},
              {"kind", kind},
              {"component", c.component + 1},
              {"p", c.segments.n_variables()},
              {"n_segments", c.segments.n_segments},
              {"segments", one_based(c.segments.index)},
              {"matrix", matrix_file},
              {"scale", scale}};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(1) + "\n"); }

void append_manifest(const fs::path& dir, const Json& run) {
  const fs::path path = dir / "manifest.json";
  Json doc{{"format", "mcwdfa-manifest-v1"}, {"runs", Json::array()}};
  if (fs::exists(path)) {
    doc = read_json(path);
    if (!doc.contains("runs") || !doc.at("runs").is_array()) throw ConfigError(path.string() + ": malformed manifest");
  }
  doc["runs"].push_back(run);
  write_json(path, doc);
}

}  // namespace mcwdfa
