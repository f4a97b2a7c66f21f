#include "mcwdfa/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "mcwdfa/error.hpp"
#include "mcwdfa/evaluate.hpp"
#include "mcwdfa/io.hpp"
#include "mcwdfa/selection.hpp"
#include "mcwdfa/simgen.hpp"

namespace mcwdfa {

namespace {

struct FitFlags {
  double tol = 0.0;
  int max_iter = 0;
  int starts = 0;
  std::uint64_t seed = 0;
  std::string config;
  bool standardize = false;
  CLI::Option* tol_opt = nullptr;
  CLI::Option* iter_opt = nullptr;
  CLI::Option* starts_opt = nullptr;
  CLI::Option* seed_opt = nullptr;

  void attach(CLI::App* app) {
    tol_opt = app->add_option("--tol", tol, "Aitken convergence tolerance");
    iter_opt = app->add_option("--max-iter", max_iter, "Iteration cap per start");
    starts_opt = app->add_option("--starts", starts, "Number of random starts");
    seed_opt = app->add_option("--seed", seed, "Base seed");
    app->add_option("--config", config, "JSON file with fit settings");
    app->add_flag("--standardize", standardize, "Fit on column-standardized data");
  }

  FitConfig resolve() const {
    FitConfig c;
    if (!config.empty()) c = fit_config_from_json(read_json(config), c);
    if (tol_opt->count()) c.tol = tol;
    if (iter_opt->count()) c.max_iter = max_iter;
    if (starts_opt->count()) c.n_starts = starts;
    if (seed_opt->count()) c.seed = seed;
    if (!(c.tol > 0.0) || c.max_iter < 1 || c.n_starts < 1)
      throw InvalidArgument("--tol must be positive; --max-iter and --starts at least 1");
    return c;
  }
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

class RunRecord {
public:
  explicit RunRecord(std::string command) : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["version"] = kVersion;
    j_["inputs"] = Json::array();
    j_["outputs"] = Json::array();
  }
  Json& operator[](const char* k) { return j_[k]; }
  void input(const fs::path& p) { j_["inputs"].push_back(p.string()); }
  void output(const fs::path& p) { j_["outputs"].push_back(p.string()); }
  void finish(const fs::path& dir) {
    j_["timestamp"] = utc_timestamp();
    j_["duration_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    append_manifest(dir, j_);
  }

private:
  Json j_;
  std::chrono::steady_clock::time_point start_;
};

Json standardize(Dataset& d) {
  auto scale = [](MatrixXd& m, const char* name) {
    const long n = m.rows();
    if (n < 2) throw InvalidArgument("--standardize needs at least two rows");
    const VectorXd mean = m.colwise().mean().transpose();
    m.rowwise() -= mean.transpose();
    VectorXd sd = (m.colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt().transpose();
    for (Eigen::Index j = 0; j < sd.size(); ++j)
      if (!(sd[j] > 0.0)) throw InvalidArgument(std::string("--standardize: constant column in ") + name);
    m = m * sd.cwiseInverse().asDiagonal();
    return Json{{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
                {"sd", std::vector<double>(sd.data(), sd.data() + sd.size())}};
  };
  Json s;
  s["X"] = scale(d.X, "X");
  s["Y"] = scale(d.Y, "Y");
  return s;
}

std::string rep_name(int r) {
  std::ostringstream ss;
  ss << "rep" << std::setw(3) << std::setfill('0') << r << ".csv";
  return ss.str();
}

int cmd_simulate(int setting, const std::string& spec_path, int replicates, long n, std::uint64_t seed, bool seed_set,
                 int p, std::optional<double> noise, const fs::path& out_dir, std::ostream& out) {
  RunRecord rec("simulate");
  if (replicates < 1) throw InvalidArgument("--replicates must be at least 1");
  SimSpec spec;
  if (!spec_path.empty()) {
    spec = read_sim_spec(spec_path);
    rec.input(spec_path);
  } else {
    spec = load_appendix_spec(setting);
    rec["setting"] = setting;
  }
  if (p > 0) spec = resize_explanatory(spec, p);
  if (n > 0) spec.N = n;
  if (seed_set) spec.seed = seed;
  if (noise) spec.noise_m = *noise;
  spec.validate();

  const fs::path spec_file = out_dir / "spec.json";
  write_sim_spec(spec_file, spec);
  rec.output(spec_file);
  const std::uint64_t base = spec.seed;
  for (int r = 0; r < replicates; ++r) {
    SimSpec rep = spec;
    rep.seed = base + static_cast<std::uint64_t>(r);
    const fs::path file = out_dir / rep_name(r + 1);
    write_text(file, dataset_to_csv(generate_dataset(rep)));
    rec.output(file);
  }
  rec["seed"] = base;
  rec["config"] = Json{{"replicates", replicates}, {"N", spec.N}, {"p", spec.theta.p()}, {"M", spec.theta.M()},
                       {"noise_m", spec.noise_m ? Json(*spec.noise_m) : Json(nullptr)}};
  rec.finish(out_dir);
  out << "wrote " << replicates << " dataset(s) to " << out_dir.string() << '\n';
  return kExitOk;
}

Dataset load_dataset(const std::string& path, int p, int m) {
  if (p < 1 || m < 1) throw InvalidArgument("--p and --m are required and must be positive");
  return dataset_from_csv(read_text(path), p, m);
}

std::string labels_csv(const std::vector<int>& labels) {
  std::ostringstream ss;
  ss << "label\n";
  for (int l : labels) ss << l + 1 << '\n';
  return ss.str();
}

int cmd_fit(const std::string& data_path, int p, int m, int g, int q, const FitFlags& flags, const fs::path& out_dir,
            std::ostream& out) {
  RunRecord rec("fit");
  const FitConfig config = flags.resolve();
  Dataset data = load_dataset(data_path, p, m);
  rec.input(data_path);
  if (flags.standardize) rec["standardization"] = standardize(data);
  rec["config"] = fit_config_to_json(config);
  rec["config"]["G"] = g;
  rec["config"]["Q"] = q;
  rec["seed"] = config.seed;

  const FitResult r = fit(data, g, q, config);
  const fs::path fit_file = out_dir / "fit.json";
  const fs::path labels_file = out_dir / "labels.csv";
  write_json(fit_file, fit_to_json(r));
  write_text(labels_file, labels_csv(r.map_labels));
  rec.output(fit_file);
  rec.output(labels_file);
  rec.finish(out_dir);
  out << "loglik=" << format_double(r.criteria.loglik) << " converged=" << (r.converged ? "true" : "false")
      << " iterations=" << r.n_iter << '\n';
  if (data.labels) out << "ARI=" << format_double(adjusted_rand_index(r.map_labels, *data.labels)) << '\n';
  return kExitOk;
}

int cmd_grid(const std::string& data_path, int p, int m, const std::string& g_range, const std::string& q_range,
             int jobs, const FitFlags& flags, const fs::path& out_dir, std::ostream& out) {
  RunRecord rec("grid");
  GridOptions opt;
  opt.G_values = parse_range(g_range);
  opt.Q_values = parse_range(q_range);
  opt.config = flags.resolve();
  opt.jobs = std::max(jobs, 1);
  opt.keep_fits = false;
  Dataset data = load_dataset(data_path, p, m);
  rec.input(data_path);
  if (flags.standardize) rec["standardization"] = standardize(data);
  rec["config"] = fit_config_to_json(opt.config);
  rec["config"]["G"] = g_range;
  rec["config"]["Q"] = q_range;
  rec["config"]["jobs"] = opt.jobs;
  rec["seed"] = opt.config.seed;

  const GridResult grid = grid_search(data, opt);
  const fs::path csv = out_dir / "grid.csv";
  const fs::path json = out_dir / "grid.json";
  write_text(csv, grid_to_csv(grid));
  write_json(json, grid_to_json(grid));
  rec.output(csv);
  rec.output(json);
  rec.finish(out_dir);
  for (Criterion c : kAllCriteria) {
    const GridCell* w = grid.winner(c);
    out << criterion_name(c) << ": ";
    if (w) {
      out << "G=" << w->G << " Q=" << w->Q << " value=" << format_double(criterion_value(w->criteria, c));
      if (w->ari) out << " ARI=" << format_double(*w->ari);
    } else {
      out << "none (no converged cell)";
    }
    out << '\n';
  }
  return kExitOk;
}

ModelParams load_truth(const std::string& path) {
  const Json j = read_json(path);
  if (j.value("format", "") == "mcwdfa-sim-v1") return sim_spec_from_json(j).theta;
  return params_from_json(j);
}

void write_correlation(const fs::path& dir, const std::string& stem, const CorrelationExport& c, RunRecord& rec,
                       const std::string& kind = "correlation", double scale = 1.0) {
  const fs::path csv = dir / (stem + ".csv");
  const fs::path side = dir / (stem + ".json");
  write_text(csv, matrix_to_csv(c.correlation));
  write_json(side, correlation_sidecar(c, csv.filename().string(), kind, scale));
  rec.output(csv);
  rec.output(side);
}

int cmd_eval(const std::vector<std::string>& fit_paths, const std::vector<std::string>& data_paths,
             const std::string& truth_path, int p, int m, const fs::path& out_dir, std::ostream& out) {
  RunRecord rec("eval");
  if (fit_paths.empty()) throw InvalidArgument("eval needs at least one --fit");
  if (!data_paths.empty() && data_paths.size() != fit_paths.size())
    throw InvalidArgument("give one --data per --fit, or none");
  const ModelParams truth = load_truth(truth_path);
  rec.input(truth_path);
  if (p < 1) p = truth.p();
  if (m < 1) m = truth.M();

  std::vector<ModelParams> aligned;
  std::ostringstream ari_csv;
  ari_csv << "run,fit,ARI\n";
  for (size_t r = 0; r < fit_paths.size(); ++r) {
    const FitResult f = fit_from_json(read_json(fit_paths[r]));
    rec.input(fit_paths[r]);
    if (f.theta.G() != truth.G())
      throw InvalidArgument(fit_paths[r] + ": fit has G=" + std::to_string(f.theta.G()) + " but truth has G=" +
                            std::to_string(truth.G()));
    if (f.theta.p() != truth.p() || f.theta.M() != truth.M())
      throw InvalidArgument(fit_paths[r] + ": fit dimensions differ from truth");
    std::vector<int> true_labels;
    if (!data_paths.empty()) {
      const Dataset d = load_dataset(data_paths[r], p, m);
      rec.input(data_paths[r]);
      if (!d.labels) throw InvalidArgument(data_paths[r] + ": no label column");
      if (d.labels->size() != f.map_labels.size())
        throw InvalidArgument(data_paths[r] + ": row count differs from the fit");
      true_labels = *d.labels;
      const double ari = adjusted_rand_index(f.map_labels, true_labels);
      ari_csv << r + 1 << ',' << fit_paths[r] << ',' << format_double(ari) << '\n';
      out << "run " << r + 1 << " ARI=" << format_double(ari) << '\n';
    }
    const std::vector<int> est_labels = true_labels.empty() ? std::vector<int>{} : f.map_labels;
    const auto perm = align_components(f.theta, truth, est_labels, true_labels);
    aligned.push_back(permute_components(f.theta, perm));
  }

  const ParameterMse mse = parameter_mse(aligned, truth);
  const fs::path mse_file = out_dir / "mse.csv";
  write_text(mse_file, mse_to_csv(mse));
  rec.output(mse_file);
  if (!data_paths.empty()) {
    const fs::path ari_file = out_dir / "ari.csv";
    write_text(ari_file, ari_csv.str());
    rec.output(ari_file);
  }
  for (int g = 0; g < truth.G(); ++g) {
    write_correlation(out_dir, "corr_true_g" + std::to_string(g + 1), export_correlation(truth, g), rec);
    write_correlation(out_dir, "corr_est_g" + std::to_string(g + 1), export_correlation(aligned.front(), g), rec);
  }
  rec["config"] = Json{{"runs", aligned.size()}};
  rec.finish(out_dir);
  out << "MSE over " << aligned.size() << " run(s) written to " << mse_file.string() << '\n';
  return kExitOk;
}

int cmd_export(const std::vector<std::string>& fit_paths, const std::string& truth_path, const fs::path& out_dir,
               std::ostream& out) {
  RunRecord rec("export-plot-data");
  if (fit_paths.empty() && truth_path.empty()) throw InvalidArgument("export-plot-data needs --fit or --truth");
  int files = 0;
  if (!truth_path.empty()) {
    const ModelParams truth = load_truth(truth_path);
    rec.input(truth_path);
    for (int g = 0; g < truth.G(); ++g) {
      write_correlation(out_dir, "corr_true_g" + std::to_string(g + 1), export_correlation(truth, g), rec);
      ++files;
    }
  }
  if (!fit_paths.empty()) {
    std::vector<ModelParams> fits;
    for (const auto& path : fit_paths) {
      fits.push_back(fit_from_json(read_json(path)).theta);
      rec.input(path);
    }
    const int g_count = fits.front().G();
    for (const auto& f : fits)
      if (f.G() != g_count || f.p() != fits.front().p()) throw InvalidArgument("all fits must share G and p");
    for (int g = 0; g < g_count; ++g) {
      write_correlation(out_dir, "corr_est_g" + std::to_string(g + 1), export_correlation(fits.front(), g), rec);
      ++files;
      if (fits.size() > 1) {
        std::vector<SegmentMap> maps;
        for (const auto& f : fits) maps.push_back(f.components[static_cast<size_t>(g)].segments);
        CorrelationExport freq;
        freq.component = g;
        freq.correlation = comembership_counts(maps);
        freq.segments = fits.front().components[static_cast<size_t>(g)].segments;
        write_correlation(out_dir, "freq_g" + std::to_string(g + 1), freq, rec, "frequency",
                          1.0 / static_cast<double>(maps.size()));
        ++files;
      }
    }
  }
  rec.finish(out_dir);
  out << "wrote " << files << " matrix file(s) to " << out_dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cluster-weighted disjoint factor analyzers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  int setting = 1;
  std::string spec_path;
  int replicates = 1;
  long n = 0;
  std::uint64_t sim_seed = 0;
  int sim_p = 0;
  double noise = 0.0;
  std::string sim_out = ".";
  auto* sim = app.add_subcommand("simulate", "Generate labelled datasets");
  sim->add_option("--setting", setting, "Shipped setting 1, 2 or 3")->check(CLI::Range(1, 3));
  auto* spec_opt = sim->add_option("--spec", spec_path, "SimSpec JSON file")->check(CLI::ExistingFile);
  sim->get_option("--setting")->excludes(spec_opt);
  sim->add_option("--replicates", replicates, "Number of datasets");
  sim->add_option("--n", n, "Observations per dataset");
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "Base seed; replicate r uses seed + r");
  sim->add_option("--p", sim_p, "Resize to this many explanatory variables");
  auto* noise_opt = sim->add_option("--noise", noise, "Perturbed-covariance noise level m");
  sim->add_option("--out", sim_out, "Output directory");

  std::string data_path;
  int p = 0, m = 0, g = 0, q = 0;
  std::string fit_out = ".";
  FitFlags fit_flags;
  auto* fitc = app.add_subcommand("fit", "Fit one (G, Q) model");
  fitc->add_option("--data", data_path, "Dataset CSV")->required()->check(CLI::ExistingFile);
  fitc->add_option("--p", p, "Number of explanatory columns")->required();
  fitc->add_option("--m", m, "Number of response columns")->required();
  fitc->add_option("--g", g, "Components")->required();
  fitc->add_option("--q", q, "Segments")->required();
  fitc->add_option("--out", fit_out, "Output directory");
  fit_flags.attach(fitc);

  std::string grid_data;
  int gp = 0, gm = 0, jobs = 1;
  std::string g_range = "1..5", q_range = "1..5", grid_out = ".";
  FitFlags grid_flags;
  auto* gridc = app.add_subcommand("grid", "Fit every (G, Q) cell and select by criteria");
  gridc->add_option("--data", grid_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  gridc->add_option("--p", gp, "Number of explanatory columns")->required();
  gridc->add_option("--m", gm, "Number of response columns")->required();
  gridc->add_option("--g", g_range, "Component range a..b");
  gridc->add_option("--q", q_range, "Segment range a..b");
  gridc->add_option("--jobs", jobs, "Concurrent cells");
  gridc->add_option("--out", grid_out, "Output directory");
  grid_flags.attach(gridc);

  std::vector<std::string> eval_fits, eval_data;
  std::string truth_path, eval_out = ".";
  int ep = 0, em = 0;
  auto* evalc = app.add_subcommand("eval", "Score fits against the generating parameters");
  evalc->add_option("--fit", eval_fits, "Fit JSON (repeatable)")->required()->check(CLI::ExistingFile);
  evalc->add_option("--data", eval_data, "Labelled dataset CSV per fit (repeatable)")->check(CLI::ExistingFile);
  evalc->add_option("--truth", truth_path, "SimSpec or params JSON")->required()->check(CLI::ExistingFile);
  evalc->add_option("--p", ep, "Number of explanatory columns (default: from truth)");
  evalc->add_option("--m", em, "Number of response columns (default: from truth)");
  evalc->add_option("--out", eval_out, "Output directory");

  std::vector<std::string> export_fits;
  std::string export_truth, export_out = ".";
  auto* exportc = app.add_subcommand("export-plot-data", "Write correlation matrices and segment sidecars");
  exportc->add_option("--fit", export_fits, "Fit JSON (repeatable)")->check(CLI::ExistingFile);
  exportc->add_option("--truth", export_truth, "SimSpec or params JSON")->check(CLI::ExistingFile);
  exportc->add_option("--out", export_out, "Output directory");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) {
      return cmd_simulate(setting, spec_path, replicates, n, sim_seed, sim_seed_opt->count() > 0, sim_p,
                          noise_opt->count() ? std::optional<double>(noise) : std::nullopt, sim_out, out);
    }
    if (*fitc) return cmd_fit(data_path, p, m, g, q, fit_flags, fit_out, out);
    if (*gridc) return cmd_grid(grid_data, gp, gm, g_range, q_range, jobs, grid_flags, grid_out, out);
    if (*evalc) return cmd_eval(eval_fits, eval_data, truth_path, ep, em, eval_out, out);
    if (*exportc) return cmd_export(export_fits, export_truth, export_out, out);
  } catch (const ParseError& e) {
    err << "error: line " << e.line() << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace mcwdfa
