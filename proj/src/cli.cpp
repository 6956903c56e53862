#include "rrm/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rrm/harness.hpp"
#include "rrm/io.hpp"
#include "rrm/solver.hpp"

namespace rrm {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " '" + s + "'");
  }
}

// Options shared by every command that fits a model.
struct DataOptions {
  std::string data;
  std::string format = "auto";
  std::string dims;
};

struct ModelOptions {
  std::string loss = "gaussian";
  double lambda = 1.0;
  std::string offsets = "none";
  double lambda_alpha = 1.0;
  double lambda_beta = 1.0;
  std::optional<double> theta_max;
  std::string row_metric = "identity";
  std::string col_metric = "identity";
  std::string row_features;
  std::string col_features;
};

struct SolverOptionsCli {
  int max_iter = 500;
  double tol = 1e-8;
  double step_tol = 0.0;
  double time_budget = 0.0;
  std::string step = "fixed";
  double svd_tol = 1e-7;
  std::uint64_t seed = 0x5eed;
  bool cold = false;
  bool polish = false;
};

struct GridOptions {
  std::string grid;
  int grid_size = 10;
  double min_ratio = 0.01;
};

void add_data_options(CLI::App* app, DataOptions& d) {
  app->add_option("--data", d.data, "Observations (triplet CSV or MatrixMarket)")->required();
  app->add_option("--format", d.format, "auto, csv or mtx")->capture_default_str();
  app->add_option("--dims", d.dims, "Matrix dimensions 'n,m' when the file does not declare them");
}

void add_model_options(CLI::App* app, ModelOptions& m) {
  app->add_option("--loss", m.loss, "gaussian, bernoulli or poisson")->capture_default_str();
  app->add_option("--lambda", m.lambda, "Nuclear-norm weight")->capture_default_str();
  app->add_option("--offsets", m.offsets,
                  "Comma list of intercept, rows, cols, row-features, col-features, or none")
      ->capture_default_str();
  app->add_option("--lambda-alpha", m.lambda_alpha, "Ridge weight on row offsets")
      ->capture_default_str();
  app->add_option("--lambda-beta", m.lambda_beta, "Ridge weight on column offsets")
      ->capture_default_str();
  app->add_option("--theta-max", m.theta_max, "Upper bound on theta (Poisson curvature)");
  app->add_option("--row-metric", m.row_metric,
                  "identity | projection | ridge[:sigma2=S,scale=C] | spline[:coarse=D,fine=D]")
      ->capture_default_str();
  app->add_option("--col-metric", m.col_metric, "As --row-metric, for columns")
      ->capture_default_str();
  app->add_option("--row-features", m.row_features, "Row feature CSV (index column first)");
  app->add_option("--col-features", m.col_features, "Column feature CSV (index column first)");
}

void add_solver_options(CLI::App* app, SolverOptionsCli& s) {
  app->add_option("--max-iter", s.max_iter, "Outer iteration budget")->capture_default_str();
  app->add_option("--tol", s.tol, "Relative objective change tolerance")->capture_default_str();
  app->add_option("--step-tol", s.step_tol, "Block change tolerance (0 disables)")
      ->capture_default_str();
  app->add_option("--time-budget", s.time_budget, "Seconds (0 disables)")->capture_default_str();
  app->add_option("--step", s.step, "fixed or backtracking")->capture_default_str();
  app->add_option("--svd-tol", s.svd_tol, "Floor of the inner SVD tolerance")->capture_default_str();
  app->add_option("--seed", s.seed, "Seed for every random choice")->capture_default_str();
  app->add_flag("--cold", s.cold, "Disable SVD warm starts");
  app->add_flag("--polish", s.polish, "Exact offset polish at the end (Gaussian)");
}

void add_grid_options(CLI::App* app, GridOptions& g) {
  app->add_option("--grid", g.grid, "Descending comma list of lambdas (default: from lambda max)");
  app->add_option("--grid-size", g.grid_size, "Points in the default grid")->capture_default_str();
  app->add_option("--min-ratio", g.min_ratio, "Smallest/largest lambda in the default grid")
      ->capture_default_str();
}

ObservedMatrix load_data(const DataOptions& d) {
  std::optional<std::pair<Index, Index>> dims;
  if (!d.dims.empty()) {
    const auto parts = split_on(d.dims, ',');
    if (parts.size() != 2) throw ConfigError("--dims expects 'n,m'");
    dims = std::pair<Index, Index>{static_cast<Index>(parse_number(parts[0], "rows")),
                                   static_cast<Index>(parse_number(parts[1], "cols"))};
  }
  return read_observations(d.data, parse_data_format(d.format), dims);
}

struct BuiltModel {
  ModelSpec spec;
  json metadata;
};

BuiltModel build_model(const ModelOptions& m, const ObservedMatrix& y) {
  BuiltModel b;
  ModelSpec& s = b.spec;
  s.loss.kind = parse_loss_kind(m.loss);
  s.loss.theta_max = m.theta_max;
  s.lambda_gamma = m.lambda;
  s.lambda_alpha = m.lambda_alpha;
  s.lambda_beta = m.lambda_beta;
  std::optional<FeatureMatrix> rf, cf;
  if (!m.row_features.empty()) rf = read_features(m.row_features, y.rows());
  if (!m.col_features.empty()) cf = read_features(m.col_features, y.cols());
  for (const std::string& o : split_on(m.offsets, ',')) {
    if (o == "none") continue;
    if (o == "intercept") s.offsets.intercept = true;
    else if (o == "rows") s.offsets.row_effects = true;
    else if (o == "cols") s.offsets.col_effects = true;
    else if (o == "row-features") {
      if (!rf) throw ConfigError("offset row-features needs --row-features");
      s.offsets.row_features = rf;
    } else if (o == "col-features") {
      if (!cf) throw ConfigError("offset col-features needs --col-features");
      s.offsets.col_features = cf;
    } else {
      throw ConfigError("unknown offset '" + o + "'");
    }
  }
  const MarginSpec rs = parse_margin_spec(m.row_metric);
  const MarginSpec cs = parse_margin_spec(m.col_metric);
  s.row_margin = build_margin(rs, y.rows(), rf);
  s.col_margin = build_margin(cs, y.cols(), cf);
  b.metadata["row_metric"] = m.row_metric;
  b.metadata["col_metric"] = m.col_metric;
  auto knots = [](const MarginSpec& ms, Index dim) {
    json k = json::object();
    if (ms.kind != MarginSpec::Kind::Spline) return k;
    std::vector<double> pts(static_cast<std::size_t>(dim));
    for (Index j = 0; j < dim; ++j) pts[static_cast<std::size_t>(j)] = static_cast<double>(j);
    k["coarse"] = natural_spline_knots(pts, ms.coarse_df);
    k["fine"] = natural_spline_knots(pts, ms.fine_df);
    return k;
  };
  b.metadata["row_knots"] = knots(rs, y.rows());
  b.metadata["col_knots"] = knots(cs, y.cols());
  std::vector<std::string> warnings;
  for (const Margin* mg : {&s.row_margin, &s.col_margin}) {
    if (const SideMetric* sm = mg->side_metric()) {
      warnings.insert(warnings.end(), sm->warnings().begin(), sm->warnings().end());
    }
  }
  b.metadata["warnings"] = warnings;
  s.validate();
  return b;
}

SolveOptions solve_options(const SolverOptionsCli& c) {
  SolveOptions o;
  o.max_iterations = c.max_iter;
  o.rel_tol = c.tol;
  o.step_tol = c.step_tol;
  o.time_budget_seconds = c.time_budget;
  if (c.step == "fixed") o.step_mode = StepMode::Fixed;
  else if (c.step == "backtracking") o.step_mode = StepMode::Backtracking;
  else throw ConfigError("--step must be fixed or backtracking");
  o.svd_tol_floor = c.svd_tol;
  o.seed = c.seed;
  o.warm_start = !c.cold;
  o.polish_offsets = c.polish;
  return o;
}

std::vector<double> resolve_grid(const GridOptions& g, const ModelSpec& spec,
                                 const ObservedMatrix& train, const SolveOptions& opts) {
  if (!g.grid.empty()) {
    std::vector<double> out;
    for (const std::string& v : split_on(g.grid, ',')) out.push_back(parse_number(v, "lambda"));
    return out;
  }
  return geometric_grid(data_lambda_max(spec, train, opts), g.grid_size, g.min_ratio);
}

std::string metrics_header() {
  return "lambda,objective,train_deviance,test_deviance,test_mse,test_misclassification,"
         "test_log_loss,rank,seconds,svd_iters,iterations,converged,error\n";
}

std::string metrics_row(const PathPoint& p) {
  const auto t = [&](double EvalMetrics::*f) { return p.test ? fmt((*p.test).*f) : std::string(""); };
  std::string err = p.error;
  for (char& c : err) {
    if (c == ',' || c == '\n') c = ';';
  }
  return fmt(p.lambda) + "," + fmt(p.objective) + "," + fmt(p.train_deviance) + "," +
         t(&EvalMetrics::deviance) + "," + t(&EvalMetrics::mse) + "," +
         t(&EvalMetrics::misclassification) + "," + t(&EvalMetrics::log_loss) + "," +
         std::to_string(p.rank) + "," + fmt(p.seconds) + "," + std::to_string(p.svd_iterations) +
         "," + std::to_string(p.iterations) + "," + (p.converged ? "1" : "0") + "," + err + "\n";
}

void save_model(const std::string& path, const ModelSpec& spec, const ModelState& state,
                json metadata) {
  ModelFile mf{spec, state, metadata.dump()};
  write_text_atomic(path, serialize_model(mf));
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const SyntheticSpec& spec, const std::string& loss, const std::string& out_path,
              const std::string& format, const std::string& truth_path, std::ostream& out) {
  SyntheticSpec s = spec;
  s.loss = parse_loss_kind(loss);
  const SyntheticData d = generate_synthetic(s);
  const DataFormat f = parse_data_format(format);
  write_text_atomic(out_path, f == DataFormat::MatrixMarket ? format_matrix_market(d.y)
                                                            : format_triplet_csv(d.y));
  if (!truth_path.empty()) write_text_atomic(truth_path, format_triplet_csv(d.y.with_values(d.theta)));
  out << "wrote " << d.y.nnz() << " observations (" << d.y.rows() << "x" << d.y.cols() << ") to "
      << out_path << "\n";
  return 0;
}

int cmd_fit(const DataOptions& d, const ModelOptions& m, const SolverOptionsCli& sc,
            const std::string& method, std::optional<double> delta, const std::string& model_path,
            const std::string& trace_path, std::ostream& out) {
  const ObservedMatrix y = load_data(d);
  BuiltModel b = build_model(m, y);
  const SolveOptions opts = solve_options(sc);
  FitResult r;
  if (method == "prox") {
    r = fit_proximal(b.spec, y, opts);
  } else if (method == "fw") {
    if (!delta) throw ConfigError("--method fw needs --delta");
    r = fit_frank_wolfe(b.spec, y, *delta, opts);
  } else {
    throw ConfigError("--method must be prox or fw");
  }
  b.metadata["seed"] = sc.seed;
  b.metadata["method"] = method;
  b.metadata["iterations"] = r.trace.rows.back().iteration;
  b.metadata["converged"] = r.trace.converged;
  b.metadata["stop_reason"] = r.trace.stop_reason;
  if (!model_path.empty()) save_model(model_path, b.spec, r.state, b.metadata);
  if (!trace_path.empty()) write_text_atomic(trace_path, trace_csv(r.trace));
  const TraceRow& last = r.trace.rows.back();
  out << "objective " << fmt(last.objective) << " rank " << r.state.gamma1.rank() << " iterations "
      << last.iteration << " stop " << r.trace.stop_reason << "\n";
  return r.trace.converged ? 0 : 5;
}

int cmd_predict(const std::string& model_path, const std::string& pairs_path,
                const std::string& data_path, const std::string& out_path, std::ostream& out) {
  const ModelFile mf = deserialize_model(read_text(model_path));
  std::vector<std::pair<Index, Index>> pairs;
  if (!pairs_path.empty()) {
    pairs = parse_pairs(read_text(pairs_path));
  } else if (!data_path.empty()) {
    const ObservedMatrix y =
        read_observations(data_path, DataFormat::Auto,
                          std::pair<Index, Index>{mf.spec.rows(), mf.spec.cols()});
    for (Index e = 0; e < y.nnz(); ++e) pairs.emplace_back(y.row(e), y.col(e));
  } else {
    throw ConfigError("predict needs --pairs or --data");
  }
  const Prediction p = predict(mf.spec, mf.state, pairs);
  std::string text = "row,col,theta,mean\n";
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    text += std::to_string(pairs[k].first) + "," + std::to_string(pairs[k].second) + "," +
            fmt(p.theta[static_cast<Index>(k)]) + "," + fmt(p.mean[static_cast<Index>(k)]) + "\n";
  }
  if (out_path.empty()) {
    out << text;
  } else {
    write_text_atomic(out_path, text);
  }
  return 0;
}

int cmd_path(const DataOptions& d, const ModelOptions& m, const SolverOptionsCli& sc,
             const GridOptions& g, double test_fraction, bool select_ridge,
             const std::string& report_path, const std::string& trace_dir, std::ostream& out) {
  const ObservedMatrix y = load_data(d);
  BuiltModel b = build_model(m, y);
  const SolveOptions opts = solve_options(sc);
  std::optional<Split> parts;
  if (test_fraction > 0.0) parts = split(y, test_fraction, sc.seed);
  const ObservedMatrix& train = parts ? parts->train : y;
  if (select_ridge) {
    if (!parts) throw ConfigError("--select-offset-ridge needs a held-out fraction");
    const double lam = select_offset_ridge(b.spec, train, parts->test, opts);
    b.spec.lambda_alpha = lam;
    b.spec.lambda_beta = lam;
    out << "offset ridge " << fmt(lam) << "\n";
  }
  const auto grid = resolve_grid(g, b.spec, train, opts);
  const auto path = lambda_path(b.spec, train, parts ? &parts->test : nullptr, grid, opts, !sc.cold);
  std::string report = metrics_header();
  for (std::size_t k = 0; k < path.size(); ++k) {
    report += metrics_row(path[k]);
    if (!trace_dir.empty()) {
      std::filesystem::create_directories(trace_dir);
      char name[32];
      std::snprintf(name, sizeof name, "trace_%03zu.csv", k);
      write_text_atomic((std::filesystem::path(trace_dir) / name).string(), trace_csv(path[k].trace));
    }
  }
  if (report_path.empty()) {
    out << report;
  } else {
    write_text_atomic(report_path, report);
  }
  return 0;
}

int cmd_cv(const DataOptions& d, const ModelOptions& m, const SolverOptionsCli& sc,
           const GridOptions& g, int folds, const std::string& report_path,
           const std::string& model_path, std::ostream& out) {
  const ObservedMatrix y = load_data(d);
  BuiltModel b = build_model(m, y);
  const SolveOptions opts = solve_options(sc);
  const auto grid = resolve_grid(g, b.spec, y, opts);
  const CvResult cv = cross_validate(b.spec, y, folds, grid, opts, sc.seed);
  std::string report = "lambda,mean_deviance,se_deviance,selected\n";
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Index i = static_cast<Index>(k);
    report += fmt(grid[k]) + "," + fmt(cv.mean_deviance[i]) + "," + fmt(cv.se_deviance[i]) + "," +
              (i == cv.selected ? "1" : "0") + "\n";
  }
  if (report_path.empty()) {
    out << report;
  } else {
    write_text_atomic(report_path, report);
  }
  if (!model_path.empty()) {
    if (!cv.refit.error.empty()) throw Error(ErrorCategory::Internal, cv.refit.error);
    ModelSpec s = b.spec;
    s.lambda_gamma = cv.lambda;
    b.metadata["seed"] = sc.seed;
    b.metadata["selected_lambda"] = cv.lambda;
    save_model(model_path, s, cv.refit.state, b.metadata);
  }
  out << "selected lambda " << fmt(cv.lambda) << "\n";
  return 0;
}

int cmd_ablate(const DataOptions& d, const ModelOptions& m, const SolverOptionsCli& sc,
               const AblationOptions& ao_in, const std::string& report_path, std::ostream& out) {
  const ObservedMatrix y = load_data(d);
  const BuiltModel b = build_model(m, y);
  ModelSpec plain = b.spec;
  plain.row_margin = Margin::identity(y.rows());
  plain.col_margin = Margin::identity(y.cols());
  AblationOptions ao = ao_in;
  ao.solve = solve_options(sc);
  ao.seed = sc.seed;
  const auto rows = side_info_ablation(y, {{"identity", plain}, {"side-information", b.spec}}, ao);
  std::string report =
      "variant,lambda,cv_deviance,test_deviance,test_mse,rank,seconds,delta_test_deviance,"
      "delta_cv_deviance,delta_cv_se\n";
  for (const AblationRow& r : rows) {
    report += r.name + "," + fmt(r.lambda) + "," + fmt(r.cv_deviance) + "," + fmt(r.test.deviance) +
              "," + fmt(r.test.mse) + "," + std::to_string(r.rank) + "," + fmt(r.seconds) + "," +
              fmt(r.delta_test_deviance) + "," + fmt(r.delta_cv_deviance) + "," +
              fmt(r.delta_cv_se) + "\n";
  }
  if (report_path.empty()) {
    out << report;
  } else {
    write_text_atomic(report_path, report);
  }
  return 0;
}

int cmd_dummies(const std::string& input, const std::string& out_path, std::ostream& out) {
  const std::string text = read_text(input);
  std::vector<std::pair<Index, std::string>> rows;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  Index max_index = -1;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DataError(input + ": line " + std::to_string(no) + ": expected 'index,category'");
    }
    const Index idx = static_cast<Index>(parse_number(line.substr(0, comma), "index"));
    rows.emplace_back(idx, line.substr(comma + 1));
    max_index = std::max(max_index, idx);
  }
  if (rows.empty()) throw DataError(input + ": no categories");
  std::vector<std::string> categories(static_cast<std::size_t>(max_index + 1));
  std::vector<char> seen(categories.size(), 0);
  for (const auto& [idx, cat] : rows) {
    if (idx < 0 || seen[static_cast<std::size_t>(idx)]) {
      throw DataError(input + ": index " + std::to_string(idx) + " invalid or repeated");
    }
    seen[static_cast<std::size_t>(idx)] = 1;
    categories[static_cast<std::size_t>(idx)] = cat;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw DataError(input + ": missing index " + std::to_string(i));
  }
  const FeatureMatrix f = dummy_features(categories);
  if (out_path.empty()) {
    out << format_features(f);
  } else {
    write_text_atomic(out_path, format_features(f));
  }
  return 0;
}

}  // namespace

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::Config:
    case ErrorCategory::Argument: return 2;
    case ErrorCategory::Data:
    case ErrorCategory::Dimension:
    case ErrorCategory::Prediction: return 3;
    case ErrorCategory::Divergence:
    case ErrorCategory::Singular: return 4;
    case ErrorCategory::Internal: return 1;
  }
  return 1;
}

MarginSpec parse_margin_spec(const std::string& text) {
  MarginSpec s;
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  std::vector<std::string> params;
  if (colon != std::string::npos) params = split_on(text.substr(colon + 1), ',');
  if (name == "identity") s.kind = MarginSpec::Kind::Identity;
  else if (name == "projection") s.kind = MarginSpec::Kind::Projection;
  else if (name == "ridge") s.kind = MarginSpec::Kind::Ridge;
  else if (name == "spline") s.kind = MarginSpec::Kind::Spline;
  else throw ConfigError("unknown metric '" + name + "' (identity, projection, ridge, spline)");
  for (const std::string& p : params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw ConfigError("metric parameter '" + p + "' needs key=value");
    const std::string key = p.substr(0, eq), value = p.substr(eq + 1);
    const double v = parse_number(value, "metric parameter " + key);
    if (s.kind == MarginSpec::Kind::Ridge && key == "sigma2") s.sigma2 = v;
    else if (s.kind == MarginSpec::Kind::Ridge && key == "scale") s.precision_scale = v;
    else if (s.kind == MarginSpec::Kind::Spline && key == "coarse") s.coarse_df = static_cast<Index>(v);
    else if (s.kind == MarginSpec::Kind::Spline && key == "fine") s.fine_df = static_cast<Index>(v);
    else throw ConfigError("metric '" + name + "' has no parameter '" + key + "'");
  }
  return s;
}

Margin build_margin(const MarginSpec& spec, Index dim, const std::optional<FeatureMatrix>& features,
                    const std::vector<double>* points) {
  switch (spec.kind) {
    case MarginSpec::Kind::Identity: return Margin::identity(dim);
    case MarginSpec::Kind::Projection:
      if (!features) throw ConfigError("projection metric needs a feature file for its margin");
      return Margin::metric(projection_hat(*features));
    case MarginSpec::Kind::Ridge: {
      if (!features) throw ConfigError("ridge metric needs a feature file for its margin");
      const Index p = features->values.cols();
      return Margin::metric(ridge_hat(*features, spec.sigma2,
                                      spec.precision_scale * Matrix::Identity(p, p)));
    }
    case MarginSpec::Kind::Spline: {
      std::vector<double> pts;
      if (points != nullptr) {
        pts = *points;
      } else {
        pts.resize(static_cast<std::size_t>(dim));
        for (Index j = 0; j < dim; ++j) pts[static_cast<std::size_t>(j)] = static_cast<double>(j);
      }
      if (static_cast<Index>(pts.size()) != dim) throw ConfigError("spline points do not match margin");
      return Margin::design(spline_design(pts, spec.coarse_df, spec.fine_df));
    }
  }
  return Margin::identity(dim);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reduced-rank matrix models with side information"};
  app.set_config("--config", "", "TOML/INI file; command-line flags take precedence");
  app.require_subcommand(1, 1);

  SyntheticSpec synth;
  std::string synth_loss = "bernoulli", synth_out, synth_format = "csv", synth_truth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic low-rank dataset");
  s->add_option("--n", synth.n, "Rows")->capture_default_str();
  s->add_option("--m", synth.m, "Columns")->capture_default_str();
  s->add_option("--rank", synth.rank, "Latent rank")->capture_default_str();
  s->add_option("--per-row", synth.per_row, "Observed entries per row")->capture_default_str();
  s->add_option("--loss", synth_loss, "Response family")->capture_default_str();
  s->add_option("--scale", synth.scale, "Standard deviation of Theta")->capture_default_str();
  s->add_option("--noise", synth.noise_sd, "Gaussian noise sd")->capture_default_str();
  s->add_option("--seed", synth.seed, "Seed")->capture_default_str();
  s->add_option("--out", synth_out, "Output observation file")->required();
  s->add_option("--format", synth_format, "csv or mtx")->capture_default_str();
  s->add_option("--truth", synth_truth, "Also write the true Theta on the observed entries");

  DataOptions data;
  ModelOptions model;
  SolverOptionsCli solver;
  GridOptions grid;
  std::string method = "prox", model_path, trace_path, report_path, trace_dir;
  std::optional<double> delta;
  auto* f = app.add_subcommand("fit", "Fit one model");
  add_data_options(f, data);
  add_model_options(f, model);
  add_solver_options(f, solver);
  f->add_option("--method", method, "prox or fw (Frank-Wolfe, identity metrics, no offsets)")
      ->capture_default_str();
  f->add_option("--delta", delta, "Nuclear-norm ball radius for fw");
  f->add_option("--model", model_path, "Model file to write");
  f->add_option("--trace", trace_path, "Trace CSV to write");

  std::string pairs_path, predict_data, predict_out;
  auto* p = app.add_subcommand("predict", "Predict from a saved model");
  p->add_option("--model", model_path, "Model file")->required();
  p->add_option("--pairs", pairs_path, "CSV with header row,col");
  p->add_option("--data", predict_data, "Observation file whose entries are predicted");
  p->add_option("--out", predict_out, "Prediction CSV (default stdout)");

  double test_fraction = 0.2;
  auto* pa = app.add_subcommand("path", "Fit a warm-started lambda path");
  add_data_options(pa, data);
  add_model_options(pa, model);
  add_solver_options(pa, solver);
  add_grid_options(pa, grid);
  pa->add_option("--test-fraction", test_fraction, "Held-out fraction (0 for none)")
      ->capture_default_str();
  pa->add_option("--report", report_path, "Report CSV (default stdout)");
  pa->add_option("--trace-dir", trace_dir, "Directory for one trace CSV per lambda");
  bool select_ridge = false;
  pa->add_flag("--select-offset-ridge", select_ridge,
               "Choose lambda-alpha = lambda-beta on the held-out part with Gamma removed");

  int folds = 5;
  auto* c = app.add_subcommand("cv", "Cross-validate lambda and refit");
  add_data_options(c, data);
  add_model_options(c, model);
  add_solver_options(c, solver);
  add_grid_options(c, grid);
  c->add_option("--folds", folds, "Number of folds")->capture_default_str();
  c->add_option("--report", report_path, "Report CSV (default stdout)");
  c->add_option("--model", model_path, "Model file for the refit");

  AblationOptions ablate;
  auto* a = app.add_subcommand("ablate", "Compare the configured metrics with identity metrics");
  add_data_options(a, data);
  add_model_options(a, model);
  add_solver_options(a, solver);
  a->add_option("--test-fraction", ablate.test_fraction, "Held-out fraction")->capture_default_str();
  a->add_option("--folds", ablate.folds, "CV folds")->capture_default_str();
  a->add_option("--grid-size", ablate.grid_size, "Lambda grid size")->capture_default_str();
  a->add_option("--min-ratio", ablate.min_ratio, "Lambda grid ratio")->capture_default_str();
  a->add_option("--report", report_path, "Report CSV (default stdout)");

  std::string dummies_in, dummies_out;
  auto* du = app.add_subcommand("dummies", "Expand an index,category CSV into dummy features");
  du->add_option("--input", dummies_in, "CSV with header index,category")->required();
  du->add_option("--out", dummies_out, "Feature CSV (default stdout)");

  std::vector<std::string> storage{"rrm"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& x : storage) argv.push_back(x.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error[config]: " << e.what() << "\n";
    return 2;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, synth_loss, synth_out, synth_format, synth_truth, out);
    if (f->parsed()) {
      return cmd_fit(data, model, solver, method, delta, model_path, trace_path, out);
    }
    if (p->parsed()) return cmd_predict(model_path, pairs_path, predict_data, predict_out, out);
    if (pa->parsed()) {
      return cmd_path(data, model, solver, grid, test_fraction, select_ridge, report_path, trace_dir,
                      out);
    }
    if (c->parsed()) return cmd_cv(data, model, solver, grid, folds, report_path, model_path, out);
    if (a->parsed()) return cmd_ablate(data, model, solver, ablate, report_path, out);
    if (du->parsed()) return cmd_dummies(dummies_in, dummies_out, out);
  } catch (const Error& e) {
    err << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace rrm
