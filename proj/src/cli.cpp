#include "onset/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>
#include <tuple>

#include <omp.h>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "onset/evaluation.hpp"
#include "onset/model_io.hpp"
#include "onset/synthetic.hpp"
#include "text.hpp"

namespace onset::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

Json defaults() {
  return Json{
      // inputs and outputs
      {"observations", ""},
      {"outcomes", ""},
      {"dictionary", ""},
      {"model", ""},
      {"imputer_model", ""},
      {"report", ""},
      {"out", "."},
      {"seed", 0u},
      {"jobs", 1},
      // windows
      {"T", 5},
      {"stride", 1},
      {"horizon", 21},
      // imputation
      {"imputer", "bmc"},
      {"imputer_rank", 3},
      {"knn_k", 5},
      {"bmc_tol", 1e-6},
      {"bmc_max_iter", 500},
      {"impute_tol", 1e-8},
      {"impute_max_iter", 200},
      // model
      {"method", "censored_lowrank"},
      {"rank", 2},
      {"lambda", 0.05},
      {"step_policy", "backtracking"},
      {"eta", 1.0},
      {"max_halvings", 50},
      {"tol", 1e-4},
      {"max_iter", 5000},
      {"precondition", false},
      {"center", true},
      {"baseline_mode", "weighted"},
      {"svr_C", 1.0},
      {"svr_epsilon", 0.1},
      // cross-validation and reports
      {"k", 5},
      {"split_unit", "sample"},
      {"durations", {3, 4, 5, 6}},
      {"ranks", {2, 3}},
      {"lambdas", {0.01, 0.05, 0.1}},
      {"methods", {"censored_lowrank", "ols", "svr"}},
      {"top_n", 0},
      {"hist_bins", 10},
      // synthetic cohorts
      {"n_subjects", 200},
      {"days_per_subject", 10},
      {"P", 10},
      {"T_star", 5},
      {"true_rank", 2},
      {"latent_rank", 3},
      {"noise_sigma", 1.0},
      {"missing_rate", 0.1},
      {"censored_fraction", 0.3},
      {"b_star", 10.0},
      {"signal_scale", 4.0},
      {"daily_noise", 0.1},
      {"first_day", 1},
      {"round_onset", false},
  };
}

bool compatible(const std::string& key, const Json& def, const Json& value) {
  if (key == "censored_fraction" && value.is_null()) return true;
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_number_unsigned()) return value.is_number_unsigned();
  if (def.is_number_integer()) return value.is_number_integer();
  if (def.is_number()) return value.is_number();
  if (def.is_string()) return value.is_string();
  if (def.is_array()) {
    if (!value.is_array() || value.empty()) return false;
    for (const auto& item : value) {
      if (!compatible(key, def.front(), item)) return false;
    }
    return true;
  }
  return false;
}

void merge_config(Json& cfg, const fs::path& path) {
  Json file;
  try {
    file = Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    fail(Errc::kInvalidArgument, fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  } catch (const Error& e) {
    fail(Errc::kInvalidArgument, fmt::format("{}: {}", path.string(), e.what()));
  }
  if (!file.is_object()) fail(Errc::kInvalidArgument, fmt::format("{}: expected an object", path.string()));
  for (const auto& [key, value] : file.items()) {
    if (!cfg.contains(key)) {
      fail(Errc::kInvalidArgument, fmt::format("{}: unknown key '{}'", path.string(), key));
    }
    if (!compatible(key, cfg.at(key), value)) {
      fail(Errc::kInvalidArgument,
           fmt::format("{}: key '{}' expects a value like {}", path.string(), key,
                       cfg.at(key).dump()));
    }
    cfg[key] = value;
  }
}

// Command-line flags; a set flag overrides the config file.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs, T, stride, horizon, rank, k;
  std::optional<double> lambda;
  std::optional<std::string> out, imputer, method, split_unit, observations, outcomes, dictionary,
      model, imputer_model, report;
  std::vector<int> durations, ranks;
  std::vector<double> lambdas;
  std::vector<std::string> methods;
};

void add_flags(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "JSON config file (flat keys)");
  app.add_option("--seed", f.seed, "random seed");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--T", f.T, "window length in days");
  app.add_option("--stride", f.stride, "days between window starts");
  app.add_option("--horizon", f.horizon, "censoring horizon day");
  app.add_option("--imputer", f.imputer, "bmc, mean or knn");
  app.add_option("--method", f.method, "censored_lowrank, ols or svr");
  app.add_option("--rank", f.rank, "rank budget");
  app.add_option("--lambda", f.lambda, "censored-sample weight");
  app.add_option("--k", f.k, "number of folds");
  app.add_option("--split-unit", f.split_unit, "sample or subject");
  app.add_option("--observations", f.observations, "observations.csv");
  app.add_option("--outcomes", f.outcomes, "outcomes.csv");
  app.add_option("--dictionary", f.dictionary, "variable dictionary");
  app.add_option("--model", f.model, "model file");
  app.add_option("--imputer-model", f.imputer_model, "imputer file");
  app.add_option("--report", f.report, "cv_report.json");
  app.add_option("--durations", f.durations, "grid window lengths")->delimiter(',');
  app.add_option("--ranks", f.ranks, "grid ranks")->delimiter(',');
  app.add_option("--lambdas", f.lambdas, "grid lambdas")->delimiter(',');
  app.add_option("--methods", f.methods, "methods to cross-validate")->delimiter(',');
}

template <typename T>
void apply(Json& cfg, const char* key, const std::optional<T>& value) {
  if (value) cfg[key] = *value;
}

template <typename T>
void apply(Json& cfg, const char* key, const std::vector<T>& value) {
  if (!value.empty()) cfg[key] = value;
}

Json effective_config(const Flags& f) {
  Json cfg = defaults();
  if (!f.config.empty()) merge_config(cfg, f.config);
  apply(cfg, "seed", f.seed);
  apply(cfg, "jobs", f.jobs);
  apply(cfg, "T", f.T);
  apply(cfg, "stride", f.stride);
  apply(cfg, "horizon", f.horizon);
  apply(cfg, "rank", f.rank);
  apply(cfg, "k", f.k);
  apply(cfg, "lambda", f.lambda);
  apply(cfg, "out", f.out);
  apply(cfg, "imputer", f.imputer);
  apply(cfg, "method", f.method);
  apply(cfg, "split_unit", f.split_unit);
  apply(cfg, "observations", f.observations);
  apply(cfg, "outcomes", f.outcomes);
  apply(cfg, "dictionary", f.dictionary);
  apply(cfg, "model", f.model);
  apply(cfg, "imputer_model", f.imputer_model);
  apply(cfg, "report", f.report);
  apply(cfg, "durations", f.durations);
  apply(cfg, "ranks", f.ranks);
  apply(cfg, "lambdas", f.lambdas);
  apply(cfg, "methods", f.methods);
  return cfg;
}

std::string path_key(const Json& cfg, const char* key) {
  const auto value = cfg.at(key).get<std::string>();
  if (value.empty()) {
    std::string flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    fail(Errc::kInvalidArgument, fmt::format("missing --{}", flag));
  }
  return value;
}

fs::path prepare_out(const Json& cfg, const std::string& command) {
  const fs::path out = cfg.at("out").get<std::string>();
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(Errc::kIo, fmt::format("cannot create {}: {}", out.string(), ec.message()));
  Json effective = cfg;
  effective["command"] = command;
  write_text(out / "config.json", effective.dump(2) + "\n");
  return out;
}

Cohort load_inputs(const Json& cfg) {
  const auto dictionary = load_dictionary(path_key(cfg, "dictionary"));
  return load_cohort(path_key(cfg, "observations"), path_key(cfg, "outcomes"), dictionary);
}

WindowOptions window_options(const Json& cfg) {
  return {cfg.at("T").get<int>(), cfg.at("stride").get<int>(), cfg.at("horizon").get<int>()};
}

ImputeOptions impute_options(const Json& cfg) {
  return {cfg.at("impute_tol").get<double>(), cfg.at("impute_max_iter").get<int>()};
}

ImputerConfig imputer_config(const Json& cfg) {
  ImputerConfig c;
  c.kind = parse_imputer(cfg.at("imputer").get<std::string>());
  c.rank = cfg.at("imputer_rank").get<int>();
  c.knn_k = cfg.at("knn_k").get<int>();
  c.bmc.tol = cfg.at("bmc_tol").get<double>();
  c.bmc.max_iter = cfg.at("bmc_max_iter").get<int>();
  c.impute = impute_options(cfg);
  return c;
}

TrainOptions train_options(const Json& cfg) {
  TrainOptions t;
  t.pgd.step_policy = parse_step_policy(cfg.at("step_policy").get<std::string>());
  t.pgd.eta = cfg.at("eta").get<double>();
  t.pgd.max_halvings = cfg.at("max_halvings").get<int>();
  t.pgd.tol = cfg.at("tol").get<double>();
  t.pgd.max_iter = cfg.at("max_iter").get<int>();
  t.pgd.precondition = cfg.at("precondition").get<bool>();
  t.pgd.center = cfg.at("center").get<bool>();
  t.svr.C = cfg.at("svr_C").get<double>();
  t.svr.epsilon = cfg.at("svr_epsilon").get<double>();
  t.baseline_mode = parse_censored_mode(cfg.at("baseline_mode").get<std::string>());
  return t;
}

std::string solve_report_csv(const SolveReport& report) {
  std::string out = "iteration,objective,step_size\n";
  for (std::size_t i = 0; i < report.objective_trace.size(); ++i) {
    const std::string step = i == 0 ? "" : text::real(report.step_sizes[i - 1]);
    out += fmt::format("{},{},{}\n", i, text::real(report.objective_trace[i]), step);
  }
  return out;
}

// Fits the imputer on every window, trains one configuration and writes the
// model, imputer, solve report and coefficients. Returns the fitted windows.
std::vector<WindowSample> fit_and_save(const Json& cfg, const Cohort& cohort, const fs::path& out,
                                       const WindowOptions& windows_opts, Method method, int rank,
                                       double lambda, std::ostream& log) {
  auto windows = extract_windows(cohort, windows_opts);
  if (windows.empty()) fail(Errc::kInsufficientSamples, "cohort yields no windows");
  auto imputer = make_imputer(imputer_config(cfg));
  impute_training_windows(windows, *imputer);
  const TrainedModel model = train_model(windows, method, rank, lambda, train_options(cfg));
  const ModelMeta meta{cohort.variables, windows_opts.T, windows_opts.stride, windows_opts.horizon};
  save_model(out / "model.txt", model, meta);
  write_text(out / "imputer.txt", serialize_imputer(*imputer, cohort.variables));
  write_text(out / "solve_report.csv", solve_report_csv(model.report));
  const auto coefficients =
      coefficient_report(model.params, cohort.variables, cfg.at("top_n").get<std::size_t>());
  write_text(out / "coefficients.csv", coefficients_csv(coefficients));
  log << fmt::format("trained {} on {} windows (T={}, rank={}, lambda={})\n", method_name(method),
                     windows.size(), windows_opts.T, rank, text::real(lambda));
  return windows;
}

void write_grid_tables(const CvReport& report, const fs::path& out) {
  const GridTables tables = grid_report(report);
  write_text(out / "grid.csv", grid_csv(tables));
  write_text(out / "lambda_curve.csv", lambda_curve_csv(tables));
  write_text(out / "duration_curve.csv", duration_curve_csv(tables));
}

int cmd_synth(const Json& cfg, std::ostream& log) {
  SyntheticSpec spec;
  spec.n_subjects = cfg.at("n_subjects").get<int>();
  spec.days_per_subject = cfg.at("days_per_subject").get<int>();
  spec.P = cfg.at("P").get<int>();
  spec.T_star = cfg.at("T_star").get<int>();
  spec.true_rank = cfg.at("true_rank").get<int>();
  spec.latent_rank = cfg.at("latent_rank").get<int>();
  spec.noise_sigma = cfg.at("noise_sigma").get<double>();
  spec.censor_horizon = cfg.at("horizon").get<int>();
  spec.missing_rate = cfg.at("missing_rate").get<double>();
  spec.seed = cfg.at("seed").get<std::uint64_t>();
  spec.first_day = cfg.at("first_day").get<int>();
  spec.signal_scale = cfg.at("signal_scale").get<double>();
  spec.daily_noise = cfg.at("daily_noise").get<double>();
  spec.b_star = cfg.at("b_star").get<double>();
  spec.round_onset = cfg.at("round_onset").get<bool>();
  if (cfg.at("censored_fraction").is_null()) {
    spec.censored_fraction.reset();
  } else {
    spec.censored_fraction = cfg.at("censored_fraction").get<double>();
  }
  const auto [cohort, truth] = generate_cohort(spec);
  const fs::path out = prepare_out(cfg, "synth");
  write_cohort(cohort, out / "observations.csv", out / "outcomes.csv");
  write_dictionary(cohort.variables, out / "dictionary.txt");
  std::string t = fmt::format("b_star {}\nclipped {}\nw_star\n", text::real(truth.b_star),
                              truth.clipped);
  for (Eigen::Index i = 0; i < truth.w_star.rows(); ++i) {
    for (Eigen::Index j = 0; j < truth.w_star.cols(); ++j) {
      t += (j > 0 ? " " : "") + text::real(truth.w_star(i, j));
    }
    t += '\n';
  }
  write_text(out / "truth.txt", t);
  log << fmt::format("wrote {} subjects to {}\n", cohort.subjects.size(), out.string());
  return 0;
}

int cmd_impute(const Json& cfg, std::ostream& log) {
  const Cohort cohort = load_inputs(cfg);
  const ImputationMatrix rows = imputation_rows(cohort);
  auto imputer = make_imputer(imputer_config(cfg));
  const Matrix completed = imputer->fit(rows.X, rows.mask);
  const fs::path out = prepare_out(cfg, "impute");

  std::string csv = "subject_id,day";
  for (const auto& v : cohort.variables) csv += "," + v;
  csv += '\n';
  for (Eigen::Index i = 0; i < completed.rows(); ++i) {
    const auto& [id, day] = rows.row_index[static_cast<std::size_t>(i)];
    csv += fmt::format("{},{}", id, day);
    for (Eigen::Index j = 0; j < completed.cols(); ++j) csv += "," + text::real(completed(i, j));
    csv += '\n';
  }
  write_text(out / "completed.csv", csv);
  write_text(out / "imputer.txt", serialize_imputer(*imputer, cohort.variables));
  if (const auto* bmc = dynamic_cast<const BmcImputer*>(imputer.get())) {
    std::string trace = "iteration,objective\n";
    const auto& values = bmc->last_fit().objective_trace;
    for (std::size_t i = 0; i < values.size(); ++i) {
      trace += fmt::format("{},{}\n", i + 1, text::real(values[i]));
    }
    write_text(out / "imputation_trace.csv", trace);
  }
  log << fmt::format("imputed {} person-days with {}\n", completed.rows(),
                     imputer_name(imputer->kind()));
  return 0;
}

int cmd_train(const Json& cfg, std::ostream& log) {
  const Cohort cohort = load_inputs(cfg);
  const fs::path out = prepare_out(cfg, "train");
  fit_and_save(cfg, cohort, out, window_options(cfg),
               parse_method(cfg.at("method").get<std::string>()), cfg.at("rank").get<int>(),
               cfg.at("lambda").get<double>(), log);
  return 0;
}

int cmd_predict(const Json& cfg, std::ostream& log) {
  const fs::path model_path = path_key(cfg, "model");
  const ModelFile file = load_model(model_path);
  const Cohort cohort = load_inputs(cfg);
  if (cohort.variables != file.meta.variables) {
    fail(Errc::kDimensionMismatch,
         fmt::format("{}: variables differ from the dictionary", model_path.string()));
  }
  std::string imputer_path = cfg.at("imputer_model").get<std::string>();
  if (imputer_path.empty()) imputer_path = (model_path.parent_path() / "imputer.txt").string();
  const auto imputer = parse_imputer_file(read_text(imputer_path), impute_options(cfg));

  WindowOptions opts = window_options(cfg);
  opts.T = file.model.params.T();
  auto windows = extract_windows(cohort, opts);
  impute_new_windows(windows, *imputer);
  const Vector predictions = predict_windows(file.model.params, windows);

  const fs::path out = prepare_out(cfg, "predict");
  std::string csv = "subject_id,window_end_day,censored,y,prediction\n";
  for (std::size_t i = 0; i < windows.size(); ++i) {
    csv += fmt::format("{},{},{},{},{}\n", windows[i].subject_id, windows[i].window_end_day,
                       windows[i].censored ? 1 : 0, text::real(windows[i].y),
                       text::real(predictions(static_cast<Eigen::Index>(i))));
  }
  write_text(out / "predictions.csv", csv);
  const bool any_complete =
      std::any_of(windows.begin(), windows.end(), [](const auto& w) { return !w.censored; });
  if (any_complete) {
    const double error =
        mae({predictions.data(), static_cast<std::size_t>(predictions.size())}, windows);
    log << fmt::format("{} windows, MAE {}\n", windows.size(), text::real(error));
  } else {
    log << fmt::format("{} windows, no complete samples to score\n", windows.size());
  }
  return 0;
}

int cmd_cv(const Json& cfg, std::ostream& log) {
  const Cohort cohort = load_inputs(cfg);
  CvOptions opts;
  opts.grid.durations = cfg.at("durations").get<std::vector<int>>();
  opts.grid.ranks = cfg.at("ranks").get<std::vector<int>>();
  opts.grid.lambdas = cfg.at("lambdas").get<std::vector<double>>();
  opts.methods.clear();
  for (const auto& m : cfg.at("methods").get<std::vector<std::string>>()) {
    opts.methods.push_back(parse_method(m));
  }
  opts.imputer = imputer_config(cfg);
  opts.k = cfg.at("k").get<int>();
  opts.unit = parse_split_unit(cfg.at("split_unit").get<std::string>());
  opts.seed = cfg.at("seed").get<std::uint64_t>();
  opts.stride = cfg.at("stride").get<int>();
  opts.horizon = cfg.at("horizon").get<int>();
  opts.train = train_options(cfg);
  opts.jobs = cfg.at("jobs").get<int>();

  const CvReport report = cross_validate(cohort, opts);
  const fs::path out = prepare_out(cfg, "cv");
  write_text(out / "cv_report.json", cv_report_json(report));
  write_grid_tables(report, out);

  const GridTables tables = grid_report(report);
  for (const auto& row : tables.grid) {
    if (!row.is_best) continue;
    log << fmt::format("best {}: duration {}, rank {}, lambda {}, MAE {}\n",
                       method_name(row.entry.method), row.entry.duration, row.entry.rank,
                       text::real(row.entry.lambda), text::real(row.entry.mean_mae));
    if (row.entry.method != Method::kCensoredLowRank) continue;
    WindowOptions w{row.entry.duration, opts.stride, opts.horizon};
    const auto windows = fit_and_save(cfg, cohort, out, w, row.entry.method, row.entry.rank,
                                      row.entry.lambda, log);
    const ModelFile file = load_model(out / "model.txt");
    const auto hist =
        onset_distribution(file.model.params, windows, cfg.at("hist_bins").get<int>());
    write_text(out / "onset_hist.csv", onset_hist_csv(hist));
  }
  return 0;
}

int cmd_report(const Json& cfg, std::ostream& log) {
  const CvReport report = parse_cv_report_json(read_text(path_key(cfg, "report")));
  const fs::path out = prepare_out(cfg, "report");
  write_grid_tables(report, out);
  log << fmt::format("wrote tables for {} grid entries\n", report.entries.size());
  return 0;
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kUsage: return 1;
    case ErrorCategory::kData: return 2;
    case ErrorCategory::kNumerical: return 3;
  }
  return 3;
}

}  // namespace

std::string default_config_json() { return defaults().dump(2) + "\n"; }

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Time-to-event prediction from censored spatial-temporal windows", "onset"};
  app.require_subcommand(1);
  Flags flags;
  using Command = int (*)(const Json&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Command>> commands{
      {"synth", "write a synthetic cohort", cmd_synth},
      {"impute", "fit an imputer and write the completed matrix", cmd_impute},
      {"train", "fit one configuration", cmd_train},
      {"predict", "score a cohort with a saved model", cmd_predict},
      {"cv", "cross-validated grid search", cmd_cv},
      {"report", "regenerate tables from cv_report.json", cmd_report},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    add_flags(*sub, flags);
    subs.push_back(sub);
  }

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    const Json cfg = effective_config(flags);
    const int jobs = cfg.at("jobs").get<int>();
    if (jobs < 1) fail(Errc::kInvalidArgument, "jobs must be >= 1");
    omp_set_num_threads(jobs);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i]->parsed()) return std::get<2>(commands[i])(cfg, out);
    }
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const Json::exception& e) {
    err << "error: configuration: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace onset::cli
