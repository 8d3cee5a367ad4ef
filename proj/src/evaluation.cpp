#include "onset/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <tuple>

#include <fmt/format.h>

#include "json.hpp"
#include "text.hpp"

namespace onset {
namespace {

using Key = std::tuple<int, int, double>;  // duration, rank, lambda

Key key_of(const CvEntry& e) { return {e.duration, e.rank, e.lambda}; }

[[noreturn]] void rethrow_annotated(const std::string& where) {
  try {
    throw;
  } catch (const Error& e) {
    std::string_view message = e.what();
    const std::string prefix = fmt::format("{}: ", errc_name(e.code()));
    if (message.starts_with(prefix)) message.remove_prefix(prefix.size());
    throw Error(e.code(), fmt::format("{}: {}", where, message));
  } catch (const std::exception& e) {
    throw Error(Errc::kNonFinite, fmt::format("{}: {}", where, e.what()));
  }
}

std::vector<WindowSample> select(std::span<const WindowSample> windows,
                                 std::span<const std::size_t> indices) {
  std::vector<WindowSample> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i >= windows.size()) fail(Errc::kInvalidArgument, "fold index out of range");
    out.push_back(windows[i]);
  }
  return out;
}

// Fitted imputer applied to one fold: training rows completed in place, test
// rows completed from training information only.
std::pair<std::vector<WindowSample>, std::vector<WindowSample>> impute_fold(
    std::span<const WindowSample> windows, std::span<const std::size_t> train,
    std::span<const std::size_t> test, const ImputerConfig& config) {
  auto train_set = select(windows, train);
  auto test_set = select(windows, test);
  auto imputer = make_imputer(config);
  impute_training_windows(train_set, *imputer);
  impute_new_windows(test_set, *imputer);
  return {std::move(train_set), std::move(test_set)};
}

double score(const TrainedModel& model, std::span<const WindowSample> test) {
  const Vector predictions = predict_windows(model.params, test);
  return mae({predictions.data(), static_cast<std::size_t>(predictions.size())}, test);
}

}  // namespace

double mae(std::span<const double> predictions, std::span<const WindowSample> samples) {
  if (predictions.size() != samples.size()) {
    fail(Errc::kDimensionMismatch,
         fmt::format("{} predictions for {} samples", predictions.size(), samples.size()));
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].censored) continue;
    sum += std::abs(predictions[i] - samples[i].y);
    ++count;
  }
  if (count == 0) fail(Errc::kUndefinedMetric, "no complete samples to score");
  return sum / static_cast<double>(count);
}

std::string_view method_name(Method method) {
  switch (method) {
    case Method::kCensoredLowRank: return "censored_lowrank";
    case Method::kOls: return "ols";
    case Method::kSvr: return "svr";
  }
  return "censored_lowrank";
}

Method parse_method(std::string_view name) {
  if (name == "censored_lowrank") return Method::kCensoredLowRank;
  if (name == "ols") return Method::kOls;
  if (name == "svr") return Method::kSvr;
  fail(Errc::kInvalidArgument, fmt::format("unknown method '{}'", name));
}

TrainedModel train_model(std::span<const WindowSample> windows, Method method, int rank,
                         double lambda, const TrainOptions& options) {
  const DesignSet design = assemble_design(windows);
  if (design.dim() == 0) fail(Errc::kEmptyDesign, "no training windows");
  TrainedModel model;
  model.method = method;
  switch (method) {
    case Method::kCensoredLowRank: {
      FitResult fit = fit_pgd(design, lambda, rank, options.pgd);
      model.params = std::move(fit.params);
      model.report = std::move(fit.report);
      model.hyperparams["rank"] = rank;
      model.hyperparams["lambda"] = lambda;
      break;
    }
    case Method::kOls: {
      const BaselineParams p = ols_fit(design, lambda, options.baseline_mode);
      model.params = p.as_model();
      model.hyperparams = p.hyperparams;
      break;
    }
    case Method::kSvr: {
      const BaselineParams p = svr_fit(design, options.svr, lambda, options.baseline_mode);
      model.params = p.as_model();
      model.hyperparams = p.hyperparams;
      break;
    }
  }
  return model;
}

Vector predict_windows(const ModelParams& params, std::span<const WindowSample> windows) {
  Vector out(static_cast<Eigen::Index>(windows.size()));
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = predict(params, windows[i]);
  }
  return out;
}

FoldOutcome run_fold(std::span<const WindowSample> windows, std::span<const std::size_t> train,
                     std::span<const std::size_t> test, Method method, int rank, double lambda,
                     const ImputerConfig& imputer, const TrainOptions& options) {
  auto [train_set, test_set] = impute_fold(windows, train, test, imputer);
  FoldOutcome out;
  out.model = train_model(train_set, method, rank, lambda, options);
  out.test_mae = score(out.model, test_set);
  return out;
}

CvReport cross_validate(const Cohort& cohort, const CvOptions& options) {
  const Grid& grid = options.grid;
  if (grid.durations.empty() || grid.ranks.empty() || grid.lambdas.empty() ||
      options.methods.empty()) {
    fail(Errc::kInvalidArgument, "grid and method lists must be nonempty");
  }
  if (options.k < 2) fail(Errc::kInvalidArgument, "k must be >= 2");
  const auto n_d = grid.durations.size();
  const auto n_m = options.methods.size();
  const auto n_r = grid.ranks.size();
  const auto n_l = grid.lambdas.size();
  const auto k = static_cast<std::size_t>(options.k);

  std::vector<std::vector<WindowSample>> windows(n_d);
  std::vector<std::vector<std::vector<std::size_t>>> folds(n_d);
  for (std::size_t d = 0; d < n_d; ++d) {
    try {
      windows[d] = extract_windows(
          cohort, {grid.durations[d], options.stride, options.horizon});
      folds[d] = split_folds(windows[d], options.k, options.unit, options.seed);
    } catch (...) {
      rethrow_annotated(fmt::format("duration {}", grid.durations[d]));
    }
  }

  // maes[d][m][r][l][fold]; every task writes only its own fold slot.
  std::vector<double> maes(n_d * n_m * n_r * n_l * k, 0.0);
  auto slot = [&](std::size_t d, std::size_t m, std::size_t r, std::size_t l, std::size_t f) {
    return (((d * n_m + m) * n_r + r) * n_l + l) * k + f;
  };
  std::vector<std::exception_ptr> errors(n_d * k);

  const auto tasks = static_cast<long>(n_d * k);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, options.jobs))
  for (long task = 0; task < tasks; ++task) {
    const auto d = static_cast<std::size_t>(task) / k;
    const auto f = static_cast<std::size_t>(task) % k;
    std::string where = fmt::format("duration {}, fold {}", grid.durations[d], f + 1);
    try {
      std::vector<std::size_t> train;
      for (std::size_t g = 0; g < k; ++g) {
        if (g != f) train.insert(train.end(), folds[d][g].begin(), folds[d][g].end());
      }
      std::sort(train.begin(), train.end());
      const auto [train_set, test_set] =
          impute_fold(windows[d], train, folds[d][f], options.imputer);
      for (std::size_t m = 0; m < n_m; ++m) {
        const Method method = options.methods[m];
        for (std::size_t l = 0; l < n_l; ++l) {
          if (method != Method::kCensoredLowRank) {
            // Baselines have no rank parameter; one fit serves every rank.
            where = fmt::format("duration {}, fold {}, method {}, lambda {}", grid.durations[d],
                                f + 1, method_name(method), grid.lambdas[l]);
            const double value = score(
                train_model(train_set, method, grid.ranks[0], grid.lambdas[l], options.train),
                test_set);
            for (std::size_t r = 0; r < n_r; ++r) maes[slot(d, m, r, l, f)] = value;
            continue;
          }
          for (std::size_t r = 0; r < n_r; ++r) {
            where = fmt::format("duration {}, fold {}, method {}, rank {}, lambda {}",
                                grid.durations[d], f + 1, method_name(method), grid.ranks[r],
                                grid.lambdas[l]);
            maes[slot(d, m, r, l, f)] = score(
                train_model(train_set, method, grid.ranks[r], grid.lambdas[l], options.train),
                test_set);
          }
        }
      }
    } catch (...) {
      try {
        rethrow_annotated(where);
      } catch (...) {
        errors[static_cast<std::size_t>(task)] = std::current_exception();
      }
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CvReport report;
  report.seed = options.seed;
  report.k = options.k;
  report.unit = options.unit;
  for (std::size_t d = 0; d < n_d; ++d) {
    for (std::size_t r = 0; r < n_r; ++r) {
      for (std::size_t l = 0; l < n_l; ++l) {
        for (std::size_t m = 0; m < n_m; ++m) {
          CvEntry e;
          e.duration = grid.durations[d];
          e.rank = grid.ranks[r];
          e.lambda = grid.lambdas[l];
          e.method = options.methods[m];
          double sum = 0.0;
          for (std::size_t f = 0; f < k; ++f) {
            e.fold_maes.push_back(maes[slot(d, m, r, l, f)]);
            sum += e.fold_maes.back();
          }
          e.mean_mae = sum / static_cast<double>(k);
          report.entries.push_back(std::move(e));
        }
      }
    }
  }
  return report;
}

GridTables grid_report(const CvReport& report) {
  if (report.entries.empty()) fail(Errc::kInvalidArgument, "empty cross-validation report");
  GridTables tables;
  tables.k = report.k;

  std::vector<Method> methods;
  for (const auto& e : report.entries) {
    if (std::find(methods.begin(), methods.end(), e.method) == methods.end()) {
      methods.push_back(e.method);
    }
  }

  // Best cell per method; ties go to the lexicographically smallest key.
  std::map<Method, std::size_t> best;
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    const auto& e = report.entries[i];
    const auto it = best.find(e.method);
    if (it == best.end()) {
      best.emplace(e.method, i);
      continue;
    }
    const auto& b = report.entries[it->second];
    if (e.mean_mae < b.mean_mae || (e.mean_mae == b.mean_mae && key_of(e) < key_of(b))) {
      it->second = i;
    }
  }
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    tables.grid.push_back({report.entries[i], best.at(report.entries[i].method) == i});
  }

  for (const Method method : methods) {
    // (rank, lambda) -> (mae, duration) and (rank, duration) -> (mae, lambda)
    std::map<std::pair<int, double>, std::pair<double, int>> by_lambda;
    std::map<std::pair<int, int>, std::pair<double, double>> by_duration;
    for (const auto& e : report.entries) {
      if (e.method != method) continue;
      const auto [lit, lnew] = by_lambda.try_emplace({e.rank, e.lambda}, e.mean_mae, e.duration);
      if (!lnew && (e.mean_mae < lit->second.first ||
                    (e.mean_mae == lit->second.first && e.duration < lit->second.second))) {
        lit->second = {e.mean_mae, e.duration};
      }
      const auto [dit, dnew] =
          by_duration.try_emplace({e.rank, e.duration}, e.mean_mae, e.lambda);
      if (!dnew && (e.mean_mae < dit->second.first ||
                    (e.mean_mae == dit->second.first && e.lambda < dit->second.second))) {
        dit->second = {e.mean_mae, e.lambda};
      }
    }
    for (const auto& [key, value] : by_lambda) {
      tables.lambda_curve.push_back(
          {method, key.first, key.second, static_cast<double>(value.second), value.first});
    }
    for (const auto& [key, value] : by_duration) {
      tables.duration_curve.push_back(
          {method, key.first, static_cast<double>(key.second), value.second, value.first});
    }
  }
  return tables;
}

std::string grid_csv(const GridTables& tables) {
  std::string out = "duration,rank,lambda,method";
  for (int f = 1; f <= tables.k; ++f) out += fmt::format(",fold_{}", f);
  out += ",mean_mae,is_best\n";
  for (const auto& row : tables.grid) {
    const auto& e = row.entry;
    out += fmt::format("{},{},{},{}", e.duration, e.rank, text::real(e.lambda),
                       method_name(e.method));
    for (double v : e.fold_maes) out += "," + text::real(v);
    out += fmt::format(",{},{}\n", text::real(e.mean_mae), row.is_best ? 1 : 0);
  }
  return out;
}

std::string lambda_curve_csv(const GridTables& tables) {
  std::string out = "method,rank,lambda,best_duration,mean_mae\n";
  for (const auto& p : tables.lambda_curve) {
    out += fmt::format("{},{},{},{},{}\n", method_name(p.method), p.rank, text::real(p.x),
                       static_cast<int>(p.at), text::real(p.mean_mae));
  }
  return out;
}

std::string duration_curve_csv(const GridTables& tables) {
  std::string out = "method,rank,duration,best_lambda,mean_mae\n";
  for (const auto& p : tables.duration_curve) {
    out += fmt::format("{},{},{},{},{}\n", method_name(p.method), p.rank, static_cast<int>(p.x),
                       text::real(p.at), text::real(p.mean_mae));
  }
  return out;
}

std::vector<CoefficientEntry> coefficient_report(const ModelParams& params,
                                                 const std::vector<std::string>& variable_names,
                                                 std::size_t top_n) {
  if (static_cast<int>(variable_names.size()) != params.P()) {
    fail(Errc::kDimensionMismatch,
         fmt::format("{} variable names for {} columns", variable_names.size(), params.P()));
  }
  std::vector<CoefficientEntry> entries;
  for (int t = 0; t < params.T(); ++t) {
    for (int p = 0; p < params.P(); ++p) {
      entries.push_back({variable_names[static_cast<std::size_t>(p)], t, params.w(t, p)});
    }
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.coefficient > b.coefficient; });
  if (top_n > 0 && top_n < entries.size()) entries.resize(top_n);
  return entries;
}

std::string coefficients_csv(std::span<const CoefficientEntry> entries) {
  std::string out = "rank,variable,day_offset,coefficient\n";
  std::size_t position = 0;
  for (const auto& e : entries) {
    out += fmt::format("{},{},{},{}\n", ++position, e.variable, e.day_offset,
                       text::real(e.coefficient));
  }
  return out;
}

OnsetHistogram onset_distribution(const ModelParams& params,
                                  std::span<const WindowSample> samples, int bins) {
  if (bins < 1) fail(Errc::kInvalidArgument, "bins must be >= 1");
  const Vector predictions = predict_windows(params, samples);
  double lo = 0.0;
  double hi = 1.0;
  if (predictions.size() > 0) {
    lo = predictions.minCoeff();
    hi = predictions.maxCoeff();
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  std::vector<double> edges(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) {
    edges[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / bins;
  }
  edges.back() = hi;
  return onset_distribution(params, samples, std::move(edges));
}

OnsetHistogram onset_distribution(const ModelParams& params,
                                  std::span<const WindowSample> samples,
                                  std::vector<double> edges) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end())) {
    fail(Errc::kInvalidArgument, "need at least two ascending bin edges");
  }
  const Vector predictions = predict_windows(params, samples);
  OnsetHistogram h;
  const std::size_t bins = edges.size() - 1;
  h.complete.assign(bins, 0);
  h.censored.assign(bins, 0);
  std::size_t n_complete = 0;
  std::size_t n_censored = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double v = predictions(static_cast<Eigen::Index>(i));
    const auto pos = std::upper_bound(edges.begin(), edges.end(), v) - edges.begin();
    const auto bin = static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(pos - 1, 0, static_cast<std::ptrdiff_t>(bins) - 1));
    if (samples[i].censored) {
      ++h.censored[bin];
      h.censored_mean += v;
      ++n_censored;
    } else {
      ++h.complete[bin];
      h.complete_mean += v;
      ++n_complete;
    }
  }
  if (n_complete > 0) h.complete_mean /= static_cast<double>(n_complete);
  if (n_censored > 0) h.censored_mean /= static_cast<double>(n_censored);
  h.edges = std::move(edges);
  return h;
}

std::string onset_hist_csv(const OnsetHistogram& histogram) {
  std::string out = "bin,lower,upper,complete,censored\n";
  for (std::size_t b = 0; b < histogram.complete.size(); ++b) {
    out += fmt::format("{},{},{},{},{}\n", b + 1, text::real(histogram.edges[b]),
                       text::real(histogram.edges[b + 1]), histogram.complete[b],
                       histogram.censored[b]);
  }
  return out;
}

std::string cv_report_json(const CvReport& report) {
  nlohmann::ordered_json doc;
  doc["seed"] = report.seed;
  doc["k"] = report.k;
  doc["split_unit"] = std::string(split_unit_name(report.unit));
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : report.entries) {
    nlohmann::ordered_json item;
    item["duration"] = e.duration;
    item["rank"] = e.rank;
    item["lambda"] = e.lambda;
    item["method"] = std::string(method_name(e.method));
    item["fold_maes"] = e.fold_maes;
    item["mean_mae"] = e.mean_mae;
    entries.push_back(std::move(item));
  }
  doc["entries"] = std::move(entries);
  return doc.dump(2) + "\n";
}

CvReport parse_cv_report_json(std::string_view text) {
  CvReport report;
  try {
    const auto doc = nlohmann::json::parse(text);
    report.seed = doc.at("seed").get<std::uint64_t>();
    report.k = doc.at("k").get<int>();
    report.unit = parse_split_unit(doc.at("split_unit").get<std::string>());
    for (const auto& item : doc.at("entries")) {
      CvEntry e;
      e.duration = item.at("duration").get<int>();
      e.rank = item.at("rank").get<int>();
      e.lambda = item.at("lambda").get<double>();
      e.method = parse_method(item.at("method").get<std::string>());
      e.fold_maes = item.at("fold_maes").get<std::vector<double>>();
      e.mean_mae = item.at("mean_mae").get<double>();
      if (static_cast<int>(e.fold_maes.size()) != report.k) {
        fail(Errc::kParse, "fold count differs from k");
      }
      report.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::kParse, fmt::format("invalid cross-validation report: {}", e.what()));
  } catch (const Error& e) {
    if (e.code() == Errc::kParse) throw;
    fail(Errc::kParse, fmt::format("invalid cross-validation report: {}", e.what()));
  }
  return report;
}

}  // namespace onset
