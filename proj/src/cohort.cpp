#include "onset/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

#include "text.hpp"

namespace onset {
namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kIo, fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

[[noreturn]] void fail_at(Errc code, const std::filesystem::path& path, std::size_t line,
                          const std::string& what) {
  fail(code, fmt::format("{}:{}: {}", path.string(), line, what));
}

void expect_header(std::string_view line, std::string_view expected,
                   const std::filesystem::path& path) {
  std::string normalized;
  for (auto field : text::split(line, ',')) {
    if (!normalized.empty()) normalized += ',';
    normalized += text::trim(field);
  }
  if (normalized != expected) {
    fail_at(Errc::kParse, path, 1, fmt::format("expected header '{}'", expected));
  }
}

struct OutcomeRow {
  bool event = false;
  double onset = 0.0;
  int last_obs_day = 0;
};

std::map<std::string, OutcomeRow> read_outcomes(const std::filesystem::path& path) {
  const std::string content = slurp(path);
  const auto rows = text::lines(content);
  if (rows.empty()) fail_at(Errc::kParse, path, 1, "empty file");
  expect_header(rows[0], "subject_id,ssi,onset_day,last_obs_day", path);

  std::map<std::string, OutcomeRow> out;
  for (std::size_t n = 1; n < rows.size(); ++n) {
    if (text::trim(rows[n]).empty()) continue;
    const auto fields = text::split(rows[n], ',');
    if (fields.size() != 4) fail_at(Errc::kParse, path, n + 1, "expected 4 fields");
    const std::string id(text::trim(fields[0]));
    if (id.empty()) fail_at(Errc::kParse, path, n + 1, "empty subject_id");

    OutcomeRow row;
    int ssi = 0;
    if (!text::to_int(fields[1], ssi) || (ssi != 0 && ssi != 1)) {
      fail_at(Errc::kParse, path, n + 1, "ssi must be 0 or 1");
    }
    row.event = ssi == 1;
    const auto onset_field = text::trim(fields[2]);
    if (row.event) {
      if (!text::to_double(onset_field, row.onset) || !std::isfinite(row.onset)) {
        fail_at(Errc::kParse, path, n + 1, "onset_day must be a finite number when ssi=1");
      }
    } else if (!onset_field.empty()) {
      fail_at(Errc::kParse, path, n + 1, "onset_day must be empty when ssi=0");
    }
    if (!text::to_int(fields[3], row.last_obs_day)) {
      fail_at(Errc::kParse, path, n + 1, "last_obs_day must be an integer");
    }
    if (!out.emplace(id, row).second) {
      fail_at(Errc::kParse, path, n + 1, fmt::format("duplicate outcome for subject '{}'", id));
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> load_dictionary(const std::filesystem::path& path) {
  const std::string content = slurp(path);
  std::vector<std::string> names;
  std::size_t n = 0;
  for (auto line : text::lines(content)) {
    ++n;
    const auto name = text::trim(line);
    if (name.empty()) continue;
    if (std::find(names.begin(), names.end(), name) != names.end()) {
      fail_at(Errc::kParse, path, n, fmt::format("duplicate variable '{}'", name));
    }
    names.emplace_back(name);
  }
  if (names.empty()) fail(Errc::kParse, fmt::format("{}: no variables", path.string()));
  return names;
}

Cohort load_cohort(const std::filesystem::path& observations_path,
                   const std::filesystem::path& outcomes_path,
                   const std::vector<std::string>& dictionary) {
  if (dictionary.empty()) fail(Errc::kInvalidArgument, "empty variable dictionary");
  std::unordered_map<std::string, int> column;
  for (std::size_t j = 0; j < dictionary.size(); ++j) {
    column.emplace(dictionary[j], static_cast<int>(j));
  }

  // subject -> day -> column -> value
  std::map<std::string, std::map<int, std::map<int, double>>> records;
  {
    const std::string content = slurp(observations_path);
    const auto rows = text::lines(content);
    if (rows.empty()) fail_at(Errc::kParse, observations_path, 1, "empty file");
    expect_header(rows[0], "subject_id,day,variable,value", observations_path);
    for (std::size_t n = 1; n < rows.size(); ++n) {
      if (text::trim(rows[n]).empty()) continue;
      const auto fields = text::split(rows[n], ',');
      if (fields.size() != 4) fail_at(Errc::kParse, observations_path, n + 1, "expected 4 fields");
      const std::string id(text::trim(fields[0]));
      if (id.empty()) fail_at(Errc::kParse, observations_path, n + 1, "empty subject_id");
      int day = 0;
      if (!text::to_int(fields[1], day) || day < 1) {
        fail_at(Errc::kParse, observations_path, n + 1, "day must be a positive integer");
      }
      const std::string variable(text::trim(fields[2]));
      const auto it = column.find(variable);
      if (it == column.end()) {
        fail_at(Errc::kUnknownVariable, observations_path, n + 1,
                fmt::format("variable '{}' is not in the dictionary", variable));
      }
      double value = 0.0;
      if (!text::to_double(fields[3], value) || !std::isfinite(value)) {
        fail_at(Errc::kParse, observations_path, n + 1, "value must be a finite number");
      }
      if (!records[id][day].emplace(it->second, value).second) {
        fail_at(Errc::kDuplicateObservation, observations_path, n + 1,
                fmt::format("duplicate ({}, {}, {})", id, day, variable));
      }
    }
  }

  const auto outcomes = read_outcomes(outcomes_path);

  Cohort cohort;
  cohort.variables = dictionary;
  const auto P = static_cast<Eigen::Index>(dictionary.size());
  for (const auto& [id, days] : records) {
    const auto found = outcomes.find(id);
    if (found == outcomes.end()) {
      fail(Errc::kMissingOutcome,
           fmt::format("{}: subject '{}' has observations but no outcome", outcomes_path.string(),
                       id));
    }
    const OutcomeRow& row = found->second;

    SubjectSeries s;
    s.subject_id = id;
    s.first_day = days.begin()->first;
    const int last = days.rbegin()->first;
    const Eigen::Index D = last - s.first_day + 1;
    s.values = Matrix::Zero(D, P);
    s.mask = Mask::Constant(D, P, false);
    for (const auto& [day, cells] : days) {
      for (const auto& [j, value] : cells) {
        s.values(day - s.first_day, j) = value;
        s.mask(day - s.first_day, j) = true;
      }
    }
    s.last_obs_day = row.last_obs_day;
    if (row.last_obs_day < last) {
      fail(Errc::kImplausibleOutcome,
           fmt::format("{}: subject '{}' last_obs_day {} precedes its last record day {}",
                       outcomes_path.string(), id, row.last_obs_day, last));
    }
    if (row.event) {
      if (!(row.onset > s.first_day) || row.onset > row.last_obs_day) {
        fail(Errc::kImplausibleOutcome,
             fmt::format("{}: subject '{}' onset_day {} outside ({}, {}]", outcomes_path.string(),
                         id, text::real(row.onset), s.first_day, row.last_obs_day));
      }
      s.outcome = Event{row.onset};
    } else {
      s.outcome = Censored{row.last_obs_day};
    }
    cohort.subjects.push_back(std::move(s));
  }
  return cohort;
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& observations_path,
                  const std::filesystem::path& outcomes_path) {
  std::string obs = "subject_id,day,variable,value\n";
  std::string out = "subject_id,ssi,onset_day,last_obs_day\n";
  for (const auto& s : cohort.subjects) {
    for (int d = 0; d < s.days(); ++d) {
      for (int j = 0; j < cohort.num_variables(); ++j) {
        if (!s.mask(d, j)) continue;
        obs += fmt::format("{},{},{},{}\n", s.subject_id, s.first_day + d, cohort.variables[j],
                           text::real(s.values(d, j)));
      }
    }
    if (const auto* event = std::get_if<Event>(&s.outcome)) {
      out += fmt::format("{},1,{},{}\n", s.subject_id, text::real(event->onset_day),
                         s.last_obs_day);
    } else {
      out += fmt::format("{},0,,{}\n", s.subject_id, s.last_obs_day);
    }
  }
  for (const auto& [path, content] : {std::pair{observations_path, &obs},
                                      std::pair{outcomes_path, &out}}) {
    std::ofstream file(path, std::ios::binary);
    if (!file) fail(Errc::kIo, fmt::format("cannot write {}", path.string()));
    file << *content;
  }
}

void write_dictionary(const std::vector<std::string>& variables,
                      const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(Errc::kIo, fmt::format("cannot write {}", path.string()));
  for (const auto& v : variables) file << v << '\n';
}

std::vector<WindowSample> extract_windows(const Cohort& cohort, const WindowOptions& options) {
  if (options.T < 1 || options.stride < 1 || options.horizon < 1) {
    fail(Errc::kInvalidArgument, "window length, stride and horizon must be >= 1");
  }
  std::vector<WindowSample> windows;
  for (const auto& s : cohort.subjects) {
    const auto* event = std::get_if<Event>(&s.outcome);
    for (int start = s.first_day; start + options.T - 1 <= s.last_day(); start += options.stride) {
      const int end = start + options.T - 1;
      if (event && !(end < event->onset_day)) break;
      WindowSample w;
      w.x = s.values.middleRows(start - s.first_day, options.T);
      w.x_mask = s.mask.middleRows(start - s.first_day, options.T);
      w.subject_id = s.subject_id;
      w.window_end_day = end;
      if (event) {
        w.y = event->onset_day - end;
        w.censored = false;
      } else {
        w.y = std::max(0, options.horizon - end);
        w.censored = true;
      }
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

Vector vectorize(const Matrix& x) {
  Vector v(x.size());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index p = 0; p < x.cols(); ++p) v(t * x.cols() + p) = x(t, p);
  }
  return v;
}

Matrix reshape(const Vector& v, int T, int P) {
  if (v.size() != static_cast<Eigen::Index>(T) * P) {
    fail(Errc::kDimensionMismatch, fmt::format("cannot reshape {} entries to {}x{}", v.size(), T, P));
  }
  Matrix x(T, P);
  for (int t = 0; t < T; ++t) {
    for (int p = 0; p < P; ++p) x(t, p) = v(t * P + p);
  }
  return x;
}

DesignSet assemble_design(std::span<const WindowSample> samples) {
  DesignSet design;
  if (samples.empty()) return design;
  design.T = samples.front().T();
  design.P = samples.front().P();
  Eigen::Index n_complete = 0;
  for (const auto& s : samples) {
    if (s.T() != design.T || s.P() != design.P) {
      fail(Errc::kDimensionMismatch,
           fmt::format("window of subject '{}' is {}x{}, expected {}x{}", s.subject_id, s.T(),
                       s.P(), design.T, design.P));
    }
    if (!s.fully_observed()) {
      fail(Errc::kUnimputedSample, fmt::format("window of subject '{}' ending day {} has missing "
                                               "entries",
                                               s.subject_id, s.window_end_day));
    }
    if (!s.censored) ++n_complete;
  }
  const Eigen::Index dim = design.dim();
  const auto n_censored = static_cast<Eigen::Index>(samples.size()) - n_complete;
  design.X_complete.resize(dim, n_complete);
  design.y_complete.resize(n_complete);
  design.X_censored.resize(dim, n_censored);
  design.y_censored.resize(n_censored);
  Eigen::Index ic = 0;
  Eigen::Index in = 0;
  for (const auto& s : samples) {
    if (s.censored) {
      design.X_censored.col(in) = vectorize(s.x);
      design.y_censored(in++) = s.y;
    } else {
      design.X_complete.col(ic) = vectorize(s.x);
      design.y_complete(ic++) = s.y;
    }
  }
  return design;
}

std::string_view split_unit_name(SplitUnit unit) {
  return unit == SplitUnit::kSample ? "sample" : "subject";
}

SplitUnit parse_split_unit(std::string_view name) {
  if (name == "sample") return SplitUnit::kSample;
  if (name == "subject") return SplitUnit::kSubject;
  fail(Errc::kInvalidArgument, fmt::format("unknown split unit '{}'", name));
}

std::vector<std::vector<std::size_t>> split_folds(std::span<const WindowSample> samples, int k,
                                                  SplitUnit unit, std::uint64_t seed) {
  if (k < 2) fail(Errc::kInvalidArgument, "k must be >= 2");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));

  if (unit == SplitUnit::kSample) {
    if (samples.size() < static_cast<std::size_t>(k)) {
      fail(Errc::kInsufficientSamples,
           fmt::format("{} samples cannot fill {} folds", samples.size(), k));
    }
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); ++i) folds[i % folds.size()].push_back(order[i]);
  } else {
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].subject_id].push_back(i);
    if (groups.size() < static_cast<std::size_t>(k)) {
      fail(Errc::kInsufficientSamples,
           fmt::format("{} subjects cannot fill {} folds", groups.size(), k));
    }
    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [id, members] : groups) order.push_back(&members);
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto* members : order) {
      auto smallest = std::min_element(folds.begin(), folds.end(), [](const auto& a, const auto& b) {
        return a.size() < b.size();
      });
      smallest->insert(smallest->end(), members->begin(), members->end());
    }
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

}  // namespace onset
