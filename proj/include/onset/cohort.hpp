#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "onset/common.hpp"

namespace onset {

/// Event observed: first SSI onset, in postoperative days. Real-valued so
/// synthetic cohorts can carry continuous onset times.
struct Event {
  double onset_day = 0.0;
};

/// No event within follow-up. horizon_day is the last day of observation
/// reported in the outcomes file.
struct Censored {
  int horizon_day = 0;
};

using Outcome = std::variant<Event, Censored>;

/// One individual's daily observation rows. Row d holds postoperative day
/// first_day + d; mask(d, p) is true when variable p was recorded that day.
struct SubjectSeries {
  std::string subject_id;
  int first_day = 1;
  Matrix values;
  Mask mask;
  Outcome outcome;
  int last_obs_day = 0;

  int days() const { return static_cast<int>(values.rows()); }
  int last_day() const { return first_day + days() - 1; }
  bool has_event() const { return std::holds_alternative<Event>(outcome); }
};

struct Cohort {
  std::vector<std::string> variables;
  std::vector<SubjectSeries> subjects;

  int num_variables() const { return static_cast<int>(variables.size()); }
};

/// A T x P window of consecutive days with its time-to-event label.
struct WindowSample {
  Matrix x;
  Mask x_mask;
  double y = 0.0;
  bool censored = false;
  std::string subject_id;
  int window_end_day = 0;

  int T() const { return static_cast<int>(x.rows()); }
  int P() const { return static_cast<int>(x.cols()); }
  int first_day() const { return window_end_day - T() + 1; }
  bool fully_observed() const { return x_mask.all(); }
};

/// Vectorized design: each column is one vectorized window.
struct DesignSet {
  Matrix X_complete;
  Vector y_complete;
  Matrix X_censored;
  Vector y_censored;
  int T = 0;
  int P = 0;

  int dim() const { return T * P; }
  Eigen::Index n_complete() const { return X_complete.cols(); }
  Eigen::Index n_censored() const { return X_censored.cols(); }
};

std::vector<std::string> load_dictionary(const std::filesystem::path& path);

Cohort load_cohort(const std::filesystem::path& observations_path,
                   const std::filesystem::path& outcomes_path,
                   const std::vector<std::string>& dictionary);

/// Writes the cohort in the long observation / outcome CSV layout accepted by
/// load_cohort. Only observed cells are written.
void write_cohort(const Cohort& cohort, const std::filesystem::path& observations_path,
                  const std::filesystem::path& outcomes_path);

void write_dictionary(const std::vector<std::string>& variables,
                      const std::filesystem::path& path);

struct WindowOptions {
  int T = 5;
  int stride = 1;
  int horizon = 21;
};

std::vector<WindowSample> extract_windows(const Cohort& cohort, const WindowOptions& options);

/// Row-concatenation: index t * P + p holds x(t, p).
Vector vectorize(const Matrix& x);
Matrix reshape(const Vector& v, int T, int P);

DesignSet assemble_design(std::span<const WindowSample> samples);

enum class SplitUnit { kSample, kSubject };

std::string_view split_unit_name(SplitUnit unit);
SplitUnit parse_split_unit(std::string_view name);

/// k disjoint folds covering every sample index. Deterministic in seed.
std::vector<std::vector<std::size_t>> split_folds(std::span<const WindowSample> samples, int k,
                                                  SplitUnit unit, std::uint64_t seed);

}  // namespace onset
