#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "onset/cli.hpp"
#include "onset/model_io.hpp"
#include "onset/synthetic.hpp"

namespace fs = std::filesystem;
using namespace onset;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("onset_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  CliRun r;
  r.code = cli::dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Small synthetic cohort written through the CLI.
void synth(const TempDir& dir, int subjects = 40) {
  write_file(dir.path() / "synth.json",
             "{\"n_subjects\": " + std::to_string(subjects) +
                 ", \"days_per_subject\": 8, \"P\": 4, \"T_star\": 3, \"latent_rank\": 2}");
  const CliRun r = run({"synth", "--config", dir / "synth.json", "--out", dir / "data", "--seed",
                     "7"});
  ASSERT_EQ(r.code, 0) << r.err;
}

std::vector<std::string> data_flags(const TempDir& dir) {
  return {"--observations", dir / "data/observations.csv", "--outcomes",
          dir / "data/outcomes.csv", "--dictionary", dir / "data/dictionary.txt"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::size_t count_lines(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.find(needle) != std::string::npos) ++n;
  }
  return n;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"train", "--rank", "two"}).code, 1);
  EXPECT_EQ(run({"train"}).code, 1);  // no input paths
  EXPECT_EQ(run({"synth", "--help"}).code, 0);
  EXPECT_FALSE(cli::default_config_json().empty());
}

TEST(Cli, ConfigIsValidated) {
  TempDir dir;
  write_file(dir.path() / "bad.json", "{\"rnak\": 2}");
  CliRun r = run({"synth", "--config", dir / "bad.json", "--out", dir / "x"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("rnak"), std::string::npos);
  write_file(dir.path() / "typed.json", "{\"rank\": \"two\"}");
  EXPECT_EQ(run({"synth", "--config", dir / "typed.json", "--out", dir / "x"}).code, 1);
  write_file(dir.path() / "broken.json", "{");
  EXPECT_EQ(run({"synth", "--config", dir / "broken.json", "--out", dir / "x"}).code, 1);
}

TEST(Cli, MissingOutcomesIsDataError) {
  TempDir dir;
  synth(dir);
  const std::string missing = dir / "nowhere/outcomes.csv";
  const CliRun r = run({"train", "--observations", dir / "data/observations.csv", "--outcomes",
                     missing, "--dictionary", dir / "data/dictionary.txt", "--out",
                     dir / "model", "--T", "3"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST(Cli, SynthIsDeterministicAndWritesConfig) {
  TempDir dir;
  synth(dir);
  const std::string first = slurp(dir.path() / "data/observations.csv");
  const CliRun again = run({"synth", "--config", dir / "synth.json", "--out", dir / "again",
                         "--seed", "7"});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(first, slurp(dir.path() / "again/observations.csv"));
  EXPECT_EQ(slurp(dir.path() / "data/outcomes.csv"), slurp(dir.path() / "again/outcomes.csv"));
  const std::string config = slurp(dir.path() / "data/config.json");
  EXPECT_NE(config.find("\"command\": \"synth\""), std::string::npos);
  EXPECT_NE(config.find("\"seed\": 7"), std::string::npos);
}

TEST(Cli, ImputeWritesCompletedMatrix) {
  TempDir dir;
  synth(dir);
  for (const std::string kind : {"bmc", "mean", "knn"}) {
    const CliRun r = run(concat({"impute", "--imputer", kind, "--out", dir / kind}, data_flags(dir)));
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string completed = slurp(dir.path() / kind / "completed.csv");
    EXPECT_EQ(completed.find(",NA"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir.path() / kind / "imputer.txt"));
  }
  EXPECT_TRUE(fs::exists(dir.path() / "bmc/imputation_trace.csv"));
}

TEST(Cli, TrainThenPredictMatchesInProcess) {
  TempDir dir;
  synth(dir);
  for (const std::string method : {"censored_lowrank", "ols", "svr"}) {
    const fs::path model_dir = dir.path() / ("model_" + method);
    CliRun r = run(concat({"train", "--method", method, "--T", "3", "--out", model_dir.string()},
                       data_flags(dir)));
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"model.txt", "imputer.txt", "solve_report.csv", "coefficients.csv",
                          "config.json"}) {
      EXPECT_TRUE(fs::exists(model_dir / f)) << f;
    }
    const fs::path pred_dir = dir.path() / ("pred_" + method);
    r = run(concat({"predict", "--model", (model_dir / "model.txt").string(), "--out",
                    pred_dir.string()},
                   data_flags(dir)));
    ASSERT_EQ(r.code, 0) << r.err;

    // In-process predictions from the saved artifacts.
    const ModelFile file = load_model(model_dir / "model.txt");
    const auto imputer = parse_imputer_file(slurp(model_dir / "imputer.txt"));
    const Cohort cohort =
        load_cohort(dir / "data/observations.csv", dir / "data/outcomes.csv",
                    load_dictionary(dir / "data/dictionary.txt"));
    auto windows = extract_windows(cohort, {3, 1, 21});
    impute_new_windows(windows, *imputer);
    const Vector expected = predict_windows(file.model.params, windows);

    std::istringstream csv(slurp(pred_dir / "predictions.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "subject_id,window_end_day,censored,y,prediction");
    Eigen::Index i = 0;
    while (std::getline(csv, line)) {
      ASSERT_LT(i, expected.size());
      const double got = parse_real(line.substr(line.rfind(',') + 1));
      EXPECT_EQ(got, expected(i)) << line;
      ++i;
    }
    EXPECT_EQ(i, expected.size());
  }
}

TEST(Cli, CrossValidationIsByteIdenticalAndReportRegenerates) {
  TempDir dir;
  synth(dir);
  const std::vector<std::string> grid = {"--durations", "3,4", "--ranks", "1,2", "--lambdas",
                                         "0.05,0.5", "--k", "3"};
  for (const std::string run_name : {"a", "b"}) {
    const CliRun r = run(concat(concat({"cv", "--out", dir / run_name, "--seed", "9"}, grid),
                             data_flags(dir)));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"cv_report.json", "grid.csv", "lambda_curve.csv", "duration_curve.csv",
                        "model.txt", "imputer.txt", "coefficients.csv", "solve_report.csv",
                        "onset_hist.csv"}) {
    const std::string a = slurp(dir.path() / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir.path() / "b" / f)) << f;
  }
  const CliRun r = run({"report", "--report", dir / "a/cv_report.json", "--out", dir / "rep"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir.path() / "a/grid.csv"), slurp(dir.path() / "rep/grid.csv"));
  EXPECT_EQ(slurp(dir.path() / "a/lambda_curve.csv"), slurp(dir.path() / "rep/lambda_curve.csv"));
}

TEST(Cli, ReferenceGridShape) {
  TempDir dir;
  synth(dir, 30);
  const CliRun r = run(concat({"cv", "--out", dir / "cv", "--k", "3", "--jobs", "2"},
                           data_flags(dir)));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string grid = slurp(dir.path() / "cv/grid.csv");
  for (const char* m : {",censored_lowrank,", ",ols,", ",svr,"}) {
    EXPECT_EQ(count_lines(grid, m), 24u) << m;
  }
}

TEST(Cli, BadReportIsDataError) {
  TempDir dir;
  write_file(dir.path() / "r.json", "{\"entries\": 3}");
  EXPECT_EQ(run({"report", "--report", dir / "r.json", "--out", dir / "o"}).code, 2);
}
