#include "onset/model_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "onset/linalg.hpp"
#include "text.hpp"

namespace onset {
namespace {

// Line-oriented reader for the "key value..." text formats below.
class Reader {
 public:
  Reader(std::string_view content, std::string_view what) : lines_(text::lines(content)), what_(what) {}

  std::string_view line() {
    if (pos_ >= lines_.size()) error("unexpected end of file");
    return lines_[pos_++];
  }

  // Returns the remainder after "key ".
  std::string_view field(std::string_view key) {
    const std::string_view l = line();
    if (l == key) return {};
    if (l.size() <= key.size() || l.substr(0, key.size()) != key || l[key.size()] != ' ') {
      error(fmt::format("expected '{}'", key));
    }
    return l.substr(key.size() + 1);
  }

  bool peek(std::string_view prefix) const {
    return pos_ < lines_.size() && lines_[pos_].substr(0, prefix.size()) == prefix;
  }

  int integer(std::string_view key) {
    int value = 0;
    if (!text::to_int(field(key), value)) error(fmt::format("'{}' is not an integer", key));
    return value;
  }

  double real(std::string_view key) { return parse(field(key)); }

  Vector reals(std::string_view key, Eigen::Index expected) {
    return row(field(key), expected);
  }

  Vector row(std::string_view s, Eigen::Index expected) {
    std::vector<double> values;
    for (auto token : text::split(text::trim(s), ' ')) {
      if (!token.empty()) values.push_back(parse(token));
    }
    if (expected >= 0 && static_cast<Eigen::Index>(values.size()) != expected) {
      error(fmt::format("expected {} numbers, found {}", expected, values.size()));
    }
    return Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  }

  Matrix matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) m.row(i) = row(line(), cols).transpose();
    return m;
  }

  std::vector<std::string> names() {
    const int count = integer("variables");
    if (count < 0) error("negative variable count");
    std::vector<std::string> out;
    for (int i = 0; i < count; ++i) out.emplace_back(line());
    return out;
  }

  double parse(std::string_view token) {
    double value = 0.0;
    if (!text::to_double(token, value)) error(fmt::format("'{}' is not a number", token));
    return value;
  }

  [[noreturn]] void error(const std::string& message) const {
    fail(Errc::kParse, fmt::format("{} line {}: {}", what_, pos_, message));
  }

 private:
  std::vector<std::string_view> lines_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::string join(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ' ';
    out += text::real(v(i));
  }
  return out;
}

void put_names(std::string& out, const std::vector<std::string>& names) {
  out += fmt::format("variables {}\n", names.size());
  for (const auto& n : names) {
    if (n.find('\n') != std::string::npos) fail(Errc::kInvalidArgument, "variable name has a newline");
    out += n + '\n';
  }
}

void put_matrix(std::string& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) out += join(m.row(i).transpose()) + '\n';
}

void put_bmc_body(std::string& out, const BmcModel& model) {
  out += fmt::format("rank {}\nP {}\n", model.rank, model.basis.rows());
  put_names(out, model.variables);
  out += "lower " + join(model.lower) + '\n';
  out += "upper " + join(model.upper) + '\n';
  out += "means " + join(model.column_means) + '\n';
  out += "basis\n";
  put_matrix(out, model.basis);
}

BmcModel read_bmc_body(Reader& in) {
  BmcModel model;
  model.rank = in.integer("rank");
  const int P = in.integer("P");
  if (model.rank < 0 || P < 0) in.error("negative dimension");
  model.variables = in.names();
  model.lower = in.reals("lower", P);
  model.upper = in.reals("upper", P);
  model.column_means = in.reals("means", P);
  in.field("basis");
  model.basis = in.matrix(P, model.rank);
  return model;
}

}  // namespace

std::string format_real(double value) { return text::real(value); }

double parse_real(std::string_view s) {
  double value = 0.0;
  if (!text::to_double(s, value)) fail(Errc::kParse, fmt::format("'{}' is not a number", s));
  return value;
}

std::string serialize_model(const TrainedModel& model, const ModelMeta& meta) {
  const ModelParams& p = model.params;
  std::string out = "onset-model 1\n";
  out += fmt::format("kind {}\nT {}\nP {}\nrank {}\n", method_name(model.method), p.T(), p.P(),
                     p.rank);
  out += fmt::format("lambda {}\nb {}\n", text::real(p.lambda), text::real(p.b));
  out += fmt::format("window_length {}\nstride {}\nhorizon {}\n", meta.window_length, meta.stride,
                     meta.horizon);
  put_names(out, meta.variables);
  for (const auto& [name, value] : model.hyperparams) {
    out += fmt::format("hyper {} {}\n", name, text::real(value));
  }
  const SolveReport& r = model.report;
  const double final_objective = r.objective_trace.empty() ? 0.0 : r.objective_trace.back();
  out += fmt::format("report.iterations {}\nreport.converged {}\nreport.preconditioned {}\n",
                     r.iterations, r.converged ? 1 : 0, r.preconditioned ? 1 : 0);
  out += fmt::format("report.ridge {}\nreport.rank_w {}\nreport.objective {}\n",
                     text::real(r.ridge), r.rank_w, text::real(final_objective));
  out += "w\n";
  put_matrix(out, p.w);
  out += "end\n";
  return out;
}

ModelFile parse_model(std::string_view content) {
  Reader in(content, "model file");
  if (in.line() != "onset-model 1") in.error("not a model file");
  ModelFile file;
  TrainedModel& m = file.model;
  try {
    m.method = parse_method(in.field("kind"));
  } catch (const Error&) {
    in.error("unknown model kind");
  }
  const int T = in.integer("T");
  const int P = in.integer("P");
  if (T < 1 || P < 1) in.error("T and P must be >= 1");
  m.params.rank = in.integer("rank");
  m.params.lambda = in.real("lambda");
  m.params.b = in.real("b");
  file.meta.window_length = in.integer("window_length");
  file.meta.stride = in.integer("stride");
  file.meta.horizon = in.integer("horizon");
  file.meta.variables = in.names();
  while (in.peek("hyper ")) {
    const auto rest = in.field("hyper");
    const auto space = rest.find(' ');
    if (space == std::string_view::npos) in.error("hyperparameter without a value");
    m.hyperparams[std::string(rest.substr(0, space))] = in.parse(rest.substr(space + 1));
  }
  SolveReport& r = m.report;
  r.iterations = in.integer("report.iterations");
  r.converged = in.integer("report.converged") != 0;
  r.preconditioned = in.integer("report.preconditioned") != 0;
  r.ridge = in.real("report.ridge");
  r.rank_w = in.integer("report.rank_w");
  const double final_objective = in.real("report.objective");
  if (r.iterations > 0 || final_objective != 0.0) r.objective_trace.push_back(final_objective);
  in.field("w");
  m.params.w = in.matrix(T, P);
  if (in.line() != "end") in.error("expected 'end'");
  if (m.method == Method::kCensoredLowRank && m.params.rank > 0 &&
      linalg::numerical_rank(m.params.w) <= m.params.rank) {
    m.params.factors = factorize(m.params);
  }
  return file;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model,
                const ModelMeta& meta) {
  write_text(path, serialize_model(model, meta));
}

ModelFile load_model(const std::filesystem::path& path) { return parse_model(read_text(path)); }

std::string serialize_bmc_model(const BmcModel& model) {
  std::string out = "onset-bmc 1\n";
  put_bmc_body(out, model);
  out += "end\n";
  return out;
}

BmcModel parse_bmc_model(std::string_view content) {
  Reader in(content, "imputation model");
  if (in.line() != "onset-bmc 1") in.error("not an imputation model");
  BmcModel model = read_bmc_body(in);
  if (in.line() != "end") in.error("expected 'end'");
  return model;
}

std::string serialize_imputer(const Imputer& imputer, const std::vector<std::string>& variables) {
  std::string out = "onset-imputer 1\n";
  out += fmt::format("kind {}\n", imputer_name(imputer.kind()));
  if (const auto* bmc = dynamic_cast<const BmcImputer*>(&imputer)) {
    BmcModel model = bmc->model();
    model.variables = variables;
    put_bmc_body(out, model);
  } else if (const auto* mean = dynamic_cast<const MeanImputer*>(&imputer)) {
    put_names(out, variables);
    out += "means " + join(mean->means()) + '\n';
  } else if (const auto* knn = dynamic_cast<const KnnImputer*>(&imputer)) {
    put_names(out, variables);
    const Matrix& ref = knn->reference();
    const Mask& mask = knn->reference_mask();
    out += fmt::format("k {}\nreference {} {}\n", knn->k(), ref.rows(), ref.cols());
    for (Eigen::Index i = 0; i < ref.rows(); ++i) {
      for (Eigen::Index j = 0; j < ref.cols(); ++j) {
        if (j > 0) out += ' ';
        out += mask(i, j) ? text::real(ref(i, j)) : std::string("NA");
      }
      out += '\n';
    }
  }
  out += "end\n";
  return out;
}

std::unique_ptr<Imputer> parse_imputer_file(std::string_view content,
                                            const ImputeOptions& options) {
  Reader in(content, "imputer file");
  if (in.line() != "onset-imputer 1") in.error("not an imputer file");
  ImputerKind kind = ImputerKind::kBmc;
  try {
    kind = parse_imputer(in.field("kind"));
  } catch (const Error&) {
    in.error("unknown imputer kind");
  }
  std::unique_ptr<Imputer> result;
  switch (kind) {
    case ImputerKind::kBmc:
      result = std::make_unique<BmcImputer>(read_bmc_body(in), options);
      break;
    case ImputerKind::kMean: {
      const auto names = in.names();
      result = std::make_unique<MeanImputer>(
          in.reals("means", static_cast<Eigen::Index>(names.size())));
      break;
    }
    case ImputerKind::kKnn: {
      const auto names = in.names();
      const int k = in.integer("k");
      const auto shape = text::split(in.field("reference"), ' ');
      int rows = 0;
      int cols = 0;
      if (shape.size() != 2 || !text::to_int(shape[0], rows) || !text::to_int(shape[1], cols) ||
          rows < 0 || cols != static_cast<int>(names.size())) {
        in.error("bad reference shape");
      }
      Matrix ref = Matrix::Zero(rows, cols);
      Mask mask = Mask::Constant(rows, cols, false);
      for (int i = 0; i < rows; ++i) {
        const auto tokens = text::split(text::trim(in.line()), ' ');
        if (static_cast<int>(tokens.size()) != cols) in.error("bad reference row");
        for (int j = 0; j < cols; ++j) {
          if (tokens[static_cast<std::size_t>(j)] == "NA") continue;
          ref(i, j) = in.parse(tokens[static_cast<std::size_t>(j)]);
          mask(i, j) = true;
        }
      }
      result = std::make_unique<KnnImputer>(k, std::move(ref), std::move(mask));
      break;
    }
  }
  if (in.line() != "end") in.error("expected 'end'");
  return result;
}

void write_text(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::kIo, fmt::format("cannot write {}", path.string()));
  out << content;
  if (!out) fail(Errc::kIo, fmt::format("failed writing {}", path.string()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::kIo, fmt::format("cannot open {}", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace onset
