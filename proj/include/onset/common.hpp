#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace onset {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using MaskVector = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Error codes surfaced by the library. Each code belongs to one of three
// categories which the CLI maps onto exit codes.
enum class Errc {
  kInvalidArgument,
  kIo,
  kParse,
  kUnknownVariable,
  kDuplicateObservation,
  kImplausibleOutcome,
  kMissingOutcome,
  kUnimputedSample,
  kDimensionMismatch,
  kEmptyColumn,
  kEmptyDesign,
  kInsufficientSamples,
  kUndefinedMetric,
  kNonFinite,
};

enum class ErrorCategory { kUsage, kData, kNumerical };

std::string_view errc_name(Errc code);
ErrorCategory errc_category(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return errc_category(code_); }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& message);

}  // namespace onset
