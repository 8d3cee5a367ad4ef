#include "onset/common.hpp"

namespace onset {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kIo: return "Io";
    case Errc::kParse: return "Parse";
    case Errc::kUnknownVariable: return "UnknownVariable";
    case Errc::kDuplicateObservation: return "DuplicateObservation";
    case Errc::kImplausibleOutcome: return "ImplausibleOutcome";
    case Errc::kMissingOutcome: return "MissingOutcome";
    case Errc::kUnimputedSample: return "UnimputedSample";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kEmptyColumn: return "EmptyColumn";
    case Errc::kEmptyDesign: return "EmptyDesign";
    case Errc::kInsufficientSamples: return "InsufficientSamples";
    case Errc::kUndefinedMetric: return "UndefinedMetric";
    case Errc::kNonFinite: return "NonFinite";
  }
  return "Unknown";
}

ErrorCategory errc_category(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument:
      return ErrorCategory::kUsage;
    case Errc::kNonFinite:
      return ErrorCategory::kNumerical;
    default:
      return ErrorCategory::kData;
  }
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace onset
