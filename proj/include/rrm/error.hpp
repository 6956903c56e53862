#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rrm {

enum class ErrorCategory {
  Dimension,
  Argument,
  Singular,
  Data,
  Config,
  Divergence,
  Prediction,
  Internal,
};

std::string_view category_name(ErrorCategory c);

// Base for every error raised by the library. The category drives CLI exit
// codes; the message carries context (entry, line, eigenvalue, step size).
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error(ErrorCategory::Dimension, m) {}
};
struct ArgumentError : Error {
  explicit ArgumentError(const std::string& m) : Error(ErrorCategory::Argument, m) {}
};
struct SingularityError : Error {
  explicit SingularityError(const std::string& m) : Error(ErrorCategory::Singular, m) {}
};
struct DataError : Error {
  explicit DataError(const std::string& m) : Error(ErrorCategory::Data, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCategory::Config, m) {}
};
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& m) : Error(ErrorCategory::Divergence, m) {}
};
struct PredictionError : Error {
  explicit PredictionError(const std::string& m) : Error(ErrorCategory::Prediction, m) {}
};

inline std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Dimension: return "dimension";
    case ErrorCategory::Argument: return "argument";
    case ErrorCategory::Singular: return "singular";
    case ErrorCategory::Data: return "data";
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Divergence: return "divergence";
    case ErrorCategory::Prediction: return "prediction";
    case ErrorCategory::Internal: return "internal";
  }
  return "internal";
}

}  // namespace rrm
