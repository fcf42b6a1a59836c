#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stopest {

enum class ErrorCode {
  InvalidArgument,
  InvalidSpec,
  BudgetExhausted,
  UndefinedForK1,
  InvalidLambda,
  Underflow,
  NonErgodicChain,
  ImpossiblePrefix,
  NoMatchInWindow,
  EntropyZero,
  OracleMissing,
  SchemaMismatch,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::UndefinedForK1: return "UndefinedForK1";
    case ErrorCode::InvalidLambda: return "InvalidLambda";
    case ErrorCode::Underflow: return "Underflow";
    case ErrorCode::NonErgodicChain: return "NonErgodicChain";
    case ErrorCode::ImpossiblePrefix: return "ImpossiblePrefix";
    case ErrorCode::NoMatchInWindow: return "NoMatchInWindow";
    case ErrorCode::EntropyZero: return "EntropyZero";
    case ErrorCode::OracleMissing: return "OracleMissing";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stopest
