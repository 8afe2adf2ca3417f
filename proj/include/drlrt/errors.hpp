#pragma once

#include <stdexcept>
#include <string>

namespace drlrt {

// Failure category; the CLI maps data -> exit 2, numeric -> exit 3.
enum class ErrorKind { data, numeric };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

#define DRLRT_ERROR_TYPE(NAME, KIND) \
  struct NAME : Error {              \
    explicit NAME(const std::string& m) : Error(ErrorKind::KIND, m) {} \
  }

DRLRT_ERROR_TYPE(EmptyInput, data);
DRLRT_ERROR_TYPE(LengthMismatch, data);
DRLRT_ERROR_TYPE(IndexOutOfRange, data);
DRLRT_ERROR_TYPE(QueryBelowSupport, data);
DRLRT_ERROR_TYPE(FoldQueryBelowSupport, data);
DRLRT_ERROR_TYPE(SchemaMismatch, data);
DRLRT_ERROR_TYPE(NonPositiveG, data);
DRLRT_ERROR_TYPE(EvaluationUnavailable, data);
DRLRT_ERROR_TYPE(TooFewPoints, data);
DRLRT_ERROR_TYPE(TooFewSamples, data);
DRLRT_ERROR_TYPE(BracketFailure, numeric);
DRLRT_ERROR_TYPE(DegenerateDesign, numeric);
DRLRT_ERROR_TYPE(EmptyKernelMass, numeric);
DRLRT_ERROR_TYPE(QuantileUnavailable, numeric);
DRLRT_ERROR_TYPE(IdentityViolation, numeric);
DRLRT_ERROR_TYPE(SimulationFailure, numeric);

#undef DRLRT_ERROR_TYPE

}  // namespace drlrt
