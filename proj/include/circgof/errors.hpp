#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace circgof {

enum class ErrorCode {
  domain,
  imaginary_residual,
  empty_sample,
  zero_coefficient,
  sample_too_small,
  invalid_vertex,
  overflow,
  too_large,
  n_too_small,
  negative_density,
  no_power_at_max,
  parse,
  schema,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::domain: return "DomainError";
    case ErrorCode::imaginary_residual: return "ImaginaryResidual";
    case ErrorCode::empty_sample: return "EmptySample";
    case ErrorCode::zero_coefficient: return "ZeroCoefficient";
    case ErrorCode::sample_too_small: return "SampleTooSmall";
    case ErrorCode::invalid_vertex: return "InvalidVertex";
    case ErrorCode::overflow: return "Overflow";
    case ErrorCode::too_large: return "TooLarge";
    case ErrorCode::n_too_small: return "NTooSmall";
    case ErrorCode::negative_density: return "NegativeDensity";
    case ErrorCode::no_power_at_max: return "NoPowerAtMax";
    case ErrorCode::parse: return "ParseError";
    case ErrorCode::schema: return "SchemaError";
  }
  return "Error";
}

//! Single exception type for the library; inspect code() to dispatch.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace circgof
