#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crossda {

/// Error categories raised across the toolkit.
///
/// The CLI maps `validation`-type categories to exit code 1 and everything
/// else to exit code 2.
enum class Errc {
  format,              // bad magic or malformed header
  corruption,          // truncated or inconsistent payload
  unsupported_format,  // unknown dtype code
  io,
  dimension,           // raster/tensor size mismatch
  dtype,
  invalid_argument,
  empty_input,
  range,               // value outside the accepted domain
  recode,              // label code outside the source scheme
  non_finite,
  missing_checkpoint,
  validation,          // configuration or command-line validation
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::format: return "format error";
    case Errc::corruption: return "corruption error";
    case Errc::unsupported_format: return "unsupported format";
    case Errc::io: return "io error";
    case Errc::dimension: return "dimension error";
    case Errc::dtype: return "dtype error";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::empty_input: return "empty input";
    case Errc::range: return "range error";
    case Errc::recode: return "recode error";
    case Errc::non_finite: return "non-finite value";
    case Errc::missing_checkpoint: return "missing checkpoint";
    case Errc::validation: return "validation error";
  }
  return "error";
}

}  // namespace crossda
