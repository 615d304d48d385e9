#include "oodmine/error.hpp"

namespace oodmine {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::io: return "io";
    case Errc::format: return "format";
    case Errc::truncated: return "truncated";
    case Errc::zero_norm: return "zero_norm";
    case Errc::non_finite: return "non_finite";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::empty_input: return "empty_input";
    case Errc::parse: return "parse";
    case Errc::infeasible: return "infeasible";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace oodmine
