#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace oodmine {

enum class Errc {
  io,
  format,
  truncated,
  zero_norm,
  non_finite,
  dimension_mismatch,
  invalid_argument,
  empty_input,
  parse,
  infeasible,
};

std::string_view to_string(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (the CLI in particular) can tell corruption from misuse.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace oodmine
