#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace embattr {

/// Error categories. Each maps to a stable kebab-case name that the CLI
/// prints, so scripts can branch on it.
enum class Errc {
  io,
  validation,
  bad_magic,
  unsupported_version,
  truncated,
  non_finite,
  label_out_of_range,
  unknown_label,
  degenerate_vector,
  no_positive_pairs,
  dimension,
  composition,
  divergence,
  configuration,
  undefined_metric,
  degenerate_projection,
  parse,
};

std::string_view category_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view category() const noexcept { return category_name(code_); }

 private:
  Errc code_;
};

}  // namespace embattr
