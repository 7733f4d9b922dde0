#include "embattr/error.hpp"

namespace embattr {

std::string_view category_name(Errc code) noexcept {
  switch (code) {
    case Errc::io: return "io-error";
    case Errc::validation: return "validation-error";
    case Errc::bad_magic: return "bad-magic";
    case Errc::unsupported_version: return "unsupported-version";
    case Errc::truncated: return "truncated";
    case Errc::non_finite: return "non-finite";
    case Errc::label_out_of_range: return "label-out-of-range";
    case Errc::unknown_label: return "unknown-label";
    case Errc::degenerate_vector: return "degenerate-vector";
    case Errc::no_positive_pairs: return "no-positive-pairs";
    case Errc::dimension: return "dimension-error";
    case Errc::composition: return "composition-error";
    case Errc::divergence: return "divergence";
    case Errc::configuration: return "configuration-error";
    case Errc::undefined_metric: return "undefined-metric";
    case Errc::degenerate_projection: return "degenerate-projection";
    case Errc::parse: return "parse-error";
  }
  return "unknown-error";
}

}  // namespace embattr
