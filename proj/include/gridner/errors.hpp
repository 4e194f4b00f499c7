#pragma once

#include <stdexcept>
#include <string>

namespace gridner {

// Base class for all library errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (bad JSON, bad TSV, bad config). Carries "source:line".
struct parse_error : error {
    parse_error(const std::string& source, std::size_t line, const std::string& reason)
        : error(source + ":" + std::to_string(line) + ": " + reason),
          line_number(line) {}
    std::size_t line_number;
};

// Well-formed input that violates a domain invariant (bad span indices,
// duplicate mentions, unresolvable label conflicts, misaligned ids).
struct validation_error : error {
    using error::error;
};

// Path enumeration exceeded the per-anchor cap on a pathological grid.
struct decode_error : error {
    using error::error;
};

// Tensor shape disagreement or other numeric-kernel misuse.
struct shape_error : error {
    using error::error;
};

// Non-finite loss or other runtime numeric failure.
struct numeric_error : error {
    using error::error;
};

}  // namespace gridner
