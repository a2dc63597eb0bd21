#pragma once

#include <stdexcept>
#include <string>

namespace gfts {

/// Base class for every error raised by the library. `kind()` is a stable
/// short tag used by the CLI for diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define GFTS_DEFINE_ERROR(Name, tag)                                 \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(tag, what) {}     \
  };

GFTS_DEFINE_ERROR(DimensionError, "dimension")
GFTS_DEFINE_ERROR(InsufficientDataError, "insufficient-data")
GFTS_DEFINE_ERROR(DegenerateWeightsError, "degenerate-weights")
GFTS_DEFINE_ERROR(IncompleteDataError, "incomplete-data")
GFTS_DEFINE_ERROR(InvalidInputError, "invalid-input")
GFTS_DEFINE_ERROR(BracketingError, "bracketing")
GFTS_DEFINE_ERROR(DegenerateError, "degenerate")
GFTS_DEFINE_ERROR(HorizonError, "horizon")
GFTS_DEFINE_ERROR(SingularDesignError, "singular-design")
GFTS_DEFINE_ERROR(ValidationError, "validation")
GFTS_DEFINE_ERROR(ReferenceError, "reference")
GFTS_DEFINE_ERROR(ParseError, "parse")
GFTS_DEFINE_ERROR(StructuralError, "structural")

#undef GFTS_DEFINE_ERROR

}  // namespace gfts
