#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rbsde {

enum class ErrorKind {
  IntensityTooLarge,
  SizeOverflow,
  LayerMismatch,
  SingularSystem,
  DensityNotPositive,
  NonFiniteState,
  UnknownForm,
  ImplicitSolveDiverged,
  TooLargeToEnumerate,
  SeparationViolated,
  MonotonicityViolated,
  NoContraction,
  SingularSigma,
  InvalidArgument,
  ConfigParse,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the solvers carries a kind so callers (the CLI
/// in particular) can map it to an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rbsde
