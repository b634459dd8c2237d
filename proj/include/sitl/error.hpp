#pragma once

#include <stdexcept>
#include <string>

namespace sitl {

/// Base class for every recoverable pipeline failure. `name()` is the stable
/// identifier printed by the CLI on the diagnostic stream.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& what)
      : std::runtime_error(name + ": " + what), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

#define SITL_DEFINE_ERROR(NAME)                           \
  class NAME : public Error {                             \
   public:                                                \
    explicit NAME(const std::string& what = "")           \
        : Error(#NAME, what) {}                           \
  }

SITL_DEFINE_ERROR(SingularHomography);
SITL_DEFINE_ERROR(InvalidSpec);
SITL_DEFINE_ERROR(BehindCamera);
SITL_DEFINE_ERROR(DegeneratePlane);
SITL_DEFINE_ERROR(DegeneratePose);
SITL_DEFINE_ERROR(TooFewFeatures);
SITL_DEFINE_ERROR(NoMatches);
SITL_DEFINE_ERROR(EstimationFailed);
SITL_DEFINE_ERROR(RestorationFailed);
SITL_DEFINE_ERROR(DecompositionFailed);
SITL_DEFINE_ERROR(DegenerateConfiguration);
SITL_DEFINE_ERROR(SessionFailed);
SITL_DEFINE_ERROR(NoEstimate);
SITL_DEFINE_ERROR(DegenerateSet);
SITL_DEFINE_ERROR(NonConvergence);
SITL_DEFINE_ERROR(EmptyInput);
SITL_DEFINE_ERROR(EmptyVolume);
SITL_DEFINE_ERROR(PitchMismatch);
SITL_DEFINE_ERROR(UnknownKind);
SITL_DEFINE_ERROR(IoError);

#undef SITL_DEFINE_ERROR

}  // namespace sitl
