#pragma once

#include <stdexcept>
#include <string>

namespace mmsev {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MMSEV_DEFINE_ERROR(Name)        \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

MMSEV_DEFINE_ERROR(ShapeError);
MMSEV_DEFINE_ERROR(ParseError);
MMSEV_DEFINE_ERROR(FormatError);
MMSEV_DEFINE_ERROR(ParameterError);
MMSEV_DEFINE_ERROR(DeterminismError);
MMSEV_DEFINE_ERROR(SelectionError);
MMSEV_DEFINE_ERROR(LookupError);
MMSEV_DEFINE_ERROR(LabelError);
MMSEV_DEFINE_ERROR(DomainError);
MMSEV_DEFINE_ERROR(ResamplingError);
MMSEV_DEFINE_ERROR(SplitError);
MMSEV_DEFINE_ERROR(InputError);
MMSEV_DEFINE_ERROR(CompatibilityError);
MMSEV_DEFINE_ERROR(DivergenceError);
MMSEV_DEFINE_ERROR(ConfigError);

#undef MMSEV_DEFINE_ERROR

}  // namespace mmsev
