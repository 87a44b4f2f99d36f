#pragma once

#include <stdexcept>
#include <string>

namespace roadseg {

// Base of every error the toolkit throws on purpose. The CLI maps
// ConfigError to exit code 1 and everything else to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ROADSEG_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

ROADSEG_DEFINE_ERROR(FormatError);
ROADSEG_DEFINE_ERROR(ShapeError);
ROADSEG_DEFINE_ERROR(ParameterError);
ROADSEG_DEFINE_ERROR(DomainError);
ROADSEG_DEFINE_ERROR(DegenerateInputError);
ROADSEG_DEFINE_ERROR(ManifestError);
ROADSEG_DEFINE_ERROR(EmptyDatasetError);
ROADSEG_DEFINE_ERROR(SplitError);
ROADSEG_DEFINE_ERROR(IoError);
ROADSEG_DEFINE_ERROR(ConsistencyError);
ROADSEG_DEFINE_ERROR(ConfigError);
ROADSEG_DEFINE_ERROR(CheckpointError);
ROADSEG_DEFINE_ERROR(WeightAcquisitionError);
ROADSEG_DEFINE_ERROR(DivergenceError);

#undef ROADSEG_DEFINE_ERROR

}  // namespace roadseg
