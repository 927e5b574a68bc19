#pragma once

#include <stdexcept>
#include <string>

namespace rsnet {

/// Base class for every failure the library raises.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define RSNET_ERROR_TYPE(NAME)                                   \
  class NAME : public Error {                                    \
   public:                                                       \
    explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
  }

// Configuration and shape contracts.
RSNET_ERROR_TYPE(ConstraintViolation);
RSNET_ERROR_TYPE(LengthMismatch);
RSNET_ERROR_TYPE(ChannelMismatch);
RSNET_ERROR_TYPE(SpatialMismatch);
RSNET_ERROR_TYPE(TooSmallInput);
RSNET_ERROR_TYPE(DegenerateChannels);

// Dataset ingestion.
RSNET_ERROR_TYPE(MissingFile);
RSNET_ERROR_TYPE(SchemaError);
RSNET_ERROR_TYPE(EmptyManifest);
RSNET_ERROR_TYPE(NegativeCount);
RSNET_ERROR_TYPE(OutOfBounds);
RSNET_ERROR_TYPE(RatioError);
RSNET_ERROR_TYPE(UnknownClass);
RSNET_ERROR_TYPE(IoError);

// Training and persistence.
RSNET_ERROR_TYPE(DataError);
RSNET_ERROR_TYPE(DivergenceError);
RSNET_ERROR_TYPE(VersionMismatch);
RSNET_ERROR_TYPE(CorruptArchive);
RSNET_ERROR_TYPE(MissingProperty);

// Classification.
RSNET_ERROR_TYPE(SingleClassError);
RSNET_ERROR_TYPE(LabelOutOfRange);
RSNET_ERROR_TYPE(EmptyMatrix);

#undef RSNET_ERROR_TYPE

}  // namespace rsnet
