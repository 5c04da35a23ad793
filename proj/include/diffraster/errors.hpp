#pragma once

#include <stdexcept>
#include <string>

namespace diffraster {

// Base class for every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define DIFFRASTER_DEFINE_ERROR(Name) \
  struct Name : Error {               \
    using Error::Error;               \
  }

// Mesh construction and geometry.
DIFFRASTER_DEFINE_ERROR(IndexOutOfRange);
DIFFRASTER_DEFINE_ERROR(AttributeLengthMismatch);
DIFFRASTER_DEFINE_ERROR(DegenerateFace);
DIFFRASTER_DEFINE_ERROR(InvalidAttribute);
DIFFRASTER_DEFINE_ERROR(LevelOutOfRange);
DIFFRASTER_DEFINE_ERROR(IsolatedVertex);

// Camera and projection.
DIFFRASTER_DEFINE_ERROR(DegenerateCamera);

// Rasterization.
DIFFRASTER_DEFINE_ERROR(DegenerateTriangle);
DIFFRASTER_DEFINE_ERROR(EmptyFaceList);
DIFFRASTER_DEFINE_ERROR(ZeroResolution);

// Generic shape / tape plumbing.
DIFFRASTER_DEFINE_ERROR(ShapeMismatch);
DIFFRASTER_DEFINE_ERROR(TapeMismatch);
DIFFRASTER_DEFINE_ERROR(WrongSpecVariant);

// Losses and optimization.
DIFFRASTER_DEFINE_ERROR(EmptyUnion);
DIFFRASTER_DEFINE_ERROR(NonFiniteComponent);
DIFFRASTER_DEFINE_ERROR(NonFiniteGradient);
DIFFRASTER_DEFINE_ERROR(NonFiniteLoss);

// File I/O and configuration.
DIFFRASTER_DEFINE_ERROR(ParseError);
DIFFRASTER_DEFINE_ERROR(IoError);
DIFFRASTER_DEFINE_ERROR(DecodeError);
DIFFRASTER_DEFINE_ERROR(UnsupportedColorType);
DIFFRASTER_DEFINE_ERROR(SchemaError);

#undef DIFFRASTER_DEFINE_ERROR

}  // namespace diffraster
