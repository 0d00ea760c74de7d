#pragma once

#include <stdexcept>
#include <string>

namespace oslam {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// geometry
struct NonInvertiblePixel : Error { using Error::Error; };
struct BehindCamera : Error { using Error::Error; };
struct DegenerateInput : Error { using Error::Error; };
struct NotAnEllipse : Error { using Error::Error; };
struct QuadricBehindCamera : Error { using Error::Error; };
struct DegenerateProjection : Error { using Error::Error; };

// estimation
struct InsufficientObservations : Error { using Error::Error; };
struct TriangulationDegenerate : Error { using Error::Error; };

// association
struct DuplicateKey : Error { using Error::Error; };

// semantics / descriptors
struct ZeroVector : Error { using Error::Error; };
struct EmptyInput : Error { using Error::Error; };

// loop closure
struct InsufficientCorrespondences : Error { using Error::Error; };

// pipeline / io
struct LengthMismatch : Error { using Error::Error; };
struct InfeasibleConfig : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IoFailure : Error { using Error::Error; };

}  // namespace oslam
