#pragma once

#include <stdexcept>
#include <string>

namespace emix {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- data / design errors ----
struct ParseError : Error { using Error::Error; };
struct DuplicateOccasion : Error { using Error::Error; };
struct RaggedRow : Error { using Error::Error; };
struct UnknownVariable : Error { using Error::Error; };
struct LevelNotObserved : Error { using Error::Error; };

// ---- model / numeric errors ----
struct DimensionMismatch : Error { using Error::Error; };
struct NonFiniteVariance : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };

// ---- inference errors ----
struct SingularHessian : Error { using Error::Error; };
struct NonConvergence : Error { using Error::Error; };
struct DivergedChain : Error { using Error::Error; };
struct NonFiniteTarget : Error { using Error::Error; };
struct InsufficientDraws : Error { using Error::Error; };

// ---- imputation errors ----
struct NoMissingCells : Error { using Error::Error; };
struct MissingCovariateInMeanModel : Error { using Error::Error; };
struct CyclicDependency : Error { using Error::Error; };
struct NonAscendingCutoffs : Error { using Error::Error; };

// ---- simulation / evaluation errors ----
struct InvalidConfig : Error { using Error::Error; };
struct NoBracket : Error { using Error::Error; };
struct EmptyMask : Error { using Error::Error; };
struct MissingInterval : Error { using Error::Error; };

} // namespace emix
