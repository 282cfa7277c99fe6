#pragma once

#include <stdexcept>
#include <string>

namespace tridec {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TRIDEC_ERROR_TYPE(NAME)      \
  class NAME : public Error {        \
   public:                           \
    using Error::Error;              \
  };

TRIDEC_ERROR_TYPE(ShapeError)          // incompatible tensor shapes, names the op
TRIDEC_ERROR_TYPE(InvalidDimension)    // zero or negative dimension size
TRIDEC_ERROR_TYPE(NonScalarLoss)       // backward() on a non-scalar node
TRIDEC_ERROR_TYPE(TapeReuse)           // second backward pass on a consumed tape
TRIDEC_ERROR_TYPE(NonFiniteValue)      // NaN/Inf where a finite value is required
TRIDEC_ERROR_TYPE(NonFiniteGradient)   // NaN gradient fed to the optimizer
TRIDEC_ERROR_TYPE(NonFiniteLoss)       // NaN/Inf loss term, names the term
TRIDEC_ERROR_TYPE(FormatError)         // bad IDX magic or malformed file
TRIDEC_ERROR_TYPE(TruncatedFile)       // IDX payload shorter than its header claims
TRIDEC_ERROR_TYPE(LabelMismatch)       // label count differs from image count
TRIDEC_ERROR_TYPE(DegenerateDataset)   // zero pixel variance, cannot normalize
TRIDEC_ERROR_TYPE(InvalidGeometry)     // image too small for the requested layout
TRIDEC_ERROR_TYPE(LabelsRequired)      // operation needs ground-truth labels
TRIDEC_ERROR_TYPE(DegenerateEmbedding) // fewer distinct embeddings than clusters
TRIDEC_ERROR_TYPE(LengthMismatch)      // paired sequences of different length
TRIDEC_ERROR_TYPE(TrainingDiverged)    // non-finite loss during training
TRIDEC_ERROR_TYPE(ConfigError)         // invalid or unknown configuration
TRIDEC_ERROR_TYPE(IoError)             // filesystem failure, names the path

#undef TRIDEC_ERROR_TYPE

/// Thrown when the negative-selection loop exhausts its try budget. Carries
/// the best (maximum-distance) candidate so the caller can fall back to it.
class NegativeNotFound : public Error {
 public:
  NegativeNotFound(const std::string& what, int best_index, double best_distance)
      : Error(what), best_index(best_index), best_distance(best_distance) {}

  int best_index;
  double best_distance;
};

}  // namespace tridec
