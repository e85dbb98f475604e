#pragma once

#include <stdexcept>
#include <string>

namespace docnmt {

/// Tensor/parameter shapes that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input files (corpora, vocabularies, checkpoints, vectors).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation invoked in the wrong state, e.g. a second backward pass.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite loss or values during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace docnmt
