#pragma once

#include <stdexcept>
#include <string>

namespace brar {

/// Malformed or inconsistent input data (corpus, vectors, model files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged (NaN/Inf loss or parameters).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace brar
