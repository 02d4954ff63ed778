//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_ERRORS_HPP
#define TRISEC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace trisec {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not line up for the requested operation.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// A file (manifest, weight blob, image) is malformed or unsupported.
class FormatError : public Error {
public:
  using Error::Error;
};

/// A network parses but violates a structural invariant.
class ModelValidationError : public Error {
public:
  using Error::Error;
};

/// An image has zero variance where a correlation is requested.
class DegenerateImageError : public Error {
public:
  using Error::Error;
};

/// The clean image is already classified as the requested target.
class AlreadyTargetClassError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// An attack or optimizer was configured with out-of-range settings.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// A score or intermediate value left its mathematically valid range.
class NumericError : public Error {
public:
  using Error::Error;
};

} // namespace trisec

#endif // TRISEC_ERRORS_HPP
