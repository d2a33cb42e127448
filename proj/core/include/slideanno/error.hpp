#pragma once

#include <stdexcept>
#include <string>

namespace slideanno {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or unparsable on-disk data (manifest, tile, database).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Data parsed fine but violates a structural rule.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Index or coordinate outside its valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// Lookup of an id that does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

class UndefinedKappaError : public Error {
 public:
  using Error::Error;
};

}  // namespace slideanno
