#pragma once

#include <stdexcept>
#include <string>

namespace tabadv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Schema file is malformed or inconsistent with a dataset header.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Dataset content cannot be used (empty after filtering, unreadable file).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Train/test split cannot satisfy its preconditions.
class SplitError : public Error {
 public:
  using Error::Error;
};

/// A row value cannot be mapped into encoded space.
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a documented precondition (dimension mismatch, bad kind).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace tabadv
