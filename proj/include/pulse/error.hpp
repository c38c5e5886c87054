#pragma once

#include <stdexcept>
#include <string>

namespace pulse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid construction parameter (dimension, ridge weight, bandwidth...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed runtime input: wrong length, non-finite entries.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A numerical invariant was lost (e.g. the Gram matrix stopped being SPD).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class EnvironmentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Persistence failure; `field()` names the offending entry when known.
class LoadError : public Error {
 public:
  LoadError(std::string field, const std::string& what)
      : Error("load error [" + field + "]: " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Configuration rejected; `field()` is the dotted path of the bad key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config error [" + field + "]: " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace pulse
