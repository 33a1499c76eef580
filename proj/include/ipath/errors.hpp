#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ipath {

// Exit codes used by the command-line tool for each error family.
enum class ExitCode : int {
  ok = 0,
  failure = 1,
  config = 2,
  data_integrity = 3,
  divergence = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::failure; }
};

// Argument outside the operation's domain (out-of-bounds point, bad stage, empty anchors).
class DomainError : public Error {
 public:
  using Error::Error;
};

class LengthError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::config; }
};

class IntegrityError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::data_integrity; }
};

// Malformed or truncated file. `record` is the index of the offending record,
// `last_good` the last one that parsed (-1 if none did).
class LoadError : public IntegrityError {
 public:
  LoadError(const std::string& what, long record, long last_good)
      : IntegrityError(what), record_(record), last_good_(last_good) {}
  long record() const noexcept { return record_; }
  long last_good() const noexcept { return last_good_; }

 private:
  long record_;
  long last_good_;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::divergence; }
};

}  // namespace ipath
