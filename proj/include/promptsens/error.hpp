#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace promptsens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `line` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(std::string path, std::size_t line, const std::string& what)
      : Error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        path_(std::move(path)),
        line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class PerturbationError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
  virtual bool retryable() const noexcept { return false; }
};

// Connection failures, timeouts, 5xx/429 responses.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
  bool retryable() const noexcept override { return true; }
};

class BackendRefused : public BackendError {
 public:
  using BackendError::BackendError;
};

class ScoringUnsupported : public BackendError {
 public:
  using BackendError::BackendError;
};

class GradientUnsupported : public BackendError {
 public:
  using BackendError::BackendError;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

}  // namespace promptsens
