#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace probsheet {

// Root of every error raised by the engine. Callers that only need a message
// can catch this; the CLI maps the subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LexError : public Error {
 public:
  LexError(std::size_t offset, const std::string& what)
      : Error(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t offset, std::vector<std::string> expected,
             const std::string& what)
      : Error(what), offset_(offset), expected_(std::move(expected)) {}
  std::size_t offset() const noexcept { return offset_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
};

class ArityError : public Error {
 public:
  using Error::Error;
};

class ActualDatumError : public Error {
 public:
  using Error::Error;
};

class DanglingRefError : public Error {
 public:
  using Error::Error;
};

class CycleError : public Error {
 public:
  CycleError(std::vector<std::string> cycle, const std::string& what)
      : Error(what), cycle_(std::move(cycle)) {}
  // Cell names along the witness cycle; first and last entries coincide.
  const std::vector<std::string>& cycle() const noexcept { return cycle_; }

 private:
  std::vector<std::string> cycle_;
};

class ParamError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SupportError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class DuplicateNameError : public Error {
 public:
  using Error::Error;
};

class ReservedNameError : public Error {
 public:
  using Error::Error;
};

class UnknownFunctionError : public Error {
 public:
  using Error::Error;
};

class NoRootError : public Error {
 public:
  using Error::Error;
};

class UnboundRefError : public Error {
 public:
  using Error::Error;
};

class AlreadyBoundError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class AllZeroWeightsError : public Error {
 public:
  using Error::Error;
};

class UnboundTargetError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModelError : public Error {
 public:
  using Error::Error;
};

class GradientUnavailableError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by the sheet loader; wraps a lex/parse/arity failure with the
// offending cell name.
class SyntaxError : public Error {
 public:
  SyntaxError(std::string cell, const std::string& what)
      : Error("cell " + cell + ": " + what), cell_(std::move(cell)) {}
  const std::string& cell() const noexcept { return cell_; }

 private:
  std::string cell_;
};

}  // namespace probsheet
