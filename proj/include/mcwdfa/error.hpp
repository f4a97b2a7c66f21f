#pragma once

#include <stdexcept>
#include <string>

namespace mcwdfa {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// A covariance factorization failed even after ridge repair, or every
/// component underflowed for some observation.
class NumericalFailure : public Error {
public:
  NumericalFailure(const std::string& what, int component = -1, long row = -1)
      : Error(what), component_(component), row_(row) {}
  int component() const noexcept { return component_; }
  long row() const noexcept { return row_; }

private:
  int component_;
  long row_;
};

/// A mixture component lost (almost) all of its weight, or its weighted
/// Gram matrix became singular.
class DegenerateComponent : public Error {
public:
  DegenerateComponent(const std::string& what, int component)
      : Error(what), component_(component) {}
  int component() const noexcept { return component_; }

private:
  int component_;
};

class DegenerateSegment : public Error {
public:
  DegenerateSegment(const std::string& what, int component, int variable)
      : Error(what), component_(component), variable_(variable) {}
  int component() const noexcept { return component_; }
  int variable() const noexcept { return variable_; }

private:
  int component_;
  int variable_;
};

/// Every start of a fit (or every cell of a grid) failed.
class FitFailure : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, long line)
      : Error(what), line_(line) {}
  long line() const noexcept { return line_; }

private:
  long line_;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace mcwdfa
