#pragma once

#include <stdexcept>
#include <string>

namespace crfdepth {

// Every error carries the name of the module that raised it so the CLI can
// report "frame <id>: <module>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

// Malformed or incomplete input (missing key, bad byte length, wrong PNG type).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Token-level parse failure; the message carries the line number.
class ParseError : public Error {
 public:
  ParseError(std::string module, const std::string& message, int line)
      : Error(std::move(module), message), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

// Precondition or range violation on an argument.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// The energy system has no unique minimizer.
class SingularSystemError : public Error {
 public:
  SingularSystemError(std::string module, const std::string& message, long node = -1)
      : Error(std::move(module), message), node_(node) {}

  // A node inside the offending component, or -1 when not node specific.
  long node() const noexcept { return node_; }

 private:
  long node_;
};

// The iterative solver stopped without reaching the requested tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(std::string module, const std::string& message, int iterations,
                   double residual)
      : Error(std::move(module), message), iterations_(iterations), residual_(residual) {}

  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace crfdepth
