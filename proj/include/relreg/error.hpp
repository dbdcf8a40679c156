#pragma once

#include <stdexcept>
#include <string>

namespace relreg {

// Caller passed something that violates a documented precondition
// (shape mismatch, out-of-range parameter, malformed distribution).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical kernel could not produce a meaningful result
// (all-zero Gibbs row, non-finite scaling, NaN objective).
class SolverDegenerate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An object was used out of order, e.g. a forward cache replayed against a
// model whose parameters changed since the cache was recorded.
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents. `line` and `field` are 1-based; 0 means unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, std::size_t field,
             const std::string& what)
      : std::runtime_error(format(source, line, field, what)),
        line_(line),
        field_(field) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t field() const noexcept { return field_; }

 private:
  static std::string format(const std::string& source, std::size_t line,
                            std::size_t field, const std::string& what) {
    std::string msg = source;
    if (line > 0) msg += ":" + std::to_string(line);
    if (field > 0) msg += ": field " + std::to_string(field);
    return msg + ": " + what;
  }

  std::size_t line_;
  std::size_t field_;
};

}  // namespace relreg
