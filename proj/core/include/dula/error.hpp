#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dula {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidTopology : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class InvalidSchedule : public Error {
 public:
  using Error::Error;
};

class NumericInputError : public Error {
 public:
  using Error::Error;
};

/// A bound formula is undefined for the supplied parameters (e.g. constant beta).
class BoundUnavailable : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A sampler produced a non-finite coordinate.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t agent, std::size_t iteration)
      : Error("non-finite state at agent " + std::to_string(agent) + ", iteration " +
              std::to_string(iteration)),
        agent_(agent),
        iteration_(iteration) {}

  std::size_t agent() const noexcept { return agent_; }
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t agent_;
  std::size_t iteration_;
};

}  // namespace dula
