// errors.hpp - exception types shared by all cqed modules.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cqed {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (rate <= 0,
// non-unit vector, position outside a field map, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// One or more type invariants violated. Carries every violation, not just
// the first one found.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations);

  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// Measured inputs admit no physical solution (negative rates, efficiencies
// outside [0,1], singular inversion).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Rate set whose generator spectrum does not fit the two-exponential g2 form.
class UnphysicalError : public Error {
 public:
  using Error::Error;
};

// Normal equations of a fit are singular. `direction()` names the
// unidentifiable parameter combination.
class RankDeficientError : public Error {
 public:
  RankDeficientError(const std::string& what, std::string direction)
      : Error(what), direction_(std::move(direction)) {}

  const std::string& direction() const { return direction_; }

 private:
  std::string direction_;
};

// Malformed input file. `line()` is 1-based, 0 when not line specific.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& msg);

  std::size_t line() const { return line_; }
  const std::string& file() const { return file_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace cqed
