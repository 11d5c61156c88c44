#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gridstate {

// Base of every error raised by the library. The CLI maps the category onto
// its exit-code contract.
class Error : public std::runtime_error {
 public:
  enum class Category { Validation, Numerical, Io };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(Category::Validation,
              "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(Category::Validation, what) {}
};

// Malformed network: duplicate ids, missing slack, dangling endpoints,
// disconnected topology.
class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what)
      : Error(Category::Validation, what) {}
};

class InvalidBranchError : public Error {
 public:
  explicit InvalidBranchError(const std::string& what)
      : Error(Category::Validation, what) {}
};

// A measurement or state lookup names a bus/branch that is not available.
class ReferenceError : public Error {
 public:
  explicit ReferenceError(const std::string& what)
      : Error(Category::Validation, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(Category::Validation, what) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what)
      : Error(Category::Validation, what) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double final_mismatch)
      : Error(Category::Numerical, what), final_mismatch_(final_mismatch) {}

  double final_mismatch() const noexcept { return final_mismatch_; }

 private:
  double final_mismatch_;
};

class UnobservableError : public Error {
 public:
  explicit UnobservableError(const std::string& what)
      : Error(Category::Numerical, what) {}
};

class RankError : public Error {
 public:
  explicit RankError(const std::string& what)
      : Error(Category::Numerical, what) {}
};

class OptimizationError : public Error {
 public:
  explicit OptimizationError(const std::string& what)
      : Error(Category::Numerical, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Category::Io, what) {}
};

}  // namespace gridstate
