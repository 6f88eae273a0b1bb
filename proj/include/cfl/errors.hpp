#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cfl {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class CyclicGraph : public Error {
public:
  CyclicGraph(std::vector<std::string> cycle, const std::string& detail)
      : Error("cyclic graph: " + detail), cycle_(std::move(cycle)) {}
  const std::vector<std::string>& cycle() const { return cycle_; }

private:
  std::vector<std::string> cycle_;
};

class UnknownReference : public Error {
public:
  explicit UnknownReference(const std::string& name)
      : Error("unknown reference: " + name), name_(name) {}
  const std::string& name() const { return name_; }

private:
  std::string name_;
};

class NotEnumerable : public Error {
public:
  explicit NotEnumerable(const std::string& what) : Error("not enumerable: " + what) {}
};

class EngineInapplicable : public Error {
public:
  explicit EngineInapplicable(const std::string& what) : Error("engine inapplicable: " + what) {}
};

class ZeroProbabilityEvidence : public Error {
public:
  explicit ZeroProbabilityEvidence(const std::string& what)
      : Error("zero-probability evidence: " + what) {}
};

class EmptyAcceptance : public Error {
public:
  explicit EmptyAcceptance(const std::string& what) : Error("empty acceptance: " + what) {}
};

class MissingTableEntry : public Error {
public:
  explicit MissingTableEntry(const std::string& what) : Error("missing table entry: " + what) {}
};

class SpaceMismatch : public Error {
public:
  explicit SpaceMismatch(const std::string& what) : Error("noise-space mismatch: " + what) {}
};

class DimensionMismatch : public Error {
public:
  explicit DimensionMismatch(const std::string& what) : Error("dimension mismatch: " + what) {}
};

class PositivityViolation : public Error {
public:
  explicit PositivityViolation(const std::string& what) : Error("positivity violation: " + what) {}
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, const std::string& location)
      : Error("parse error at " + location + ": " + what), location_(location) {}
  const std::string& location() const { return location_; }

private:
  std::string location_;
};

class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& what) : Error("validation error: " + what) {}
};

}  // namespace cfl
