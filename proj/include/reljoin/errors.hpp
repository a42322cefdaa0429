#pragma once

#include <stdexcept>
#include <string>

namespace reljoin {

// Input documents that do not parse or do not match the expected schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that violates a domain invariant (e.g. selectivity > 1).
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingStats : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ZeroCardinality : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A join hint names a method that the join type, condition or memory budget rules out.
class InfeasibleHint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A hash build exceeded the per-task memory budget during execution.
class OutOfBudget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnboundSource : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ReoptimizationConflict : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace reljoin
