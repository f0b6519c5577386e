#pragma once

#include <stdexcept>
#include <string>

namespace mcycle {

// Thrown when the post-update filter mass underflows to zero: the data are
// impossible under the model (e.g. consecutive onsets the increment
// distribution cannot produce, or an observation with vanishing likelihood).
// Carries the 1-based day index so callers can report where.
class ZeroLikelihoodError : public std::runtime_error {
 public:
  ZeroLikelihoodError(int day, const std::string& what)
      : std::runtime_error(what), day_(day) {}
  int day() const { return day_; }

 private:
  int day_;
};

// Input-file problems (exit code 2 at the CLI).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A cycle that fails a preprocessing precondition (dropped, not fatal).
class NotApplicableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Simulation exceeded the per-cycle day cap (pathological parameters).
class SafetyCapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Internal invariant violation (exit code 4 at the CLI).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mcycle
