#pragma once
// Shared error types, the project scalar, and small constants.

#include <stdexcept>
#include <string>

namespace clt {

// Default scalar for trainers/CLI. Tests and gradient checks always use
// double explicitly; define CLT_SCALAR_FLOAT to run production at 32 bit.
#ifdef CLT_SCALAR_FLOAT
using Real = float;
#else
using Real = double;
#endif

// Floor added inside log() for cross-entropy and KL terms.
inline constexpr double kProbFloor = 1e-12;

// A precondition stated in an operation's contract was violated by the caller.
struct ContractViolation : std::logic_error {
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// Malformed input files, bad configuration values, unusable corpora.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss or gradient.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class RunMode { train, eval };

enum class Direction { long_to_short, short_to_long };

inline const char* to_string(Direction d) {
  return d == Direction::long_to_short ? "long_to_short" : "short_to_long";
}

}  // namespace clt
