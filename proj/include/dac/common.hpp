#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace dac {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error taxonomy. The CLI maps these onto process exit codes:
//   ConfigError/ContractError/CapacityError -> 2,
//   AssumptionError (and MixingError)       -> 3,
//   IoError                                 -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Violated precondition of an operation (bad caller input).
struct ContractError : Error {
  using Error::Error;
};

struct TopologyError : Error {
  using Error::Error;
};

// Problem size exceeds a tabular/enumeration cap.
struct CapacityError : Error {
  using Error::Error;
};

// A runtime validator detected a violated model assumption.
struct AssumptionError : Error {
  using Error::Error;
};

// Power iteration failed to mix within the iteration cap.
struct MixingError : AssumptionError {
  using AssumptionError::AssumptionError;
};

struct IoError : Error {
  using Error::Error;
};

// Round-trippable decimal rendering; used for every floating-point value
// that lands in an output file so that reruns are byte-identical.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double sq(double x) { return x * x; }

}  // namespace dac
