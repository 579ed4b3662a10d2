#ifndef DBR_CORE_HPP
#define DBR_CORE_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace dbr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error hierarchy. The CLI maps these onto exit codes: config -> 2,
// data -> 3, numerical -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

// Rank-deficient basis detected during orthonormalization or KL init.
struct RankDeficiencyError : NumericalError {
  int column = -1;
  explicit RankDeficiencyError(const std::string& msg, int col = -1)
      : NumericalError(msg), column(col) {}
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError("dimension mismatch: " + what);
}

}  // namespace dbr

#endif  // DBR_CORE_HPP
