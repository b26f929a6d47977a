#pragma once

#include <Eigen/Dense>
#include <iostream>
#include <stdexcept>
#include <string>

namespace ldfr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error taxonomy shared across the library. The CLI maps kinds to exit codes.
enum class ErrorKind {
  spec,         // invalid basis/model specification
  domain,       // evaluation point outside the declared domain
  dimension,    // mismatched sizes
  data,         // empty or unusable data
  numerical,    // rank deficiency, degenerate covariance
  convergence,  // iteration limit reached
  lookup,       // unknown subject/group id
  unsupported,  // operation not defined for this configuration (e.g. link)
  schema,       // malformed input file or config
  io,           // filesystem failure
  version       // serialized container version mismatch
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void warn(const std::string& msg) { std::cerr << "[ldfr] warning: " << msg << "\n"; }

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
  bool contains(double x) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(hi - lo));
    return x >= lo - tol && x <= hi + tol;
  }
};

}  // namespace ldfr
