#pragma once

#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace afpilot {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr Complex kJ{0.0, 1.0};

/// exp(j * phase)
inline Complex cis(double phase) { return {std::cos(phase), std::sin(phase)}; }

// Error taxonomy. The CLI maps these onto exit codes 2, 3 and 4.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Domain { tf, af };

inline const char* to_string(Domain d) { return d == Domain::tf ? "tf" : "af"; }

/// Relative Frobenius distance ||a - b|| / ||b||; falls back to ||a - b|| when b == 0.
template <typename A, typename B>
double relative_error(const A& a, const B& b) {
  const double ref = b.norm();
  const double diff = (a - b).norm();
  return ref > 0.0 ? diff / ref : diff;
}

}  // namespace afpilot
