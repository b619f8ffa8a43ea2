#pragma once

#include <algorithm>
#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace embchan {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr cplx kI{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

inline constexpr const char* kVersion = "0.1.0";

/// Which side of the device a lead sits on.
enum class Side { left, right };

std::string_view to_string(Side side);
Side side_from_string(std::string_view text);

/// Bad input: malformed config, violated precondition, inconsistent dimensions.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed to reach its accuracy contract.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Imaginary energies. Point evaluations and sweeps follow the usual defaults;
// transport evaluations use the smallest value at which the surface Green
// function is still solved to full accuracy, so that O(eta) leakage into
// closed channels stays below the channel-sum/trace tolerance.
inline constexpr double kEtaPoint = 1e-8;
inline constexpr double kEtaSweep = 1e-6;
inline constexpr double kEtaTransport = 1e-12;

/// Bound on positive eigenvalues of the anti-Hermitian part of a retarded Sigma.
inline constexpr double kTauPsd = 1e-10;

/// Open-channel threshold: finite eta leaks O(eta) into closed eigenvalues.
inline double default_tau_open(double eta) { return std::max(1e-10, 100.0 * eta); }

/// Largest absolute entry; zero for empty matrices.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Exactly Hermitian copy of an almost-Hermitian matrix.
CMatrix hermitize(const CMatrix& m);

/// Rotate `v` so its largest-magnitude entry is real and positive.
void fix_phase(Eigen::Ref<CVector> v);

/// Fold a transverse momentum into [-pi, pi).
double fold_momentum(double k);

}  // namespace embchan
