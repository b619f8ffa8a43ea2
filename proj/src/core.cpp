#include "embchan/core.hpp"

#include <cmath>

namespace embchan {

std::string_view to_string(Side side) { return side == Side::left ? "left" : "right"; }

Side side_from_string(std::string_view text) {
  if (text == "left" || text == "l") return Side::left;
  if (text == "right" || text == "r") return Side::right;
  throw ValidationError("unknown side '" + std::string(text) + "' (expected left or right)");
}

CMatrix hermitize(const CMatrix& m) {
  CMatrix out = 0.5 * (m + m.adjoint());
  for (Index i = 0; i < out.rows(); ++i) {
    out(i, i) = cplx(out(i, i).real(), 0.0);
    for (Index j = i + 1; j < out.cols(); ++j) out(j, i) = std::conj(out(i, j));
  }
  return out;
}

void fix_phase(Eigen::Ref<CVector> v) {
  if (v.size() == 0) return;
  const double largest = v.cwiseAbs().maxCoeff();
  if (largest == 0.0) return;
  // First entry within a relative hair of the maximum, so ties break by index.
  Index pick = 0;
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) >= largest * (1.0 - 1e-9)) {
      pick = i;
      break;
    }
  }
  const cplx phase = std::conj(v(pick)) / std::abs(v(pick));
  v *= phase;
  v(pick) = cplx(v(pick).real(), 0.0);
}

double fold_momentum(double k) {
  const double two_pi = 2.0 * kPi;
  double folded = k - two_pi * std::floor((k + kPi) / two_pi);
  if (folded >= kPi) folded -= two_pi;
  if (folded < -kPi) folded += two_pi;
  return folded;
}

}  // namespace embchan
