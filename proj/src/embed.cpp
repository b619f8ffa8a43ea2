#include "embchan/embed.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace embchan {

namespace {

constexpr int kNewtonSteps = 60;
// Badly scaled but exact inverses occur near Sigma poles; the fixed-point
// residual, not the condition number, decides acceptance.
constexpr double kRcondFloor = 1e-300;

bool finite(const CMatrix& m) { return m.allFinite(); }

CMatrix inverse_checked(const CMatrix& m, bool& ok) {
  Eigen::PartialPivLU<CMatrix> lu(m);
  ok = lu.rcond() > kRcondFloor;
  return lu.inverse();
}

double relative_residual(const HamiltonianBlocks& b, cplx z, const CMatrix& sigma) {
  const Index n = b.dim();
  bool ok = true;
  const CMatrix g = inverse_checked(z * CMatrix::Identity(n, n) - b.h00 - sigma, ok);
  if (!ok || !finite(g)) return std::numeric_limits<double>::infinity();
  const CMatrix f = sigma - b.h01 * g * b.h10();
  return max_abs(f) / std::max(1.0, max_abs(sigma));
}

// Solves X - A X B = C by Schur-decomposing A and B (Bartels-Stewart style).
bool solve_stein(const CMatrix& a, const CMatrix& b, const CMatrix& c, CMatrix& x) {
  const Index n = a.rows();
  Eigen::ComplexSchur<CMatrix> sa(a), sb(b);
  if (sa.info() != Eigen::Success || sb.info() != Eigen::Success) return false;
  const CMatrix& u = sa.matrixU();
  const CMatrix& s = sa.matrixT();
  const CMatrix& v = sb.matrixU();
  const CMatrix& t = sb.matrixT();
  const CMatrix rhs = u.adjoint() * c * v;
  CMatrix y = CMatrix::Zero(n, n);
  const CMatrix eye = CMatrix::Identity(n, n);
  for (Index j = 0; j < n; ++j) {
    CVector col = rhs.col(j);
    if (j > 0) col += s * (y.leftCols(j) * t.col(j).head(j));
    const CMatrix m = eye - t(j, j) * s;
    for (Index i = 0; i < n; ++i)
      if (std::abs(m(i, i)) < 1e-14) return false;
    y.col(j) = m.triangularView<Eigen::Upper>().solve(col);
  }
  x = u * y * v.adjoint();
  return finite(x);
}

// Newton iteration on F(S) = S - h01 (z - h00 - S)^-1 h10.
bool newton_polish(const HamiltonianBlocks& b, cplx z, CMatrix& sigma, double tol, int& steps) {
  const Index n = b.dim();
  const CMatrix h10 = b.h10();
  const CMatrix zh = z * CMatrix::Identity(n, n) - b.h00;
  double best = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kNewtonSteps; ++it) {
    bool ok = true;
    const CMatrix g = inverse_checked(zh - sigma, ok);
    if (!ok || !finite(g)) return false;
    const CMatrix f = sigma - b.h01 * g * h10;
    const double res = max_abs(f) / std::max(1.0, max_abs(sigma));
    ++steps;
    // Keep going a little past tol to land on the rounding floor.
    if (res <= tol * 1e-3 || (res <= tol && res >= 0.5 * best)) return true;
    if (it > 8 && res > 0.9 * best) return res <= tol;
    best = std::min(best, res);
    CMatrix d;
    if (!solve_stein(b.h01 * g, g * h10, -f, d)) return res <= tol;
    sigma += d;
  }
  return relative_residual(b, z, sigma) <= tol;
}

// Lopez Sancho layer doubling; returns Sigma on the interface layer.
CMatrix decimate(const HamiltonianBlocks& b, cplx z, int max_iter, int& steps) {
  const Index n = b.dim();
  const CMatrix eye = CMatrix::Identity(n, n);
  CMatrix eps_s = b.h00, eps = b.h00, alpha = b.h01, beta = b.h10();
  for (int it = 0; it < max_iter; ++it) {
    ++steps;
    bool ok = true;
    const CMatrix g = inverse_checked(z * eye - eps, ok);
    if (!ok || !finite(g)) break;
    const CMatrix ag = alpha * g, bg = beta * g;
    eps_s += ag * beta;
    eps += ag * beta + bg * alpha;
    alpha = ag * alpha;
    beta = bg * beta;
    if (!finite(eps) || max_abs(alpha) + max_abs(beta) < 1e-300) break;
    if (max_abs(alpha) + max_abs(beta) < 1e-15 * std::max(1.0, max_abs(eps))) break;
  }
  bool ok = true;
  const CMatrix g = inverse_checked(z * eye - eps_s, ok);
  return b.h01 * g * b.h10();
}

// The same lead viewed with L layers per period; its interface Sigma maps
// back by keeping the block that touches layer 0.
CMatrix decimate_supercell(const HamiltonianBlocks& b, cplx z, int layers, int max_iter,
                           int& steps) {
  const Index n = b.dim(), m = n * layers;
  HamiltonianBlocks big;
  big.h00 = CMatrix::Zero(m, m);
  big.h01 = CMatrix::Zero(m, m);
  for (int i = 0; i < layers; ++i) {
    big.h00.block(i * n, i * n, n, n) = b.h00;
    if (i + 1 < layers) {
      big.h00.block(i * n, (i + 1) * n, n, n) = b.h01;
      big.h00.block((i + 1) * n, i * n, n, n) = b.h10();
    }
  }
  big.h01.block((layers - 1) * n, 0, n, n) = b.h01;
  // Sigma of the big lead on a big interface layer; the original interface
  // couples only to the first sub-layer through h01.
  const Index mm = m;
  const CMatrix sigma_big = decimate(big, z, max_iter, steps);
  bool ok = true;
  const CMatrix g_big =
      inverse_checked(z * CMatrix::Identity(mm, mm) - big.h00 - sigma_big, ok);
  return b.h01 * g_big.topLeftCorner(n, n) * b.h10();
}

bool retarded(const HamiltonianBlocks& b, cplx z, const CMatrix& sigma) {
  const CMatrix im = (sigma - sigma.adjoint()) / (2.0 * kI);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(im), Eigen::EigenvaluesOnly);
  if (es.eigenvalues().maxCoeff() > kTauPsd * std::max(1.0, max_abs(sigma))) return false;
  // Decaying branch: the layer-to-layer transfer g h10 is contracting.
  const Index n = b.dim();
  bool ok = true;
  const CMatrix g = inverse_checked(z * CMatrix::Identity(n, n) - b.h00 - sigma, ok);
  if (!ok) return false;
  Eigen::ComplexEigenSolver<CMatrix> ces(g * b.h10(), false);
  return ces.eigenvalues().cwiseAbs().maxCoeff() <= 1.0 + 1e-6;
}

}  // namespace

SurfaceGreenResult solve_surface_green(const HamiltonianBlocks& blocks, double e, double eta,
                                       const SurfaceGreenOptions& options) {
  if (!(eta > 0.0)) throw ValidationError("surface_green: eta must be positive");
  if (!std::isfinite(e)) throw ValidationError("surface_green: energy must be finite");
  validate_blocks(blocks);
  const Index n = blocks.dim();
  const cplx z(e, eta);
  SurfaceGreenResult out;
  double last = std::numeric_limits<double>::infinity();

  auto accept = [&](CMatrix sigma, const char* method) {
    if (!finite(sigma)) return false;
    if (!newton_polish(blocks, z, sigma, options.tol, out.iterations)) {
      last = std::min(last, relative_residual(blocks, z, sigma));
      return false;
    }
    const double res = relative_residual(blocks, z, sigma);
    last = std::min(last, res);
    if (!(res <= options.tol) || !retarded(blocks, z, sigma)) return false;
    bool ok = true;
    out.g = inverse_checked(z * CMatrix::Identity(n, n) - blocks.h00 - sigma, ok);
    out.sigma = std::move(sigma);
    out.residual = res;
    out.method = method;
    return true;
  };

  if (accept(decimate(blocks, z, options.max_iter, out.iterations), "decimation")) return out;
  for (int layers = 2; layers <= 4; ++layers)
    if (accept(decimate_supercell(blocks, z, layers, options.max_iter, out.iterations),
               "supercell decimation"))
      return out;

  // Continuation in eta: large eta is easy, then follow the branch down.
  double eta_c = std::max(1e-2, eta);
  CMatrix sigma = decimate(blocks, cplx(e, eta_c), options.max_iter, out.iterations);
  bool tracking = finite(sigma);
  while (tracking && eta_c > eta) {
    eta_c = std::max(eta, eta_c * 0.1);
    int ignored = 0;
    tracking = newton_polish(blocks, cplx(e, eta_c), sigma, options.tol, ignored);
    out.iterations += ignored;
  }
  if (tracking && accept(sigma, "eta continuation")) return out;

  char msg[200];
  std::snprintf(msg, sizeof msg,
                "surface Green function did not converge at E=%.17g, eta=%.3g "
                "(last residual %.3e after %d iterations)",
                e, eta, last, out.iterations);
  throw NumericalError(msg);
}

CMatrix surface_green(const HamiltonianBlocks& blocks, double e, double eta) {
  return solve_surface_green(blocks, e, eta).g;
}

EmbeddingPotential embedding_potential(const HamiltonianBlocks& blocks, double e, double eta,
                                       Side side) {
  EmbeddingPotential out;
  const auto solved = solve_surface_green(blocks, e, eta);
  out.sigma = solved.sigma;
  out.energy = e;
  out.eta = eta;
  // Differentiating the fixed point gives dS - (h01 g) dS (g h10) = -h01 g g h10.
  const CMatrix h01g = blocks.h01 * solved.g;
  const CMatrix gh10 = solved.g * blocks.h10();
  CMatrix ds;
  // A closed channel's eigenvalue is, to first order, eta times the Hermitian
  // part of dS/dE projected on it.
  if (solve_stein(h01g, gh10, -(h01g * gh10), ds)) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(ds), Eigen::EigenvaluesOnly);
    out.leakage = eta * es.eigenvalues().cwiseAbs().maxCoeff();
  }
  out.side = side;
  out.k = blocks.k;
  return out;
}

ImSigma anti_hermitian_part(const EmbeddingPotential& sig) {
  ImSigma out;
  out.matrix = hermitize((sig.sigma - sig.sigma.adjoint()) / (2.0 * kI));
  out.energy = sig.energy;
  out.leakage = sig.leakage;
  out.side = sig.side;
  out.k = sig.k;
  return out;
}

cplx chain_sigma_closed_form(double e, double eta, double t, double eps) {
  const cplx w = cplx(e, eta) - eps;
  const cplx root = std::sqrt(w * w - 4.0 * t * t);
  const cplx s1 = 0.5 * (w - root), s2 = 0.5 * (w + root);
  // The two roots multiply to t^2; the retarded one is the smaller.
  return std::abs(s1) <= std::abs(s2) ? s1 : s2;
}

}  // namespace embchan
