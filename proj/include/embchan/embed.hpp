#pragma once

// Surface Green functions and embedding potentials of semi-infinite leads.
//
// In the lead frame (see model.hpp) the surface Green function g of layers
// 1, 2, ... satisfies g = (z - h00 - h01 g h10)^-1 with z = E + i*eta, and the
// embedding potential acting on the interface layer 0 is Sigma = h01 g h10.
// The anti-Hermitian part (Sigma - Sigma^dagger)/2i is negative
// semi-definite for the retarded branch and its quadratic form is the flux
// leaving the interface into the lead.

#include <optional>
#include <string>

#include "embchan/core.hpp"
#include "embchan/model.hpp"

namespace embchan {

struct SurfaceGreenOptions {
  int max_iter = 200;  // layer doublings per decimation attempt
  double tol = 1e-10;  // fixed-point residual, relative to max(1, |Sigma|)
};

struct SurfaceGreenResult {
  CMatrix g;
  CMatrix sigma;
  double residual = 0.0;
  int iterations = 0;
  std::string method;  // which route produced the accepted solution
};

/// Retarded surface Green function, decimation followed by Newton refinement.
/// Throws NumericalError (with the last residual) when no route converges.
SurfaceGreenResult solve_surface_green(const HamiltonianBlocks& blocks, double e, double eta,
                                       const SurfaceGreenOptions& options = {});

CMatrix surface_green(const HamiltonianBlocks& blocks, double e, double eta);

struct EmbeddingPotential {
  CMatrix sigma;
  double energy = 0.0;
  double eta = 0.0;
  // eta * |Herm dSigma/dE| (spectral norm): to first order in eta, a bound on
  // the eigenvalues that closed channels pick up. Zero when the derivative
  // cannot be formed.
  double leakage = 0.0;
  Side side = Side::left;
  std::optional<double> k;
};

EmbeddingPotential embedding_potential(const HamiltonianBlocks& blocks, double e, double eta,
                                       Side side = Side::left);

/// Anti-Hermitian part of Sigma, written Im Sigma throughout.
struct ImSigma {
  CMatrix matrix;
  double energy = 0.0;
  double leakage = 0.0;
  Side side = Side::left;
  std::optional<double> k;

  Index dim() const { return matrix.rows(); }
};

ImSigma anti_hermitian_part(const EmbeddingPotential& sig);

/// Closed-form Sigma of a uniform chain (hopping -t, on-site eps), retarded
/// branch. Reference only; the main path never calls it.
cplx chain_sigma_closed_form(double e, double eta, double t = 1.0, double eps = 0.0);

}  // namespace embchan
