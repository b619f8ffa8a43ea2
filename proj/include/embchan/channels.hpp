#pragma once

// Channel functions: eigenvectors of the anti-Hermitian part of Sigma.
// An eigenvector psi with eigenvalue lambda carries flux -2*lambda into the
// lead; open channels (lambda < -tau_open) can be rescaled to unit flux.

#include <optional>
#include <vector>

#include "embchan/core.hpp"
#include "embchan/embed.hpp"

namespace embchan {

struct ChannelBasis {
  RVector lambdas;               // ascending
  CMatrix vectors;               // orthonormal columns, phase-fixed
  std::vector<bool> open;
  double tau_open = 0.0;
  double energy = 0.0;
  Side side = Side::left;
  std::optional<double> k;

  Index size() const { return lambdas.size(); }
  Index open_count() const;
  std::vector<Index> open_indices() const;
  /// psi_i / sqrt(2|lambda_i|); ValidationError for a closed channel.
  CVector unit_flux(Index i) const;
  /// Unit-flux vectors of all open channels, as columns in ascending lambda.
  CMatrix unit_flux_open() const;
};

/// Channels with lambda < -max(tau_open, 1.5 * leakage) are open; the
/// threshold actually used is stored in the basis.
ChannelBasis channel_decomposition(const ImSigma& im_sigma, double tau_open);

/// -2 psi^dagger ImSigma psi: flux leaving the interface into the lead.
double flux(const CVector& psi, const ImSigma& im_sigma);

/// Current from layer n into layer n+1 (deeper into the lead),
/// -2 Im(psi_n^dagger h01 psi_next).
double bond_current(const CVector& psi_n, const CVector& psi_next, const CMatrix& h01);

enum class Expansion { unit_norm, unit_norm_open, unit_flux_open };

/// Rebuild ImSigma from its channels.
CMatrix reconstruct_im_sigma(const ChannelBasis& basis, Expansion convention);

}  // namespace embchan
