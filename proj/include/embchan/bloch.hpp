#pragma once

// Bloch and evanescent states of a lead at fixed energy, and their relation
// to channel functions.
//
// A state with Bloch factor beta has amplitude beta^m * phi on lead layer m
// (lead frame, m grows into the lead) and solves
//   (E - h00 - beta h01 - beta^-1 h10) phi = 0.
// Its velocity -2 Im(beta phi^dagger h01 phi) / phi^dagger phi is the current
// carried into the lead, so "outgoing" means v > 0.

#include <optional>
#include <vector>

#include "embchan/channels.hpp"
#include "embchan/core.hpp"
#include "embchan/embed.hpp"
#include "embchan/model.hpp"

namespace embchan {

enum class Direction { outgoing, incoming, decaying, growing };

std::string_view to_string(Direction direction);

struct BlochState {
  cplx beta;
  CVector phi;  // unit norm, phase-fixed
  bool propagating = false;
  double velocity = 0.0;  // propagating states only
  Direction direction = Direction::decaying;
  bool band_edge = false;  // propagating with |v| < 1e-12
  double residual = 0.0;
};

struct BlochSpectrum {
  std::vector<BlochState> states;  // outgoing, incoming, decaying, growing
  double energy = 0.0;
  std::optional<double> k;

  Index count(Direction direction) const;
  /// Unit-norm phi of the outgoing propagating states, as columns.
  CMatrix outgoing_phi() const;
  bool has_band_edge() const;
};

struct BlochOptions {
  double tau_prop = 1e-6;      // ||beta| - 1| below this is propagating
  double residual_tol = 1e-9;  // per-state, relative to max(1, |beta|, 1/|beta|)
  double degenerate_tol = 1e-8;
};

/// All finite, nonzero Bloch factors at energy `e` (2n of them when h01 is
/// invertible). Degenerate propagating states are rotated to diagonalize the
/// current within their subspace.
BlochSpectrum bloch_states(const HamiltonianBlocks& blocks, double e,
                           const BlochOptions& options = {});

/// Outgoing propagating states scaled to unit flux through `im_sigma`.
CMatrix unit_flux_outgoing(const BlochSpectrum& spectrum, const ImSigma& im_sigma);

/// F_ij = phi_i^dagger ImSigma phi_j over unit-flux outgoing states.
CMatrix bloch_flux_matrix(const CMatrix& unit_flux_states, const ImSigma& im_sigma);

/// O_ij = phi_i^dagger phi_j over the unit-norm outgoing states.
CMatrix surface_overlap(const BlochSpectrum& spectrum);

struct ChannelTransform {
  CMatrix a;  // rows: Bloch state, columns: open channel
  double unitarity_residual = 0.0;
};

/// a_im = -2 u_m^dagger ImSigma phi_i = -2 lambda_m u_m^dagger phi_i.
ChannelTransform channel_transform(const CMatrix& unit_flux_states, const ChannelBasis& channels);

}  // namespace embchan
