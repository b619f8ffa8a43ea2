#pragma once

// Device Green function, scattered waves and transmission.
//
// Each lead's Sigma enters the device as coupling^dagger * Sigma * coupling;
// this is the only place lead-surface and device indices meet. The blocks
// g_rl and g_lr are expressed in lead-surface coordinates:
// g_rl = C_r G C_l^dagger (n_r x n_l).

#include <optional>

#include "embchan/bloch.hpp"
#include "embchan/channels.hpp"
#include "embchan/core.hpp"
#include "embchan/embed.hpp"
#include "embchan/model.hpp"

namespace embchan {

struct DeviceGreenFunction {
  CMatrix g;
  CMatrix g_rl;
  CMatrix g_lr;
  CMatrix coupling_left;
  CMatrix coupling_right;
  double energy = 0.0;
  double eta = 0.0;
  double residual = 0.0;  // max |(z - H - Sigma_emb) G - 1|
};

/// Throws NumericalError near a bound state of the closed system (reports
/// the condition estimate).
DeviceGreenFunction device_green(const DeviceSpec& device, const EmbeddingPotential& sigma_left,
                                 const EmbeddingPotential& sigma_right, double e, double eta);

/// Device wave excited by psi_inc arriving from the left lead:
/// chi = -2i G C_l^dagger (ImSigma_l psi_inc).
CVector scattered_wave(const DeviceGreenFunction& green, const ImSigma& im_left,
                       const CVector& psi_inc);

/// t_ij = -4i lambda_i^l |lambda_j^r| (u_j^r)^dagger g_rl u_i^l over open
/// channels (rows: left, columns: right).
CMatrix t_matrix(const CMatrix& g_rl, const ChannelBasis& left, const ChannelBasis& right);

struct TransmissionResult {
  CMatrix t;
  RMatrix t_squared;
  double total_channel_sum = 0.0;
  double total_trace = 0.0;
  double discrepancy = 0.0;
  Index n_open_left = 0;
  Index n_open_right = 0;
};

/// Fills both routes and throws NumericalError if they disagree by more than
/// 1e-9 * max(1, total).
TransmissionResult transmission(const DeviceGreenFunction& green, const ImSigma& im_left,
                                const ImSigma& im_right, const ChannelBasis& left,
                                const ChannelBasis& right);

/// Everything known about one lead at one (E, K).
struct LeadPoint {
  HamiltonianBlocks blocks;
  EmbeddingPotential sigma;
  ImSigma im;
  ChannelBasis channels;
};

LeadPoint analyze_lead(const HamiltonianBlocks& blocks, double e, double eta, Side side,
                       std::optional<double> tau_open = std::nullopt);

struct JunctionOptions {
  double eta_lead = kEtaTransport;
  // Unset: 0 when both leads have open channels, eta_lead otherwise.
  std::optional<double> eta_device;
  std::optional<double> tau_open;
};

struct JunctionPoint {
  LeadPoint left;
  LeadPoint right;
  DeviceSpec device;
  DeviceGreenFunction green;
  TransmissionResult transmission;
};

JunctionPoint evaluate_junction(const ModelConfig& model, double e, std::optional<double> k,
                                const JunctionOptions& options = {});

}  // namespace embchan
