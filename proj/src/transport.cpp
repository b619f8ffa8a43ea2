#include "embchan/transport.hpp"

#include <cmath>
#include <cstdio>

#include <Eigen/LU>

namespace embchan {

DeviceGreenFunction device_green(const DeviceSpec& device, const EmbeddingPotential& sigma_left,
                                 const EmbeddingPotential& sigma_right, double e, double eta) {
  if (!(eta >= 0.0)) throw ValidationError("device_green: eta must be non-negative");
  const Index n = device.size();
  const CMatrix& cl = device.coupling_left;
  const CMatrix& cr = device.coupling_right;
  if (cl.cols() != n || cr.cols() != n || sigma_left.sigma.rows() != cl.rows() ||
      sigma_right.sigma.rows() != cr.rows())
    throw ValidationError("device_green: lead Sigma and coupling dimensions do not match");
  // The single convention point: Sigma_emb = C^dagger Sigma C.
  const CMatrix sigma_emb =
      cl.adjoint() * sigma_left.sigma * cl + cr.adjoint() * sigma_right.sigma * cr;
  const CMatrix lhs = cplx(e, eta) * CMatrix::Identity(n, n) - device.h - sigma_emb;
  DeviceGreenFunction out;
  out.g = Eigen::PartialPivLU<CMatrix>(lhs).inverse();
  // Condition relative to the natural size of the problem, so that a tiny
  // pivot is caught even when the system is a single site.
  auto norm1 = [](const CMatrix& m) { return m.cwiseAbs().colwise().sum().maxCoeff(); };
  const double scale = std::max({1.0, std::abs(cplx(e, eta)), norm1(device.h), norm1(sigma_emb)});
  const double cond = out.g.allFinite() ? 1.0 / (scale * norm1(out.g)) : 0.0;
  if (!(cond > 1e-14)) {
    char msg[200];
    std::snprintf(msg, sizeof msg,
                  "device_green: singular system at E=%.17g, eta=%.3g (condition estimate "
                  "%.3e; bound state of the closed junction?)",
                  e, eta, cond);
    throw NumericalError(msg);
  }
  out.residual = max_abs(CMatrix(lhs * out.g - CMatrix::Identity(n, n)));
  if (!(out.residual <= 1e-9)) {
    char msg[160];
    std::snprintf(msg, sizeof msg, "device_green: inverse residual %.3e at E=%.17g", out.residual,
                  e);
    throw NumericalError(msg);
  }
  out.g_rl = cr * out.g * cl.adjoint();
  out.g_lr = cl * out.g * cr.adjoint();
  out.coupling_left = cl;
  out.coupling_right = cr;
  out.energy = e;
  out.eta = eta;
  return out;
}

CVector scattered_wave(const DeviceGreenFunction& green, const ImSigma& im_left,
                       const CVector& psi_inc) {
  if (psi_inc.size() != im_left.dim() || green.coupling_left.rows() != im_left.dim())
    throw ValidationError("scattered_wave: incident vector length " +
                          std::to_string(psi_inc.size()) + " does not match the left surface (" +
                          std::to_string(green.coupling_left.rows()) + ")");
  return -2.0 * kI * (green.g * (green.coupling_left.adjoint() * (im_left.matrix * psi_inc)));
}

CMatrix t_matrix(const CMatrix& g_rl, const ChannelBasis& left, const ChannelBasis& right) {
  if (g_rl.rows() != right.vectors.rows() || g_rl.cols() != left.vectors.rows())
    throw ValidationError("t_matrix: g_rl does not match the channel bases");
  const auto open_l = left.open_indices();
  const auto open_r = right.open_indices();
  CMatrix t(static_cast<Index>(open_l.size()), static_cast<Index>(open_r.size()));
  for (size_t i = 0; i < open_l.size(); ++i) {
    const CVector gu = g_rl * left.unit_flux(open_l[i]);
    const double li = left.lambdas(open_l[i]);
    for (size_t j = 0; j < open_r.size(); ++j) {
      const double lj = right.lambdas(open_r[j]);
      t(static_cast<Index>(i), static_cast<Index>(j)) =
          -4.0 * kI * li * std::abs(lj) * right.unit_flux(open_r[j]).dot(gu);
    }
  }
  return t;
}

TransmissionResult transmission(const DeviceGreenFunction& green, const ImSigma& im_left,
                                const ImSigma& im_right, const ChannelBasis& left,
                                const ChannelBasis& right) {
  TransmissionResult out;
  out.t = t_matrix(green.g_rl, left, right);
  out.t_squared = out.t.cwiseAbs2();
  out.n_open_left = left.open_count();
  out.n_open_right = right.open_count();
  // Ascending-index summation keeps results reproducible bit for bit.
  for (Index i = 0; i < out.t_squared.rows(); ++i)
    for (Index j = 0; j < out.t_squared.cols(); ++j) out.total_channel_sum += out.t_squared(i, j);
  const CMatrix& g = green.g_rl;
  out.total_trace = 4.0 * (g.adjoint() * im_right.matrix * g * im_left.matrix).trace().real();
  out.discrepancy = std::abs(out.total_channel_sum - out.total_trace);
  if (!(out.discrepancy <= 1e-9 * std::max(1.0, out.total_trace))) {
    char msg[220];
    std::snprintf(msg, sizeof msg,
                  "transmission: channel sum %.17g and trace %.17g differ by %.3e at E=%.17g",
                  out.total_channel_sum, out.total_trace, out.discrepancy, green.energy);
    throw NumericalError(msg);
  }
  return out;
}

LeadPoint analyze_lead(const HamiltonianBlocks& blocks, double e, double eta, Side side,
                       std::optional<double> tau_open) {
  LeadPoint p;
  p.blocks = blocks;
  p.sigma = embedding_potential(blocks, e, eta, side);
  p.im = anti_hermitian_part(p.sigma);
  p.channels = channel_decomposition(p.im, tau_open.value_or(default_tau_open(eta)));
  return p;
}

JunctionPoint evaluate_junction(const ModelConfig& model, double e, std::optional<double> k,
                                const JunctionOptions& options) {
  JunctionPoint p;
  p.left = analyze_lead(build_lead_blocks(model.lead_left, k), e, options.eta_lead, Side::left,
                        options.tau_open);
  p.right = analyze_lead(build_lead_blocks(model.lead_right, k), e, options.eta_lead, Side::right,
                         options.tau_open);
  p.device = build_device(model, k);
  const bool both_open = p.left.channels.open_count() > 0 && p.right.channels.open_count() > 0;
  const double eta_device = options.eta_device.value_or(both_open ? 0.0 : options.eta_lead);
  p.green = device_green(p.device, p.left.sigma, p.right.sigma, e, eta_device);
  p.transmission = transmission(p.green, p.left.im, p.right.im, p.left.channels, p.right.channels);
  return p;
}

}  // namespace embchan
