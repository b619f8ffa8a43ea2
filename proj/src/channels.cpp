#include "embchan/channels.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace embchan {

Index ChannelBasis::open_count() const {
  return static_cast<Index>(std::count(open.begin(), open.end(), true));
}

std::vector<Index> ChannelBasis::open_indices() const {
  std::vector<Index> out;
  for (Index i = 0; i < size(); ++i)
    if (open[static_cast<size_t>(i)]) out.push_back(i);
  return out;
}

CVector ChannelBasis::unit_flux(Index i) const {
  if (i < 0 || i >= size()) throw ValidationError("unit_flux: channel index out of range");
  if (!open[static_cast<size_t>(i)])
    throw ValidationError("unit_flux: channel " + std::to_string(i) +
                          " is closed (lambda = " + std::to_string(lambdas(i)) +
                          ") and carries no flux");
  return vectors.col(i) / std::sqrt(2.0 * std::abs(lambdas(i)));
}

CMatrix ChannelBasis::unit_flux_open() const {
  const auto idx = open_indices();
  CMatrix out(vectors.rows(), static_cast<Index>(idx.size()));
  for (size_t c = 0; c < idx.size(); ++c) out.col(static_cast<Index>(c)) = unit_flux(idx[c]);
  return out;
}

ChannelBasis channel_decomposition(const ImSigma& im_sigma, double tau_open) {
  if (im_sigma.matrix.rows() != im_sigma.matrix.cols())
    throw ValidationError("channel_decomposition: ImSigma must be square");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(im_sigma.matrix));
  if (es.info() != Eigen::Success)
    throw NumericalError("channel_decomposition: eigensolver failed");
  ChannelBasis out;
  out.lambdas = es.eigenvalues();
  out.vectors = es.eigenvectors();
  for (Index i = 0; i < out.vectors.cols(); ++i) fix_phase(out.vectors.col(i));
  // Closed channels sit at about -leakage rather than at zero; stay clear of that.
  out.tau_open = std::max(tau_open, 1.5 * im_sigma.leakage);
  for (Index i = 0; i < out.lambdas.size(); ++i) out.open.push_back(out.lambdas(i) < -out.tau_open);
  out.energy = im_sigma.energy;
  out.side = im_sigma.side;
  out.k = im_sigma.k;
  return out;
}

double flux(const CVector& psi, const ImSigma& im_sigma) {
  if (psi.size() != im_sigma.matrix.rows())
    throw ValidationError("flux: vector length " + std::to_string(psi.size()) +
                          " does not match surface dimension " +
                          std::to_string(im_sigma.matrix.rows()));
  return -2.0 * psi.dot(im_sigma.matrix * psi).real();
}

double bond_current(const CVector& psi_n, const CVector& psi_next, const CMatrix& h01) {
  if (psi_n.size() != h01.rows() || psi_next.size() != h01.cols())
    throw ValidationError("bond_current: layer vectors do not match h01");
  return -2.0 * psi_n.dot(h01 * psi_next).imag();
}

CMatrix reconstruct_im_sigma(const ChannelBasis& basis, Expansion convention) {
  const Index n = basis.vectors.rows();
  CMatrix out = CMatrix::Zero(n, n);
  for (Index i = 0; i < basis.size(); ++i) {
    const bool is_open = basis.open[static_cast<size_t>(i)];
    switch (convention) {
      case Expansion::unit_norm:
        out += basis.lambdas(i) * basis.vectors.col(i) * basis.vectors.col(i).adjoint();
        break;
      case Expansion::unit_norm_open:
        if (is_open)
          out += basis.lambdas(i) * basis.vectors.col(i) * basis.vectors.col(i).adjoint();
        break;
      case Expansion::unit_flux_open:
        if (is_open) {
          const CVector u = basis.unit_flux(i);
          out += -2.0 * basis.lambdas(i) * basis.lambdas(i) * u * u.adjoint();
        }
        break;
    }
  }
  return out;
}

}  // namespace embchan
