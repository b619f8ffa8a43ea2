#include "embchan/bloch.hpp"

#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

namespace embchan {

namespace {

constexpr double kBetaFloor = 1e-10;

double state_residual(const HamiltonianBlocks& b, double e, cplx beta, const CVector& phi) {
  const Index n = b.dim();
  const CMatrix q = e * CMatrix::Identity(n, n) - b.h00 - beta * b.h01 - b.h10() / beta;
  const double scale = std::max({1.0, std::abs(beta), 1.0 / std::abs(beta)});
  return (q * phi).norm() / (phi.norm() * scale);
}

double velocity_of(const HamiltonianBlocks& b, cplx beta, const CVector& phi) {
  return -2.0 * (beta * phi.dot(b.h01 * phi)).imag() / phi.squaredNorm();
}

int rank(Direction d) { return static_cast<int>(d); }

}  // namespace

std::string_view to_string(Direction direction) {
  switch (direction) {
    case Direction::outgoing: return "outgoing";
    case Direction::incoming: return "incoming";
    case Direction::decaying: return "decaying";
    case Direction::growing: return "growing";
  }
  return "unknown";
}

Index BlochSpectrum::count(Direction direction) const {
  return static_cast<Index>(std::count_if(states.begin(), states.end(), [&](const BlochState& s) {
    return s.direction == direction;
  }));
}

CMatrix BlochSpectrum::outgoing_phi() const {
  std::vector<const BlochState*> out;
  for (const auto& s : states)
    if (s.direction == Direction::outgoing) out.push_back(&s);
  const Index n = states.empty() ? 0 : states.front().phi.size();
  CMatrix m(n, static_cast<Index>(out.size()));
  for (size_t i = 0; i < out.size(); ++i) m.col(static_cast<Index>(i)) = out[i]->phi;
  return m;
}

bool BlochSpectrum::has_band_edge() const {
  return std::any_of(states.begin(), states.end(), [](const BlochState& s) { return s.band_edge; });
}

BlochSpectrum bloch_states(const HamiltonianBlocks& blocks, double e, const BlochOptions& options) {
  validate_blocks(blocks);
  const Index n = blocks.dim();
  const CMatrix eye = CMatrix::Identity(n, n);
  // Companion pencil A x = beta B x with x = [phi; beta phi].
  CMatrix a = CMatrix::Zero(2 * n, 2 * n), bm = CMatrix::Zero(2 * n, 2 * n);
  a.topRightCorner(n, n) = eye;
  a.bottomLeftCorner(n, n) = -blocks.h10();
  a.bottomRightCorner(n, n) = e * eye - blocks.h00;
  bm.topLeftCorner(n, n) = eye;
  bm.bottomRightCorner(n, n) = blocks.h01;

  // Shift-invert keeps infinite eigenvalues (singular h01) harmless: they map
  // to nu = 0 and are dropped.
  const cplx shifts[] = {{0.3127, 0.7211}, {-0.5419, 0.4433}, {0.1789, -0.8347}, {1.7, 0.9}};
  Eigen::PartialPivLU<CMatrix> lu;
  cplx sigma;
  double best_rcond = -1.0;
  for (cplx s : shifts) {
    Eigen::PartialPivLU<CMatrix> trial(a - s * bm);
    const double rc = trial.rcond();
    if (rc > best_rcond) {
      best_rcond = rc;
      lu = trial;
      sigma = s;
    }
    if (rc > 1e-8) break;
  }
  auto singular = [&] {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "bloch_states: pencil is singular at E=%.17g (condition estimate %.3e)", e,
                  best_rcond);
    return NumericalError(msg);
  };
  if (!(best_rcond > 1e-14)) throw singular();
  // An exactly singular pencil can slip past the estimate and surface here.
  const CMatrix m = lu.solve(bm);
  if (!m.allFinite()) throw singular();
  Eigen::ComplexEigenSolver<CMatrix> es(m);
  if (es.info() != Eigen::Success) throw singular();

  BlochSpectrum out;
  out.energy = e;
  out.k = blocks.k;
  const double nu_floor = 1e-12 * std::max(1.0, max_abs(m));
  for (Index i = 0; i < 2 * n; ++i) {
    const cplx nu = es.eigenvalues()(i);
    if (std::abs(nu) < nu_floor) continue;
    const cplx beta = sigma + 1.0 / nu;
    if (std::abs(beta) < kBetaFloor || std::abs(beta) > 1.0 / kBetaFloor) continue;
    const CVector x = es.eigenvectors().col(i);
    CVector phi = std::abs(beta) <= 1.0 ? CVector(x.head(n)) : CVector(x.tail(n) / beta);
    if (phi.norm() == 0.0) continue;
    phi.normalize();
    BlochState s;
    s.beta = beta;
    s.phi = phi;
    s.propagating = std::abs(std::abs(beta) - 1.0) < options.tau_prop;
    out.states.push_back(std::move(s));
  }

  // Degenerate propagating states: orthonormalize, then diagonalize the
  // current form J_ij = i(beta phi_i^+ h01 phi_j - conj(beta) phi_i^+ h10 phi_j).
  std::vector<bool> done(out.states.size(), false);
  for (size_t i = 0; i < out.states.size(); ++i) {
    if (done[i] || !out.states[i].propagating) continue;
    std::vector<size_t> group{i};
    for (size_t j = i + 1; j < out.states.size(); ++j)
      if (!done[j] && out.states[j].propagating &&
          std::abs(out.states[j].beta - out.states[i].beta) < options.degenerate_tol)
        group.push_back(j);
    for (size_t g : group) done[g] = true;
    const cplx beta = out.states[i].beta;
    if (group.size() == 1) {
      auto& s = out.states[i];
      s.velocity = velocity_of(blocks, beta, s.phi);
      continue;
    }
    CMatrix phis(n, static_cast<Index>(group.size()));
    for (size_t c = 0; c < group.size(); ++c) phis.col(static_cast<Index>(c)) = out.states[group[c]].phi;
    Eigen::HouseholderQR<CMatrix> qr(phis);
    const CMatrix q = qr.householderQ() * CMatrix::Identity(n, phis.cols());
    const CMatrix j = kI * (beta * q.adjoint() * blocks.h01 * q -
                            std::conj(beta) * q.adjoint() * blocks.h10() * q);
    Eigen::SelfAdjointEigenSolver<CMatrix> js(hermitize(j));
    const CMatrix rotated = q * js.eigenvectors();
    for (size_t c = 0; c < group.size(); ++c) {
      auto& s = out.states[group[c]];
      s.beta = beta;
      s.phi = rotated.col(static_cast<Index>(c));
      s.velocity = js.eigenvalues()(static_cast<Index>(c));
    }
  }

  for (auto& s : out.states) {
    fix_phase(s.phi);
    if (s.propagating) {
      s.band_edge = std::abs(s.velocity) < 1e-12;
      s.direction = s.velocity > 0.0 ? Direction::outgoing : Direction::incoming;
    } else {
      s.direction = std::abs(s.beta) < 1.0 ? Direction::decaying : Direction::growing;
    }
    s.residual = state_residual(blocks, e, s.beta, s.phi);
    if (!(s.residual <= options.residual_tol)) {
      char msg[200];
      std::snprintf(msg, sizeof msg,
                    "bloch_states: residual %.3e above %.1e at E=%.17g, beta=%.6g%+.6gi "
                    "(ill-conditioned pencil, condition estimate %.3e)",
                    s.residual, options.residual_tol, e, s.beta.real(), s.beta.imag(),
                    best_rcond);
      throw NumericalError(msg);
    }
  }
  std::stable_sort(out.states.begin(), out.states.end(),
                   [](const BlochState& l, const BlochState& r) {
                     if (l.direction != r.direction) return rank(l.direction) < rank(r.direction);
                     if (l.propagating) return std::arg(l.beta) < std::arg(r.beta);
                     return std::abs(l.beta) < std::abs(r.beta);
                   });
  return out;
}

CMatrix unit_flux_outgoing(const BlochSpectrum& spectrum, const ImSigma& im_sigma) {
  CMatrix phis = spectrum.outgoing_phi();
  for (Index c = 0; c < phis.cols(); ++c) {
    const double f = flux(phis.col(c), im_sigma);
    if (!(f > 0.0))
      throw NumericalError("unit_flux_outgoing: outgoing state carries no flux through the "
                           "interface (flux " + std::to_string(f) + ")");
    phis.col(c) /= std::sqrt(f);
  }
  return phis;
}

CMatrix bloch_flux_matrix(const CMatrix& unit_flux_states, const ImSigma& im_sigma) {
  if (unit_flux_states.rows() != im_sigma.dim())
    throw ValidationError("bloch_flux_matrix: state length does not match ImSigma");
  return unit_flux_states.adjoint() * im_sigma.matrix * unit_flux_states;
}

CMatrix surface_overlap(const BlochSpectrum& spectrum) {
  const CMatrix phis = spectrum.outgoing_phi();
  return hermitize(phis.adjoint() * phis);
}

ChannelTransform channel_transform(const CMatrix& unit_flux_states, const ChannelBasis& channels) {
  const Index n_bloch = unit_flux_states.cols();
  const Index n_open = channels.open_count();
  if (n_bloch != n_open) {
    char msg[240];
    std::snprintf(msg, sizeof msg,
                  "channel_transform: %ld outgoing Bloch states but %ld open channels "
                  "(tau_open = %.3e, tau_prop = 1e-6)",
                  static_cast<long>(n_bloch), static_cast<long>(n_open), channels.tau_open);
    throw ValidationError(msg);
  }
  if (unit_flux_states.rows() != channels.vectors.rows())
    throw ValidationError("channel_transform: state length does not match channel basis");
  const auto open = channels.open_indices();
  ChannelTransform out;
  out.a = CMatrix(n_bloch, n_open);
  for (Index m = 0; m < n_open; ++m) {
    const Index ch = open[static_cast<size_t>(m)];
    const CVector u = channels.unit_flux(ch);
    for (Index i = 0; i < n_bloch; ++i)
      out.a(i, m) = -2.0 * channels.lambdas(ch) * u.dot(unit_flux_states.col(i));
  }
  out.unitarity_residual =
      n_open == 0 ? 0.0 : (out.a.adjoint() * out.a - CMatrix::Identity(n_open, n_open)).norm();
  return out;
}

}  // namespace embchan
