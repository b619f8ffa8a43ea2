#include "embchan/spectra.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include <Eigen/Eigenvalues>

namespace embchan {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename F>
void parallel_for(size_t count, unsigned threads, F&& body) {
  unsigned n = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<unsigned>(std::min<size_t>(n, count));
  if (n <= 1) {
    for (size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n; ++t)
    pool.emplace_back([&] {
      for (size_t i = next++; i < count; i = next++) body(i);
    });
  for (auto& th : pool) th.join();
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + static_cast<long>(mid) - 1, v.end());
    m = 0.5 * (m + v[mid - 1]);
  }
  return m;
}

RVector lambdas_of(const HamiltonianBlocks& blocks, double e, double eta) {
  const auto im = anti_hermitian_part(embedding_potential(blocks, e, eta));
  Eigen::SelfAdjointEigenSolver<CMatrix> es(im.matrix, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace

bool SweepResult::all_ok() const {
  return std::all_of(records.begin(), records.end(), [](const SweepRecord& r) { return r.ok; });
}

std::vector<double> linear_grid(double emin, double emax, int npts) {
  if (npts < 1) throw ValidationError("energy grid: npts must be at least 1");
  if (!std::isfinite(emin) || !std::isfinite(emax))
    throw ValidationError("energy grid: bounds must be finite");
  if (npts == 1) return {emin};
  if (!(emax > emin)) throw ValidationError("energy grid: emax must exceed emin");
  std::vector<double> grid(static_cast<size_t>(npts));
  for (int i = 0; i < npts; ++i) grid[static_cast<size_t>(i)] = emin + (emax - emin) * i / (npts - 1);
  grid.back() = emax;
  return grid;
}

std::vector<std::optional<double>> resolve_k_list(const ModelConfig& model,
                                                  const std::vector<double>& ks) {
  const bool periodic = model.lead_left.periodic();
  std::vector<std::optional<double>> out;
  if (!periodic) {
    if (!ks.empty())
      throw ValidationError("--k given but the leads have no periodic transverse direction");
    out.emplace_back(std::nullopt);
    return out;
  }
  const auto natural = natural_momenta(model.lead_left);
  if (ks.empty()) {
    for (double k : natural) out.emplace_back(k);
  } else {
    if (std::holds_alternative<DeviceSpec>(model.device) && ks.size() > 1)
      throw ValidationError("an explicit device supports a single K");
    for (double k : ks) out.emplace_back(fold_momentum(k));
  }
  return out;
}

SweepResult sweep(const ModelConfig& model, const std::vector<double>& grid,
                  const std::vector<double>& ks, const SweepOptions& options) {
  if (grid.empty()) throw ValidationError("sweep: energy grid is empty");
  for (size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ValidationError("sweep: energy grid must be strictly increasing");
  if (!(options.eta > 0.0)) throw ValidationError("sweep: eta must be positive");
  SweepResult out;
  out.grid = grid;
  out.k_list = resolve_k_list(model, ks);
  out.metadata.model_hash = model_hash(model);
  out.metadata.eta = options.eta;
  out.metadata.eta_transport = options.eta_transport;
  out.metadata.tau_open = options.tau_open.value_or(default_tau_open(options.eta));
  const size_t nk = out.k_list.size();
  out.records.resize(grid.size() * nk);

  parallel_for(out.records.size(), options.threads, [&](size_t idx) {
    SweepRecord& r = out.records[idx];
    r.energy = grid[idx / nk];
    r.k = out.k_list[idx % nk];
    try {
      const auto left = analyze_lead(build_lead_blocks(model.lead_left, r.k), r.energy,
                                     options.eta, Side::left, out.metadata.tau_open);
      const auto right = analyze_lead(build_lead_blocks(model.lead_right, r.k), r.energy,
                                      options.eta, Side::right, out.metadata.tau_open);
      r.lambdas_left = left.channels.lambdas;
      r.lambdas_right = right.channels.lambdas;
      r.n_open_left = left.channels.open_count();
      r.n_open_right = right.channels.open_count();
      if (options.with_transmission) {
        JunctionOptions jo;
        jo.eta_lead = options.eta_transport;
        const auto p = evaluate_junction(model, r.energy, r.k, jo);
        r.t_trace = p.transmission.total_trace;
        r.t_channel_sum = p.transmission.total_channel_sum;
        r.discrepancy = p.transmission.discrepancy;
      }
    } catch (const std::exception& e) {
      r.ok = false;
      r.status = e.what();
      r.t_trace = r.t_channel_sum = r.discrepancy = kNaN;
    }
  });

  out.total_trace.assign(grid.size(), 0.0);
  out.total_channel_sum.assign(grid.size(), 0.0);
  for (size_t ie = 0; ie < grid.size(); ++ie)
    for (size_t ik = 0; ik < nk; ++ik) {
      out.total_trace[ie] += out.at(ie, ik).t_trace;
      out.total_channel_sum[ie] += out.at(ie, ik).t_channel_sum;
    }
  return out;
}

std::string_view to_string(EdgeSide side) { return side == EdgeSide::below ? "below" : "above"; }

EdgeFit fit_band_edge(const SweepResult& sweep, double e0, std::pair<double, double> window,
                      const EdgeFitOptions& options) {
  const auto [dmin, dmax] = window;
  if (!(dmin > 0.0) || !(dmax > dmin))
    throw ValidationError("fit_band_edge: window must satisfy 0 < delta_min < delta_max");
  if (dmin < 10.0 * sweep.metadata.eta)
    throw ValidationError("fit_band_edge: window starts inside the broadening region "
                          "(delta_min < 10 * eta = " + std::to_string(10.0 * sweep.metadata.eta) +
                          ")");
  if (options.k_index >= sweep.k_count())
    throw ValidationError("fit_band_edge: k index out of range");

  struct Point {
    double x, y;
    bool open;
  };
  std::vector<Point> below, above;
  for (size_t ie = 0; ie < sweep.grid.size(); ++ie) {
    const SweepRecord& r = sweep.at(ie, options.k_index);
    if (!r.ok) continue;
    const double delta = std::abs(r.energy - e0);
    if (delta < dmin || delta > dmax) continue;
    const RVector& lam = options.lead == Side::left ? r.lambdas_left : r.lambdas_right;
    if (options.rank >= lam.size()) continue;
    const double l = lam(options.rank);
    if (!(std::abs(l) > 0.0)) continue;
    Point p{std::log(delta), std::log(std::abs(l)), l < -sweep.metadata.tau_open};
    (r.energy < e0 ? below : above).push_back(p);
  }
  auto open_points = [](const std::vector<Point>& v) {
    return std::count_if(v.begin(), v.end(), [](const Point& p) { return p.open; });
  };
  EdgeSide side;
  if (options.side) {
    side = *options.side;
  } else {
    side = open_points(above) >= open_points(below) ? EdgeSide::above : EdgeSide::below;
  }
  const auto& pts = side == EdgeSide::above ? above : below;
  if (pts.size() < 8)
    throw ValidationError("fit_band_edge: need at least 8 sweep points in the window " +
                          std::string(to_string(side)) + " the edge, found " +
                          std::to_string(pts.size()));
  const double n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : pts) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
  }
  EdgeFit fit;
  fit.e0 = e0;
  fit.window = window;
  fit.side = side;
  fit.points = static_cast<Index>(pts.size());
  fit.exponent = sxy / sxx;
  const double intercept = my - fit.exponent * mx;
  double ss = 0.0;
  for (const auto& p : pts) {
    const double r = p.y - (intercept + fit.exponent * p.x);
    ss += r * r;
  }
  fit.stderr_ = std::sqrt(ss / std::max(1.0, n - 2.0) / sxx);
  return fit;
}

std::vector<double> edge_grid(double e0, std::pair<double, double> window, int per_side) {
  if (per_side < 2) throw ValidationError("edge_grid: need at least 2 points per side");
  const double lmin = std::log(window.first), lmax = std::log(window.second);
  std::vector<double> grid;
  for (int i = per_side - 1; i >= 0; --i)
    grid.push_back(e0 - std::exp(lmin + (lmax - lmin) * i / (per_side - 1)));
  for (int i = 0; i < per_side; ++i)
    grid.push_back(e0 + std::exp(lmin + (lmax - lmin) * i / (per_side - 1)));
  return grid;
}

PeakReport detect_peaks(const ModelConfig& model, const std::vector<double>& grid,
                        std::vector<double> etas, const PeakOptions& options) {
  if (grid.size() < 3) throw ValidationError("detect_peaks: need at least 3 grid points");
  for (size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw ValidationError("detect_peaks: energy grid must be strictly increasing");
  std::sort(etas.begin(), etas.end());
  etas.erase(std::unique(etas.begin(), etas.end()), etas.end());
  if (etas.size() < 2 || !(etas.front() > 0.0) || etas.back() < 10.0 * etas.front() * (1 - 1e-12))
    throw ValidationError("detect_peaks: need at least two positive eta values a factor 10 apart");

  PeakReport report;
  for (Side side : {Side::left, Side::right}) {
    const auto blocks = build_lead_blocks(side == Side::left ? model.lead_left : model.lead_right,
                                          options.k);
    auto height = [&](double e, double eta) {
      try {
        return lambdas_of(blocks, e, eta).cwiseAbs().maxCoeff();
      } catch (const NumericalError&) {
        return kNaN;
      }
    };
    const double eta0 = etas.front();
    std::vector<double> f(grid.size());
    parallel_for(grid.size(), 0, [&](size_t i) { f[i] = height(grid[i], eta0); });

    for (size_t i = 1; i + 1 < grid.size(); ++i) {
      if (!(f[i] > f[i - 1] && f[i] >= f[i + 1])) continue;
      std::vector<double> neighbours;
      for (size_t j = i >= 6 ? i - 6 : 0; j <= std::min(grid.size() - 1, i + 6); ++j)
        if ((j + 1 < i || j > i + 1) && std::isfinite(f[j])) neighbours.push_back(f[j]);
      const double background = median(neighbours);

      auto refine = [&](double eta) {
        // Golden-section maximization inside the bracketing grid cell pair.
        double a = grid[i - 1], b = grid[i + 1];
        const double r = 0.5 * (std::sqrt(5.0) - 1.0);
        double c = b - r * (b - a), d = a + r * (b - a);
        double fc = height(c, eta), fd = height(d, eta);
        for (int it = 0; it < options.golden_iterations && b - a > 1e-15 * (1 + std::abs(a)); ++it) {
          if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = height(c, eta);
          } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = height(d, eta);
          }
        }
        double e = fc >= fd ? c : d, h = std::max(fc, fd);
        // The grid point itself may sit exactly on the peak.
        const double fg = height(grid[i], eta);
        if (fg > h) {
          e = grid[i];
          h = fg;
        }
        return std::pair<double, double>{e, h};
      };

      const auto [e_peak, h_peak] = refine(eta0);
      if (!(h_peak > options.background_factor * background)) continue;

      auto half_width = [&](double eta, double e, double h, double dir) {
        double d = eta;
        const double limit = grid[i + 1] - grid[i - 1];
        while (d < limit && height(e + dir * d, eta) >= 0.5 * h) d *= 2.0;
        if (d >= limit) return kNaN;
        double lo = 0.0, hi = d;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          (height(e + dir * mid, eta) >= 0.5 * h ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
      };

      double t_peak = kNaN;
      try {
        t_peak = evaluate_junction(model, e_peak, options.k).transmission.total_trace;
      } catch (const std::exception&) {
      }

      std::vector<std::pair<double, double>> per_eta;
      for (double eta : etas) {
        const auto [e, h] = eta == eta0 ? std::pair<double, double>{e_peak, h_peak} : refine(eta);
        Peak p;
        p.energy = e;
        p.height = h;
        p.width = half_width(eta, e, h, -1.0) + half_width(eta, e, h, 1.0);
        p.eta = eta;
        p.side = side;
        p.background = background;
        report.peaks.push_back(p);
        per_eta.emplace_back(eta, h);
      }
      for (size_t j = 1; j < per_eta.size(); ++j) {
        PeakScaling s;
        s.energy = e_peak;
        s.side = side;
        s.eta = eta0;
        s.eta_ratio = per_eta[j].first / eta0;
        s.height_ratio = h_peak / per_eta[j].second;
        const double rel = s.height_ratio / s.eta_ratio;
        s.delta_like = rel >= 0.9 && rel <= 1.1;
        s.transmission = t_peak;
        report.scaling.push_back(s);
      }
    }
  }
  return report;
}

}  // namespace embchan
