#pragma once

// Energy and K sweeps, band-edge exponent fits and delta-peak detection.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "embchan/core.hpp"
#include "embchan/model.hpp"
#include "embchan/transport.hpp"

namespace embchan {

struct SweepOptions {
  double eta = kEtaSweep;                 // channel eigenvalues
  double eta_transport = kEtaTransport;   // transmission
  std::optional<double> tau_open;         // default_tau_open(eta) when unset
  bool with_transmission = true;
  unsigned threads = 0;                   // 0: hardware concurrency
};

struct SweepRecord {
  double energy = 0.0;
  std::optional<double> k;
  RVector lambdas_left;
  RVector lambdas_right;
  Index n_open_left = 0;
  Index n_open_right = 0;
  double t_trace = 0.0;
  double t_channel_sum = 0.0;
  double discrepancy = 0.0;
  bool ok = true;
  std::string status = "ok";
};

struct SweepMetadata {
  std::string model_hash;
  double eta = 0.0;
  double eta_transport = 0.0;
  double tau_open = 0.0;
  double tau_psd = kTauPsd;
  double tau_prop = 1e-6;
  std::string version = kVersion;
};

struct SweepResult {
  std::vector<double> grid;
  std::vector<std::optional<double>> k_list;
  std::vector<SweepRecord> records;  // energy-major: records[ie * k_count + ik]
  // Summed over k_list at each energy (equal to the per-point totals when
  // there is a single K).
  std::vector<double> total_trace;
  std::vector<double> total_channel_sum;
  SweepMetadata metadata;

  size_t k_count() const { return k_list.size(); }
  const SweepRecord& at(size_t ie, size_t ik) const { return records[ie * k_list.size() + ik]; }
  bool all_ok() const;
};

/// Evenly spaced grid including both ends.
std::vector<double> linear_grid(double emin, double emax, int npts);

/// K list for a model: the given values, the lead's natural momenta for a
/// periodic lead when none are given, or a single "no K" entry.
std::vector<std::optional<double>> resolve_k_list(const ModelConfig& model,
                                                  const std::vector<double>& ks);

/// Per-point failures are recorded in the record status, never thrown.
SweepResult sweep(const ModelConfig& model, const std::vector<double>& grid,
                  const std::vector<double>& ks, const SweepOptions& options = {});

enum class EdgeSide { below, above };

std::string_view to_string(EdgeSide side);

struct EdgeFit {
  double e0 = 0.0;
  std::pair<double, double> window;  // (delta_min, delta_max) offsets from e0
  EdgeSide side = EdgeSide::above;
  double exponent = 0.0;
  double stderr_ = 0.0;
  Index points = 0;
};

struct EdgeFitOptions {
  Side lead = Side::left;
  Index rank = 0;  // 0: most negative eigenvalue
  size_t k_index = 0;
  std::optional<EdgeSide> side;  // default: the side where the channel is open
};

/// Least-squares slope of log|lambda| against log|E - e0| over sweep points
/// with delta_min <= |E - e0| <= delta_max.
EdgeFit fit_band_edge(const SweepResult& sweep, double e0, std::pair<double, double> window,
                      const EdgeFitOptions& options = {});

/// Grid with `per_side` log-spaced points on each side of e0.
std::vector<double> edge_grid(double e0, std::pair<double, double> window, int per_side);

struct Peak {
  double energy = 0.0;
  double height = 0.0;  // max |lambda| at this peak
  double width = 0.0;   // full width at half maximum
  double eta = 0.0;
  Side side = Side::left;
  double background = 0.0;
};

struct PeakScaling {
  double energy = 0.0;
  Side side = Side::left;
  double eta = 0.0;
  double eta_ratio = 0.0;     // eta' / eta
  double height_ratio = 0.0;  // height(eta) / height(eta')
  bool delta_like = false;    // height_ratio / eta_ratio in [0.9, 1.1]
  double transmission = 0.0;  // total T at the peak energy
};

struct PeakReport {
  std::vector<Peak> peaks;  // one entry per (peak, eta)
  std::vector<PeakScaling> scaling;
};

struct PeakOptions {
  std::optional<double> k;
  double background_factor = 10.0;
  int golden_iterations = 80;
};

/// Peaks of max |lambda| over the grid, refined at every eta in `etas`
/// (at least two values, the extremes a factor 10 or more apart).
PeakReport detect_peaks(const ModelConfig& model, const std::vector<double>& grid,
                        std::vector<double> etas, const PeakOptions& options = {});

}  // namespace embchan
