#pragma once

// Lattice models: lead materials, device regions and their JSON config form.
//
// Lead blocks are always expressed in the lead's own frame. Layer 0 is the
// interface layer (it belongs to the device), layers 1, 2, ... go deeper into
// the lead, and h01 = <layer m| H |layer m+1>. The same blocks therefore
// describe a left or a right lead; only the device wiring differs.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "embchan/core.hpp"

namespace embchan {

enum class Preset { chain, dimer_chain, ladder, square_strip, explicit_blocks };

std::string_view to_string(Preset preset);

struct Transverse {
  int width = 1;
  bool periodic = false;
};

/// Dimer chains are cut either next to an `a` site or next to a `b` site.
enum class Termination { a, b };

struct LatticeSpec {
  Preset kind = Preset::chain;
  std::map<std::string, double> params;
  std::optional<Transverse> transverse;
  Termination termination = Termination::a;
  // Only for Preset::explicit_blocks.
  CMatrix h00;
  CMatrix h01;

  double param(const std::string& name, double fallback) const;
  bool periodic() const { return transverse && transverse->periodic; }
};

struct HamiltonianBlocks {
  CMatrix h00;
  CMatrix h01;
  std::optional<double> k;

  Index dim() const { return h00.rows(); }
  CMatrix h10() const { return h01.adjoint(); }
};

/// Explicit device region. Coupling matrices map device amplitudes onto the
/// interface-layer orbitals of each lead, so a lead's embedding potential
/// enters the device as coupling^dagger * Sigma * coupling.
struct DeviceSpec {
  CMatrix h;
  CMatrix coupling_left;   // n_l x N
  CMatrix coupling_right;  // n_r x N

  Index size() const { return h.rows(); }
  std::vector<Index> surface_left() const;
  std::vector<Index> surface_right() const;
};

/// A device made of `layers` copies of the left lead's layer, with optional
/// on-site shifts. Built per transverse momentum, so it works for K-resolved
/// leads where an explicit device cannot.
struct LayeredDevice {
  int layers = 1;
  std::vector<std::pair<Index, double>> onsite;
};

using DeviceConfig = std::variant<DeviceSpec, LayeredDevice>;

struct ModelConfig {
  LatticeSpec lead_left;
  LatticeSpec lead_right;
  DeviceConfig device;
};

/// Parse and validate a JSON model document.
ModelConfig parse_model(std::string_view text);
ModelConfig load_model(const std::string& path);

/// Canonical JSON text; parse_model(serialize_model(m)) reproduces m.
std::string serialize_model(const ModelConfig& model);

/// 64-bit FNV-1a hash of the canonical serialization, as 16 hex digits.
std::string model_hash(const ModelConfig& model);

void validate_lattice(const LatticeSpec& spec, const std::string& path = "lead");
void validate_blocks(const HamiltonianBlocks& blocks, const std::string& path = "lead");
void validate_device(const DeviceSpec& device, Index n_left, Index n_right,
                     const std::string& path = "device");

/// Lead blocks at transverse momentum `k`. `k` is required exactly when the
/// lattice is transversely periodic; it is folded into [-pi, pi).
HamiltonianBlocks build_lead_blocks(const LatticeSpec& spec,
                                    std::optional<double> k = std::nullopt);

/// Transverse momenta 2*pi*j/width (folded, ascending) of a periodic strip.
std::vector<double> natural_momenta(const LatticeSpec& spec);

/// Real-space blocks of a periodic strip's full transverse ring.
HamiltonianBlocks supercell_blocks(const LatticeSpec& spec);

/// Explicit device at momentum `k` (validated against both leads).
DeviceSpec build_device(const ModelConfig& model, std::optional<double> k = std::nullopt);

/// Preset blocks helpers used by tests and docs.
LatticeSpec chain_spec(double t = 1.0, double eps = 0.0);
LatticeSpec ladder_spec(double t = 1.0, double t_perp = 0.5, double t_diag = 0.0,
                        double eps = 0.0);
LatticeSpec dimer_spec(double t1, double t2, double eps_a = 0.0, double eps_b = 0.0,
                       Termination termination = Termination::a);
LatticeSpec strip_spec(int width, bool periodic, double t = 1.0, double eps = 0.0);
LatticeSpec explicit_spec(CMatrix h00, CMatrix h01);

}  // namespace embchan
