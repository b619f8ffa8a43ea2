#include "embchan/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace embchan {

using nlohmann::json;

namespace {

constexpr double kHermitianTol = 1e-12;

struct PresetInfo {
  Preset kind;
  const char* name;
  std::vector<std::string> params;
};

const std::vector<PresetInfo>& presets() {
  static const std::vector<PresetInfo> table = {
      {Preset::chain, "chain", {"t", "eps"}},
      {Preset::dimer_chain, "dimer_chain", {"t1", "t2", "eps_a", "eps_b"}},
      {Preset::ladder, "ladder", {"t", "t_perp", "t_diag", "eps"}},
      {Preset::square_strip, "square_strip", {"t", "eps"}},
  };
  return table;
}

const PresetInfo* find_preset(std::string_view name) {
  for (const auto& p : presets())
    if (name == p.name) return &p;
  return nullptr;
}

const PresetInfo& preset_info(Preset kind) {
  for (const auto& p : presets())
    if (p.kind == kind) return p;
  throw ValidationError("explicit lattice has no preset parameters");
}

std::string entry_path(const std::string& path, Index i, Index j) {
  return path + "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
}

double as_number(const json& value, const std::string& path) {
  if (!value.is_number()) throw ValidationError(path + ": expected a number");
  return value.get<double>();
}

cplx parse_complex(const json& value, const std::string& path) {
  if (value.is_number()) return {value.get<double>(), 0.0};
  if (value.is_array() && value.size() == 2 && value[0].is_number() && value[1].is_number())
    return {value[0].get<double>(), value[1].get<double>()};
  throw ValidationError(path + ": expected a number or a [re, im] pair");
}

CMatrix parse_matrix(const json& value, const std::string& path) {
  if (!value.is_array() || value.empty())
    throw ValidationError(path + ": expected a non-empty array of rows");
  const auto rows = static_cast<Index>(value.size());
  Index cols = -1;
  for (Index i = 0; i < rows; ++i) {
    const json& row = value[static_cast<size_t>(i)];
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    if (!row.is_array()) throw ValidationError(row_path + ": expected an array");
    if (cols < 0) cols = static_cast<Index>(row.size());
    if (static_cast<Index>(row.size()) != cols || cols == 0)
      throw ValidationError(row_path + ": ragged matrix (expected " + std::to_string(cols) +
                            " columns)");
  }
  CMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      m(i, j) = parse_complex(value[static_cast<size_t>(i)][static_cast<size_t>(j)],
                              entry_path(path, i, j));
  return m;
}

json matrix_to_json(const CMatrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) {
      const cplx z = m(i, j);
      if (z.imag() == 0.0)
        row.push_back(z.real());
      else
        row.push_back(json::array({z.real(), z.imag()}));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
  for (const auto& item : obj.items())
    if (!allowed.count(item.key()))
      throw ValidationError(path + "." + item.key() + ": unknown field");
}

void check_hermitian(const CMatrix& m, const std::string& path) {
  if (m.rows() != m.cols())
    throw ValidationError(path + ": must be square, got " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = i; j < m.cols(); ++j)
      if (std::abs(m(i, j) - std::conj(m(j, i))) > kHermitianTol)
        throw ValidationError(path + ": hermiticity violation at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
}

LatticeSpec parse_lattice(const json& obj, const std::string& path) {
  if (!obj.is_object()) throw ValidationError(path + ": expected an object");
  LatticeSpec spec;
  if (obj.contains("preset")) {
    check_keys(obj, {"preset", "params", "transverse", "termination"}, path);
    if (!obj["preset"].is_string()) throw ValidationError(path + ".preset: expected a string");
    const auto name = obj["preset"].get<std::string>();
    const PresetInfo* info = find_preset(name);
    if (!info)
      throw ValidationError(path + ".preset: unknown preset '" + name +
                            "' (expected chain, dimer_chain, ladder or square_strip)");
    spec.kind = info->kind;
    if (obj.contains("params")) {
      const json& params = obj["params"];
      if (!params.is_object()) throw ValidationError(path + ".params: expected an object");
      for (const auto& item : params.items())
        spec.params[item.key()] = as_number(item.value(), path + ".params." + item.key());
    }
    if (obj.contains("transverse")) {
      const json& tr = obj["transverse"];
      const std::string tr_path = path + ".transverse";
      if (!tr.is_object()) throw ValidationError(tr_path + ": expected an object");
      check_keys(tr, {"width", "periodic"}, tr_path);
      Transverse t;
      if (!tr.contains("width") || !tr["width"].is_number_integer())
        throw ValidationError(tr_path + ".width: expected an integer");
      t.width = tr["width"].get<int>();
      if (tr.contains("periodic")) {
        if (!tr["periodic"].is_boolean())
          throw ValidationError(tr_path + ".periodic: expected true or false");
        t.periodic = tr["periodic"].get<bool>();
      }
      spec.transverse = t;
    }
    if (obj.contains("termination")) {
      const json& term = obj["termination"];
      if (!term.is_string() || (term != "a" && term != "b"))
        throw ValidationError(path + ".termination: expected \"a\" or \"b\"");
      spec.termination = term == "a" ? Termination::a : Termination::b;
    }
  } else if (obj.contains("h00") || obj.contains("h01")) {
    check_keys(obj, {"h00", "h01"}, path);
    if (!obj.contains("h00")) throw ValidationError(path + ".h00: missing");
    if (!obj.contains("h01")) throw ValidationError(path + ".h01: missing");
    spec.kind = Preset::explicit_blocks;
    spec.h00 = parse_matrix(obj["h00"], path + ".h00");
    spec.h01 = parse_matrix(obj["h01"], path + ".h01");
  } else {
    throw ValidationError(path + ": expected either \"preset\" or \"h00\"/\"h01\"");
  }
  validate_lattice(spec, path);
  return spec;
}

DeviceConfig parse_device(const json& obj, const std::string& path) {
  if (!obj.is_object()) throw ValidationError(path + ": expected an object");
  if (obj.contains("layers")) {
    check_keys(obj, {"layers", "onsite"}, path);
    LayeredDevice dev;
    if (!obj["layers"].is_number_integer() || obj["layers"].get<int>() < 1)
      throw ValidationError(path + ".layers: expected a positive integer");
    dev.layers = obj["layers"].get<int>();
    if (obj.contains("onsite")) {
      const json& list = obj["onsite"];
      if (!list.is_array()) throw ValidationError(path + ".onsite: expected an array");
      for (size_t i = 0; i < list.size(); ++i) {
        const std::string item_path = path + ".onsite[" + std::to_string(i) + "]";
        const json& item = list[i];
        if (!item.is_array() || item.size() != 2 || !item[0].is_number_integer() ||
            item[0].get<long long>() < 0)
          throw ValidationError(item_path + ": expected [site_index, shift]");
        dev.onsite.emplace_back(static_cast<Index>(item[0].get<long long>()),
                                as_number(item[1], item_path + "[1]"));
      }
    }
    return dev;
  }
  check_keys(obj, {"h", "coupling_left", "coupling_right"}, path);
  for (const char* key : {"h", "coupling_left", "coupling_right"})
    if (!obj.contains(key)) throw ValidationError(path + "." + key + ": missing");
  DeviceSpec dev;
  dev.h = parse_matrix(obj["h"], path + ".h");
  dev.coupling_left = parse_matrix(obj["coupling_left"], path + ".coupling_left");
  dev.coupling_right = parse_matrix(obj["coupling_right"], path + ".coupling_right");
  check_hermitian(dev.h, path + ".h");
  return dev;
}

json lattice_to_json(const LatticeSpec& spec) {
  json obj = json::object();
  if (spec.kind == Preset::explicit_blocks) {
    obj["h00"] = matrix_to_json(spec.h00);
    obj["h01"] = matrix_to_json(spec.h01);
    return obj;
  }
  obj["preset"] = std::string(to_string(spec.kind));
  json params = json::object();
  for (const auto& [name, value] : spec.params) params[name] = value;
  obj["params"] = params;
  if (spec.transverse)
    obj["transverse"] = {{"width", spec.transverse->width},
                         {"periodic", spec.transverse->periodic}};
  if (spec.kind == Preset::dimer_chain)
    obj["termination"] = spec.termination == Termination::a ? "a" : "b";
  return obj;
}

std::vector<Index> touched_columns(const CMatrix& coupling) {
  std::vector<Index> out;
  for (Index j = 0; j < coupling.cols(); ++j)
    if (coupling.col(j).cwiseAbs().maxCoeff() > 0.0) out.push_back(j);
  return out;
}

std::string location(const std::string& text, size_t byte) {
  size_t line = 1, col = 1;
  for (size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

std::string_view to_string(Preset preset) {
  if (preset == Preset::explicit_blocks) return "explicit";
  return preset_info(preset).name;
}

double LatticeSpec::param(const std::string& name, double fallback) const {
  const auto it = params.find(name);
  return it == params.end() ? fallback : it->second;
}

std::vector<Index> DeviceSpec::surface_left() const { return touched_columns(coupling_left); }
std::vector<Index> DeviceSpec::surface_right() const { return touched_columns(coupling_right); }

void validate_lattice(const LatticeSpec& spec, const std::string& path) {
  if (spec.kind == Preset::explicit_blocks) {
    if (spec.transverse) throw ValidationError(path + ".transverse: not allowed for explicit blocks");
    check_hermitian(spec.h00, path + ".h00");
    if (spec.h01.rows() != spec.h00.rows() || spec.h01.cols() != spec.h00.cols())
      throw ValidationError(path + ": dimension mismatch between h00 (" +
                            std::to_string(spec.h00.rows()) + "x" +
                            std::to_string(spec.h00.cols()) + ") and h01 (" +
                            std::to_string(spec.h01.rows()) + "x" +
                            std::to_string(spec.h01.cols()) + ")");
    return;
  }
  const PresetInfo& info = preset_info(spec.kind);
  for (const auto& [name, value] : spec.params) {
    if (std::find(info.params.begin(), info.params.end(), name) == info.params.end())
      throw ValidationError(path + ".params." + name + ": unknown parameter for preset " +
                            info.name);
    if (!std::isfinite(value)) throw ValidationError(path + ".params." + name + ": not finite");
  }
  auto positive = [&](const std::string& name, double fallback) {
    if (!(spec.param(name, fallback) > 0.0))
      throw ValidationError(path + ".params." + name + ": must be positive");
  };
  switch (spec.kind) {
    case Preset::chain:
    case Preset::square_strip:
      positive("t", 1.0);
      break;
    case Preset::dimer_chain:
      positive("t1", 1.0);
      positive("t2", 1.0);
      break;
    case Preset::ladder:
      positive("t", 1.0);
      if (spec.param("t_perp", 0.5) < 0.0)
        throw ValidationError(path + ".params.t_perp: must be non-negative");
      break;
    case Preset::explicit_blocks:
      break;
  }
  if (spec.kind == Preset::square_strip) {
    if (!spec.transverse) throw ValidationError(path + ".transverse: required for square_strip");
    if (spec.transverse->width < 1)
      throw ValidationError(path + ".transverse.width: must be at least 1");
  } else if (spec.transverse) {
    throw ValidationError(path + ".transverse: only square_strip has a transverse direction");
  }
}

void validate_blocks(const HamiltonianBlocks& blocks, const std::string& path) {
  check_hermitian(blocks.h00, path + ".h00");
  if (blocks.h01.rows() != blocks.h00.rows() || blocks.h01.cols() != blocks.h00.cols())
    throw ValidationError(path + ": dimension mismatch between h00 and h01");
}

void validate_device(const DeviceSpec& device, Index n_left, Index n_right,
                     const std::string& path) {
  check_hermitian(device.h, path + ".h");
  const Index n = device.size();
  auto check_coupling = [&](const CMatrix& c, Index rows, const std::string& name) {
    if (c.rows() != rows || c.cols() != n)
      throw ValidationError(path + "." + name + ": expected " + std::to_string(rows) + "x" +
                            std::to_string(n) + " (lead surface x device), got " +
                            std::to_string(c.rows()) + "x" + std::to_string(c.cols()));
  };
  check_coupling(device.coupling_left, n_left, "coupling_left");
  check_coupling(device.coupling_right, n_right, "coupling_right");
  const auto sl = device.surface_left();
  const auto sr = device.surface_right();
  if (sl.empty()) throw ValidationError(path + ".coupling_left: couples to no device site");
  if (sr.empty()) throw ValidationError(path + ".coupling_right: couples to no device site");
  if (sl == sr) return;  // both leads attached to one shared layer
  std::vector<Index> common;
  std::set_intersection(sl.begin(), sl.end(), sr.begin(), sr.end(), std::back_inserter(common));
  if (!common.empty())
    throw ValidationError(path + ": left and right surface sets overlap at device site " +
                          std::to_string(common.front()) +
                          " (they must be disjoint or identical)");
}

ModelConfig parse_model(std::string_view text) {
  const std::string owned(text);
  json doc;
  try {
    doc = json::parse(owned);
  } catch (const json::parse_error& e) {
    throw ValidationError("model parse error at " + location(owned, e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw ValidationError("model: expected a JSON object");
  check_keys(doc, {"lead_left", "lead_right", "device"}, "model");
  for (const char* key : {"lead_left", "lead_right", "device"})
    if (!doc.contains(key)) throw ValidationError(std::string("model.") + key + ": missing");
  ModelConfig model{parse_lattice(doc["lead_left"], "lead_left"),
                    parse_lattice(doc["lead_right"], "lead_right"),
                    parse_device(doc["device"], "device")};
  // Catch wiring mistakes now rather than at the first energy point.
  if (model.lead_left.periodic() != model.lead_right.periodic())
    throw ValidationError("model: both leads must be transversely periodic or neither");
  const bool periodic = model.lead_left.periodic() || model.lead_right.periodic();
  std::optional<double> k0;
  if (periodic) {
    const auto ks = natural_momenta(model.lead_left.periodic() ? model.lead_left : model.lead_right);
    if (std::holds_alternative<DeviceSpec>(model.device) && ks.size() > 1)
      throw ValidationError(
          "device: an explicit device cannot be combined with K-resolved leads of width > 1; "
          "use {\"layers\": L} instead");
    k0 = ks.front();
  }
  build_device(model, k0);
  return model;
}

ModelConfig load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_model(buffer.str());
}

std::string serialize_model(const ModelConfig& model) {
  json doc;
  doc["lead_left"] = lattice_to_json(model.lead_left);
  doc["lead_right"] = lattice_to_json(model.lead_right);
  if (const auto* dev = std::get_if<DeviceSpec>(&model.device)) {
    doc["device"] = {{"h", matrix_to_json(dev->h)},
                     {"coupling_left", matrix_to_json(dev->coupling_left)},
                     {"coupling_right", matrix_to_json(dev->coupling_right)}};
  } else {
    const auto& layered = std::get<LayeredDevice>(model.device);
    json onsite = json::array();
    for (const auto& [site, shift] : layered.onsite) onsite.push_back({site, shift});
    doc["device"] = {{"layers", layered.layers}, {"onsite", onsite}};
  }
  return doc.dump(2);
}

std::string model_hash(const ModelConfig& model) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : serialize_model(model)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

HamiltonianBlocks build_lead_blocks(const LatticeSpec& spec, std::optional<double> k) {
  if (spec.periodic() && !k)
    throw ValidationError("transverse momentum k is required for a periodic lead");
  if (!spec.periodic() && k)
    throw ValidationError("transverse momentum k given for a lead without periodic transverse "
                          "direction");
  HamiltonianBlocks b;
  if (k) b.k = fold_momentum(*k);
  switch (spec.kind) {
    case Preset::explicit_blocks:
      b.h00 = spec.h00;
      b.h01 = spec.h01;
      break;
    case Preset::chain:
      b.h00 = CMatrix::Constant(1, 1, spec.param("eps", 0.0));
      b.h01 = CMatrix::Constant(1, 1, -spec.param("t", 1.0));
      break;
    case Preset::dimer_chain: {
      const double t1 = spec.param("t1", 1.0), t2 = spec.param("t2", 1.0);
      const double ea = spec.param("eps_a", 0.0), eb = spec.param("eps_b", 0.0);
      // Cell [a, b] with intra-cell bond t1, or cell [b, a] cut on the other bond.
      const bool a_first = spec.termination == Termination::a;
      const double intra = a_first ? t1 : t2, inter = a_first ? t2 : t1;
      b.h00 = CMatrix::Zero(2, 2);
      b.h00(0, 0) = a_first ? ea : eb;
      b.h00(1, 1) = a_first ? eb : ea;
      b.h00(0, 1) = b.h00(1, 0) = -intra;
      b.h01 = CMatrix::Zero(2, 2);
      b.h01(1, 0) = -inter;
      break;
    }
    case Preset::ladder: {
      const double t = spec.param("t", 1.0), tp = spec.param("t_perp", 0.5);
      const double td = spec.param("t_diag", 0.0), eps = spec.param("eps", 0.0);
      b.h00 = CMatrix::Zero(2, 2);
      b.h00(0, 0) = b.h00(1, 1) = eps;
      b.h00(0, 1) = b.h00(1, 0) = -tp;
      b.h01 = CMatrix::Zero(2, 2);
      b.h01(0, 0) = b.h01(1, 1) = -t;
      b.h01(0, 1) = -td;
      break;
    }
    case Preset::square_strip: {
      const double t = spec.param("t", 1.0), eps = spec.param("eps", 0.0);
      if (spec.periodic()) {
        // One transverse Bloch mode: the wrapping bond picks up e^{+-iK}.
        const cplx onsite = eps - t * (std::exp(kI * *b.k) + std::exp(-kI * *b.k));
        b.h00 = CMatrix::Constant(1, 1, cplx(onsite.real(), 0.0));
        b.h01 = CMatrix::Constant(1, 1, -t);
      } else {
        const int w = spec.transverse->width;
        b.h00 = CMatrix::Identity(w, w) * eps;
        for (int i = 0; i + 1 < w; ++i) b.h00(i, i + 1) = b.h00(i + 1, i) = -t;
        b.h01 = -t * CMatrix::Identity(w, w);
      }
      break;
    }
  }
  validate_blocks(b, "lead");
  return b;
}

std::vector<double> natural_momenta(const LatticeSpec& spec) {
  if (!spec.periodic()) throw ValidationError("natural_momenta: lead is not transversely periodic");
  std::vector<double> ks;
  const int w = spec.transverse->width;
  for (int j = 0; j < w; ++j) ks.push_back(fold_momentum(2.0 * kPi * j / w));
  std::sort(ks.begin(), ks.end());
  return ks;
}

HamiltonianBlocks supercell_blocks(const LatticeSpec& spec) {
  if (spec.kind != Preset::square_strip || !spec.periodic())
    throw ValidationError("supercell_blocks: requires a periodic square_strip");
  const double t = spec.param("t", 1.0), eps = spec.param("eps", 0.0);
  const int w = spec.transverse->width;
  HamiltonianBlocks b;
  b.h00 = CMatrix::Identity(w, w) * eps;
  for (int i = 0; i < w; ++i) {
    const int j = (i + 1) % w;
    b.h00(i, j) -= t;
    b.h00(j, i) -= t;
  }
  b.h01 = -t * CMatrix::Identity(w, w);
  return b;
}

DeviceSpec build_device(const ModelConfig& model, std::optional<double> k) {
  const auto left = build_lead_blocks(model.lead_left, k);
  const auto right = build_lead_blocks(model.lead_right, k);
  if (const auto* dev = std::get_if<DeviceSpec>(&model.device)) {
    validate_device(*dev, left.dim(), right.dim());
    return *dev;
  }
  const auto& layered = std::get<LayeredDevice>(model.device);
  const Index n = left.dim();
  if (right.dim() != n)
    throw ValidationError("device.layers: lead surface dimensions differ (" + std::to_string(n) +
                          " vs " + std::to_string(right.dim()) + ")");
  const Index total = n * layered.layers;
  DeviceSpec dev;
  dev.h = CMatrix::Zero(total, total);
  // Layer i+1 lies one period deeper into the left lead's frame than layer i,
  // hence <i+1|H|i> = h01 of the left lead.
  for (int i = 0; i < layered.layers; ++i) {
    dev.h.block(i * n, i * n, n, n) = left.h00;
    if (i + 1 < layered.layers) {
      dev.h.block((i + 1) * n, i * n, n, n) = left.h01;
      dev.h.block(i * n, (i + 1) * n, n, n) = left.h01.adjoint();
    }
  }
  for (const auto& [site, shift] : layered.onsite) {
    if (site >= total)
      throw ValidationError("device.onsite: site " + std::to_string(site) +
                            " outside the device (size " + std::to_string(total) + ")");
    dev.h(site, site) += shift;
  }
  dev.coupling_left = CMatrix::Zero(n, total);
  dev.coupling_left.leftCols(n) = CMatrix::Identity(n, n);
  dev.coupling_right = CMatrix::Zero(n, total);
  dev.coupling_right.rightCols(n) = CMatrix::Identity(n, n);
  validate_device(dev, n, n);
  return dev;
}

LatticeSpec chain_spec(double t, double eps) {
  LatticeSpec s;
  s.kind = Preset::chain;
  s.params = {{"t", t}, {"eps", eps}};
  return s;
}

LatticeSpec ladder_spec(double t, double t_perp, double t_diag, double eps) {
  LatticeSpec s;
  s.kind = Preset::ladder;
  s.params = {{"t", t}, {"t_perp", t_perp}, {"t_diag", t_diag}, {"eps", eps}};
  return s;
}

LatticeSpec dimer_spec(double t1, double t2, double eps_a, double eps_b, Termination termination) {
  LatticeSpec s;
  s.kind = Preset::dimer_chain;
  s.params = {{"t1", t1}, {"t2", t2}, {"eps_a", eps_a}, {"eps_b", eps_b}};
  s.termination = termination;
  return s;
}

LatticeSpec strip_spec(int width, bool periodic, double t, double eps) {
  LatticeSpec s;
  s.kind = Preset::square_strip;
  s.params = {{"t", t}, {"eps", eps}};
  s.transverse = Transverse{width, periodic};
  return s;
}

LatticeSpec explicit_spec(CMatrix h00, CMatrix h01) {
  LatticeSpec s;
  s.kind = Preset::explicit_blocks;
  s.h00 = std::move(h00);
  s.h01 = std::move(h01);
  return s;
}

}  // namespace embchan
