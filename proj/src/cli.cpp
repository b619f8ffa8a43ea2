#include "embchan/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "embchan/bloch.hpp"
#include "embchan/spectra.hpp"
#include "embchan/transport.hpp"

namespace embchan {

using nlohmann::json;

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot write output file '" + path + "'");
    f << content;
    f.close();
    if (!f) throw ValidationError("failed writing output file '" + path + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw ValidationError("cannot move output into place at '" + path + "': " + ec.message());
  }
}

namespace {

struct Common {
  std::string model_path;
  double emin = -2.5, emax = 2.5;
  int npts = 101;
  std::vector<double> etas;
  std::vector<double> ks;
  std::string out_path;
  std::string format = "csv";
  std::string side = "left";
};

std::string fmt(double v) { return format_number(v); }

std::string fmt_k(const std::optional<double>& k) { return k ? fmt(*k) : ""; }

json json_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json json_k(const std::optional<double>& k) { return k ? json(*k) : json(nullptr); }

json json_matrix(const CMatrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(row);
  }
  return rows;
}

json json_vector(const CVector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back({v(i).real(), v(i).imag()});
  return out;
}

json metadata_json(const SweepMetadata& m) {
  return {{"model_hash", m.model_hash},   {"eta", m.eta},         {"eta_transport", m.eta_transport},
          {"tau_open", m.tau_open},       {"tau_psd", m.tau_psd}, {"tau_prop", m.tau_prop},
          {"version", m.version}};
}

void emit(const Common& c, const std::string& content, std::ostream& out) {
  if (c.out_path.empty())
    out << content;
  else
    write_atomic(c.out_path, content);
}

double single_eta(const Common& c, double fallback) {
  if (c.etas.size() > 1) throw ValidationError("--eta: this command takes a single value");
  const double eta = c.etas.empty() ? fallback : c.etas.front();
  if (!(eta > 0.0)) throw ValidationError("--eta must be positive");
  return eta;
}

int sweep_status(const SweepResult& r, std::ostream& err) {
  int failed = 0;
  for (const auto& rec : r.records)
    if (!rec.ok) {
      if (failed++ < 5)
        err << "point E=" << fmt(rec.energy) << (rec.k ? " k=" + fmt(*rec.k) : "") << " failed: "
            << rec.status << "\n";
    }
  if (failed) err << failed << " sweep point(s) failed; written as nan\n";
  return failed ? 2 : 0;
}

int cmd_channels(const Common& c, std::ostream& out, std::ostream& err) {
  const auto model = load_model(c.model_path);
  SweepOptions opt;
  opt.eta = single_eta(c, kEtaSweep);
  opt.with_transmission = false;
  const Side side = side_from_string(c.side);
  const auto r = sweep(model, linear_grid(c.emin, c.emax, c.npts), c.ks, opt);
  std::string text;
  if (c.format == "csv") {
    text = "E,k,index,lambda,open\n";
    for (const auto& rec : r.records) {
      const RVector& lam = side == Side::left ? rec.lambdas_left : rec.lambdas_right;
      if (!rec.ok) {
        text += fmt(rec.energy) + "," + fmt_k(rec.k) + ",0,nan,0\n";
        continue;
      }
      for (Index i = 0; i < lam.size(); ++i)
        text += fmt(rec.energy) + "," + fmt_k(rec.k) + "," + std::to_string(i) + "," +
                fmt(lam(i)) + "," + (lam(i) < -r.metadata.tau_open ? "1" : "0") + "\n";
    }
  } else {
    json points = json::array();
    for (const auto& rec : r.records) {
      const RVector& lam = side == Side::left ? rec.lambdas_left : rec.lambdas_right;
      json l = json::array();
      for (Index i = 0; i < lam.size(); ++i) l.push_back(lam(i));
      points.push_back({{"E", rec.energy},
                        {"k", json_k(rec.k)},
                        {"lambdas", l},
                        {"n_open", side == Side::left ? rec.n_open_left : rec.n_open_right},
                        {"status", rec.status}});
    }
    text = json{{"metadata", metadata_json(r.metadata)}, {"side", std::string(to_string(side))},
                {"points", points}}
               .dump(2) +
           "\n";
  }
  emit(c, text, out);
  return sweep_status(r, err);
}

int cmd_transmit(const Common& c, std::ostream& out, std::ostream& err) {
  const auto model = load_model(c.model_path);
  SweepOptions opt;
  opt.eta_transport = single_eta(c, kEtaTransport);
  const auto r = sweep(model, linear_grid(c.emin, c.emax, c.npts), c.ks, opt);
  const bool summed = r.k_count() > 1;
  std::string text;
  if (c.format == "csv") {
    text = "E,k,T_trace,T_channel_sum,discrepancy,n_open_l,n_open_r\n";
    for (size_t ie = 0; ie < r.grid.size(); ++ie) {
      Index nl = 0, nr = 0;
      double disc = 0.0;
      for (size_t ik = 0; ik < r.k_count(); ++ik) {
        const auto& rec = r.at(ie, ik);
        text += fmt(rec.energy) + "," + fmt_k(rec.k) + "," + fmt(rec.t_trace) + "," +
                fmt(rec.t_channel_sum) + "," + fmt(rec.discrepancy) + "," +
                std::to_string(rec.n_open_left) + "," + std::to_string(rec.n_open_right) + "\n";
        nl += rec.n_open_left;
        nr += rec.n_open_right;
        disc += rec.discrepancy;
      }
      if (summed)
        text += fmt(r.grid[ie]) + ",sum," + fmt(r.total_trace[ie]) + "," +
                fmt(r.total_channel_sum[ie]) + "," + fmt(disc) + "," + std::to_string(nl) + "," +
                std::to_string(nr) + "\n";
    }
  } else {
    json points = json::array();
    for (const auto& rec : r.records)
      points.push_back({{"E", rec.energy},
                        {"k", json_k(rec.k)},
                        {"T_trace", json_number(rec.t_trace)},
                        {"T_channel_sum", json_number(rec.t_channel_sum)},
                        {"discrepancy", json_number(rec.discrepancy)},
                        {"n_open_l", rec.n_open_left},
                        {"n_open_r", rec.n_open_right},
                        {"status", rec.status}});
    json totals = json::array();
    for (size_t ie = 0; ie < r.grid.size(); ++ie)
      totals.push_back({{"E", r.grid[ie]},
                        {"T_trace", json_number(r.total_trace[ie])},
                        {"T_channel_sum", json_number(r.total_channel_sum[ie])}});
    text = json{{"metadata", metadata_json(r.metadata)}, {"points", points}, {"k_sum", totals}}
               .dump(2) +
           "\n";
  }
  emit(c, text, out);
  return sweep_status(r, err);
}

int cmd_bloch(const Common& c, std::ostream& out, std::ostream& /*err*/) {
  const auto model = load_model(c.model_path);
  const Side side = side_from_string(c.side);
  const auto& spec = side == Side::left ? model.lead_left : model.lead_right;
  const auto grid = linear_grid(c.emin, c.emax, c.npts);
  const auto ks = resolve_k_list(model, c.ks);
  std::vector<BlochSpectrum> spectra(grid.size() * ks.size());
  for (size_t ie = 0; ie < grid.size(); ++ie)
    for (size_t ik = 0; ik < ks.size(); ++ik)
      spectra[ie * ks.size() + ik] = bloch_states(build_lead_blocks(spec, ks[ik]), grid[ie]);
  std::string text;
  if (c.format == "csv") {
    text = "E,k,index,beta_re,beta_im,abs_beta,propagating,velocity,direction\n";
    for (const auto& s : spectra)
      for (size_t i = 0; i < s.states.size(); ++i) {
        const auto& st = s.states[i];
        text += fmt(s.energy) + "," + fmt_k(s.k) + "," + std::to_string(i) + "," +
                fmt(st.beta.real()) + "," + fmt(st.beta.imag()) + "," + fmt(std::abs(st.beta)) +
                "," + (st.propagating ? "1" : "0") + "," +
                (st.propagating ? fmt(st.velocity) : std::string("nan")) + "," +
                std::string(to_string(st.direction)) + "\n";
      }
  } else {
    json points = json::array();
    for (const auto& s : spectra) {
      json states = json::array();
      for (const auto& st : s.states)
        states.push_back({{"beta", {st.beta.real(), st.beta.imag()}},
                          {"phi", json_vector(st.phi)},
                          {"propagating", st.propagating},
                          {"velocity", st.propagating ? json(st.velocity) : json(nullptr)},
                          {"direction", std::string(to_string(st.direction))},
                          {"band_edge", st.band_edge},
                          {"residual", st.residual}});
      points.push_back({{"E", s.energy}, {"k", json_k(s.k)}, {"states", states}});
    }
    text = json{{"side", std::string(to_string(side))}, {"points", points}}.dump(2) + "\n";
  }
  emit(c, text, out);
  return 0;
}

int cmd_scatter(const Common& c, double energy, std::optional<int> channel, std::ostream& out,
                std::ostream& /*err*/) {
  const auto model = load_model(c.model_path);
  const auto ks = resolve_k_list(model, c.ks);
  JunctionOptions jo;
  jo.eta_lead = single_eta(c, kEtaTransport);
  json points = json::array();
  std::string csv = "E,k,channel,site,chi_re,chi_im\n";
  for (const auto& k : ks) {
    const auto p = evaluate_junction(model, energy, k, jo);
    const auto open = p.left.channels.open_indices();
    if (channel && (*channel < 0 || *channel >= static_cast<int>(open.size())))
      throw ValidationError("--channel: left lead has " + std::to_string(open.size()) +
                            " open channel(s) at this energy");
    json waves = json::array();
    for (size_t m = 0; m < open.size(); ++m) {
      if (channel && static_cast<int>(m) != *channel) continue;
      const CVector u = p.left.channels.unit_flux(open[m]);
      const CVector chi = scattered_wave(p.green, p.left.im, u);
      const double t_flux = flux(p.device.coupling_right * chi, p.right.im);
      const double t_row = p.transmission.t_squared.rows() > 0
                               ? p.transmission.t_squared.row(static_cast<Index>(m)).sum()
                               : 0.0;
      waves.push_back({{"channel", m},
                       {"lambda", p.left.channels.lambdas(open[m])},
                       {"chi", json_vector(chi)},
                       {"T_flux", t_flux},
                       {"T_t_matrix", t_row}});
      for (Index s = 0; s < chi.size(); ++s)
        csv += fmt(energy) + "," + fmt_k(k) + "," + std::to_string(m) + "," + std::to_string(s) +
               "," + fmt(chi(s).real()) + "," + fmt(chi(s).imag()) + "\n";
    }
    points.push_back({{"E", energy},
                      {"k", json_k(k)},
                      {"t", json_matrix(p.transmission.t)},
                      {"T_trace", p.transmission.total_trace},
                      {"T_channel_sum", p.transmission.total_channel_sum},
                      {"waves", waves}});
  }
  emit(c, c.format == "csv" ? csv : json{{"points", points}}.dump(2) + "\n", out);
  return 0;
}

int cmd_fit_edge(const Common& c, double e0, double dmin, double dmax, int per_side, Index rank,
                 const std::string& edge_side, std::ostream& out, std::ostream& err) {
  const auto model = load_model(c.model_path);
  SweepOptions opt;
  opt.eta = single_eta(c, kEtaSweep);
  opt.with_transmission = false;
  const auto r = sweep(model, edge_grid(e0, {dmin, dmax}, per_side), c.ks, opt);
  EdgeFitOptions fo;
  fo.lead = side_from_string(c.side);
  fo.rank = rank;
  if (edge_side == "above") fo.side = EdgeSide::above;
  else if (edge_side == "below") fo.side = EdgeSide::below;
  else if (edge_side != "auto") throw ValidationError("--edge-side: expected above, below or auto");
  const int status = sweep_status(r, err);
  const auto fit = fit_band_edge(r, e0, {dmin, dmax}, fo);
  std::string text;
  if (c.format == "csv") {
    text = "e0,side,delta_min,delta_max,exponent,stderr,points\n" + fmt(fit.e0) + "," +
           std::string(to_string(fit.side)) + "," + fmt(dmin) + "," + fmt(dmax) + "," +
           fmt(fit.exponent) + "," + fmt(fit.stderr_) + "," + std::to_string(fit.points) + "\n";
  } else {
    text = json{{"metadata", metadata_json(r.metadata)},
                {"e0", fit.e0},
                {"side", std::string(to_string(fit.side))},
                {"window", {dmin, dmax}},
                {"exponent", fit.exponent},
                {"stderr", fit.stderr_},
                {"points", fit.points}}
               .dump(2) +
           "\n";
  }
  emit(c, text, out);
  return status;
}

int cmd_peaks(const Common& c, std::ostream& out, std::ostream& /*err*/) {
  const auto model = load_model(c.model_path);
  if (c.ks.size() > 1) throw ValidationError("peaks: give at most one --k");
  PeakOptions po;
  if (!c.ks.empty()) po.k = c.ks.front();
  std::vector<double> etas = c.etas;
  if (etas.empty()) etas = {1e-4, 1e-3};
  const auto report = detect_peaks(model, linear_grid(c.emin, c.emax, c.npts), etas, po);
  std::string text;
  if (c.format == "csv") {
    text = "E,side,eta,height,width,background\n";
    for (const auto& p : report.peaks)
      text += fmt(p.energy) + "," + std::string(to_string(p.side)) + "," + fmt(p.eta) + "," +
              fmt(p.height) + "," + fmt(p.width) + "," + fmt(p.background) + "\n";
  } else {
    json peaks = json::array(), scaling = json::array();
    for (const auto& p : report.peaks)
      peaks.push_back({{"E", p.energy},
                       {"side", std::string(to_string(p.side))},
                       {"eta", p.eta},
                       {"height", p.height},
                       {"width", json_number(p.width)},
                       {"background", json_number(p.background)}});
    for (const auto& s : report.scaling)
      scaling.push_back({{"E", s.energy},
                         {"side", std::string(to_string(s.side))},
                         {"eta", s.eta},
                         {"eta_ratio", s.eta_ratio},
                         {"height_ratio", s.height_ratio},
                         {"delta_like", s.delta_like},
                         {"T", json_number(s.transmission)}});
    text = json{{"peaks", peaks}, {"scaling", scaling}}.dump(2) + "\n";
  }
  emit(c, text, out);
  return 0;
}

// Invariant checks at a handful of energies. Each check is a named value
// compared against a bound.
int cmd_validate(const Common& c, bool range_given, std::ostream& out, std::ostream& err) {
  const auto model = load_model(c.model_path);
  const auto ks = resolve_k_list(model, c.ks);
  double lo = c.emin, hi = c.emax;
  if (!range_given) {
    const auto b = build_lead_blocks(model.lead_left, ks.front());
    const double r = b.h00.operatorNorm() + 2.0 * b.h01.operatorNorm();
    lo = -r;
    hi = r;
  }
  const double fractions[] = {0.137, 0.311, 0.502, 0.683, 0.871};
  struct Check {
    std::string name;
    double e;
    std::optional<double> k;
    double value, bound;
  };
  std::vector<Check> checks;
  int errors = 0;
  for (double f : fractions) {
    const double e = lo + (hi - lo) * f;
    for (const auto& k : ks) {
      auto add = [&](const std::string& name, double value, double bound) {
        checks.push_back({name, e, k, value, bound});
      };
      try {
        const auto p = evaluate_junction(model, e, k);
        for (const LeadPoint* lead : {&p.left, &p.right}) {
          const std::string tag = std::string(to_string(lead->sigma.side)) + ".";
          const auto& b = lead->blocks;
          const Index n = b.dim();
          const auto point = analyze_lead(b, e, kEtaPoint, lead->sigma.side);
          const CMatrix g = solve_surface_green(b, e, kEtaPoint).g;
          add(tag + "identity", max_abs(CMatrix((cplx(e, kEtaPoint) * CMatrix::Identity(n, n) -
                                                 b.h00 - b.h01 * g * b.h10()) * g -
                                                CMatrix::Identity(n, n))),
              1e-9);
          add(tag + "nsd", point.channels.lambdas.maxCoeff(), kTauPsd);
          if (max_abs(CMatrix(b.h00.imag())) == 0.0 && max_abs(CMatrix(b.h01.imag())) == 0.0)
            add(tag + "transpose", max_abs(CMatrix(point.sigma.sigma - point.sigma.sigma.transpose())),
                1e-10);
          double flux_err = 0.0;
          for (Index i = 0; i < point.channels.size(); ++i)
            flux_err = std::max(flux_err, std::abs(flux(point.channels.vectors.col(i), point.im) +
                                                   2.0 * point.channels.lambdas(i)));
          add(tag + "flux_law", flux_err, 1e-10);
          add(tag + "reconstruction",
              max_abs(CMatrix(reconstruct_im_sigma(lead->channels, Expansion::unit_flux_open) -
                              lead->im.matrix)),
              1e-10);
          const auto spectrum = bloch_states(b, e);
          add(tag + "count_mismatch",
              std::abs(static_cast<double>(spectrum.count(Direction::outgoing) -
                                           lead->channels.open_count())),
              0.0);
          if (lead->channels.open_count() > 0 && !spectrum.has_band_edge()) {
            const CMatrix phis = unit_flux_outgoing(spectrum, lead->im);
            const CMatrix fm = bloch_flux_matrix(phis, lead->im);
            add(tag + "flux_matrix",
                max_abs(CMatrix(fm + 0.5 * CMatrix::Identity(fm.rows(), fm.cols()))), 1e-9);
            add(tag + "unitarity", channel_transform(phis, lead->channels).unitarity_residual,
                1e-8);
          }
        }
        add("device.identity", p.green.residual, 1e-9);
        add("transmission.discrepancy", p.transmission.discrepancy, 1e-9);
        add("transmission.bound",
            p.transmission.total_trace -
                static_cast<double>(std::min(p.transmission.n_open_left,
                                             p.transmission.n_open_right)),
            1e-8);
      } catch (const NumericalError& ex) {
        ++errors;
        err << "E=" << fmt(e) << (k ? " k=" + fmt(*k) : "") << ": " << ex.what() << "\n";
      }
    }
  }
  int failed = errors;
  std::string text;
  json list = json::array();
  for (const auto& ch : checks) {
    const bool pass = ch.value <= ch.bound;
    if (!pass) ++failed;
    if (c.format == "csv") {
      text += std::string(pass ? "PASS " : "FAIL ") + ch.name + " E=" + fmt(ch.e) +
              (ch.k ? " k=" + fmt(*ch.k) : "") + " value=" + fmt(ch.value) +
              " bound=" + fmt(ch.bound) + "\n";
    } else {
      list.push_back({{"check", ch.name},
                      {"E", ch.e},
                      {"k", json_k(ch.k)},
                      {"value", ch.value},
                      {"bound", ch.bound},
                      {"pass", pass}});
    }
  }
  if (c.format == "csv")
    text += std::to_string(checks.size() - static_cast<size_t>(failed - errors)) + "/" +
            std::to_string(checks.size()) + " checks passed, " + std::to_string(errors) +
            " point(s) failed to evaluate\n";
  else
    text = json{{"model_hash", model_hash(model)}, {"checks", list}, {"errors", errors}}.dump(2) +
           "\n";
  emit(c, text, out);
  return failed ? 2 : 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Embedding-potential channel analysis of tight-binding junctions", "embchan"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common c;

  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--model", c.model_path, "Model JSON file")->required();
    sub->add_option("--out", c.out_path, "Output file (default: stdout)");
    sub->add_option("--format", c.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--k", c.ks, "Transverse momentum (repeatable)");
    sub->add_option("--eta", c.etas, "Imaginary energy");
  };
  auto add_grid = [&](CLI::App* sub) {
    sub->add_option("--emin", c.emin, "Lowest energy");
    sub->add_option("--emax", c.emax, "Highest energy");
    sub->add_option("--npts", c.npts, "Number of energies");
  };
  auto add_side = [&](CLI::App* sub) {
    sub->add_option("--side", c.side, "Lead")->check(CLI::IsMember({"left", "right"}));
  };

  auto* channels = app.add_subcommand("channels", "Channel eigenvalues over an energy grid");
  add_model(channels);
  add_grid(channels);
  add_side(channels);

  auto* bloch = app.add_subcommand("bloch", "Bloch factors and velocities of a lead");
  add_model(bloch);
  add_grid(bloch);
  add_side(bloch);

  auto* transmit = app.add_subcommand("transmit", "Transmission by channel sum and trace");
  add_model(transmit);
  add_grid(transmit);

  double energy = 0.0;
  int channel_index = -1;
  auto* scatter = app.add_subcommand("scatter", "Scattered wave for each incident channel");
  add_model(scatter);
  scatter->add_option("--energy", energy, "Energy")->required();
  scatter->add_option("--channel", channel_index, "Incident open channel (default: all)");

  double e0 = 0.0, dmin = 1e-4, dmax = 1e-2;
  int per_side = 40;
  Index rank = 0;
  std::string edge_side = "auto";
  auto* fit = app.add_subcommand("fit-edge", "Band-edge exponent of a channel eigenvalue");
  add_model(fit);
  add_side(fit);
  fit->add_option("--e0", e0, "Band-edge energy")->required();
  fit->add_option("--dmin", dmin, "Smallest |E - e0| in the fit");
  fit->add_option("--dmax", dmax, "Largest |E - e0| in the fit");
  fit->add_option("--npts", per_side, "Points on each side of e0");
  fit->add_option("--rank", rank, "Eigenvalue rank (0: most negative)");
  fit->add_option("--edge-side", edge_side, "above, below or auto");

  auto* peaks = app.add_subcommand("peaks", "Delta-peak search versus imaginary energy");
  add_model(peaks);
  add_grid(peaks);

  auto* validate = app.add_subcommand("validate", "Check invariants at five energies");
  add_model(validate);
  add_grid(validate);

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*channels) return cmd_channels(c, out, err);
    if (*bloch) return cmd_bloch(c, out, err);
    if (*transmit) return cmd_transmit(c, out, err);
    if (*scatter)
      return cmd_scatter(c, energy,
                         channel_index >= 0 ? std::optional<int>(channel_index) : std::nullopt, out,
                         err);
    if (*fit) return cmd_fit_edge(c, e0, dmin, dmax, per_side, rank, edge_side, out, err);
    if (*peaks) return cmd_peaks(c, out, err);
    if (*validate)
      return cmd_validate(c, validate->count("--emin") + validate->count("--emax") > 0, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace embchan
