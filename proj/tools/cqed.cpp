// cqed - command line front end. Reports go to stdout (or --out) as JSON, a
// short summary to stderr.
//
// Exit codes: 0 success, 2 input or validation error, 3 analysis did not converge.
// CQED_SEED sets the default RNG seed.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cqed/dynamics.hpp"
#include "cqed/errors.hpp"
#include "cqed/fitting.hpp"
#include "cqed/io.hpp"
#include "cqed/montecarlo.hpp"
#include "cqed/purcell.hpp"
#include "cqed/report.hpp"
#include "cqed/spectra.hpp"

using namespace cqed;
using report::AnalysisReport;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDefaultSeed = 20240101;
constexpr int kExitInput = 2;
constexpr int kExitNotConverged = 3;

std::uint64_t default_seed() {
  const char* env = std::getenv("CQED_SEED");
  if (!env || !*env) return kDefaultSeed;
  char* end = nullptr;
  const auto v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw ValidationError({"CQED_SEED must be an unsigned integer"});
  return v;
}

std::vector<double> parse_list(const std::string& text, std::size_t n, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0' || !std::isfinite(v))
      throw ValidationError({flag + ": '" + item + "' is not a number"});
    out.push_back(v);
  }
  if (out.size() != n)
    throw ValidationError({flag + " expects " + std::to_string(n) + " comma-separated values"});
  return out;
}

Vec3 parse_vec3(const std::string& s, const std::string& flag) {
  const auto v = parse_list(s, 3, flag);
  return {v[0], v[1], v[2]};
}

std::string scenario_path(const std::string& name) {
  if (std::filesystem::exists(name)) return name;
  const auto p = std::filesystem::path(CQED_DATA_DIR) / "scenarios" / (name + ".json");
  if (!std::filesystem::exists(p)) throw ValidationError({"unknown scenario '" + name + "'"});
  return p.string();
}

json read_json(const std::string& path) {
  const auto text = io::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto end = text.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(e.byte, text.size()));
    throw ParseError(path, 1 + static_cast<std::size_t>(std::count(text.begin(), end, '\n')), "invalid JSON");
  }
}

json fit_quantity(double v, double s, const std::string& units) {
  return {{"value", v}, {"sigma", std::isfinite(s) ? json(s) : json(nullptr)}, {"units", units}};
}

struct Output {
  std::string out;
  std::string emit_curves;
};

void emit(const AnalysisReport& r, const Output& o) {
  const auto text = r.to_json().dump(2) + "\n";
  if (o.out.empty()) std::cout << text;
  else io::write_text(o.out, text);
}

// ---------------------------------------------------------------------------
// purcell

struct PurcellFlags {
  std::string scenario;
  double q = 0, vmode = 0, lambda_c = 0, lambda_i = 0, f_phc = 1, r_r = 1;
  std::string dipole, field_axis, fieldmap, pos, budget;
  CLI::App* app = nullptr;
  bool given(const char* flag) const { return app->count(flag) > 0; }
};

int cmd_purcell(const PurcellFlags& f, const Output& out) {
  AnalysisReport r("purcell");
  json sc = json::object();
  if (!f.scenario.empty()) {
    const auto path = scenario_path(f.scenario);
    sc = read_json(path);
    r.input_file("scenario", path);
  }
  const json cav = sc.value("cavity", json::object());
  const json emi = sc.value("emitter", json::object());

  auto pick = [&](const char* flag, double flag_value, const json& obj, const char* key) -> std::optional<double> {
    if (f.given(flag)) return flag_value;
    if (obj.contains(key)) return obj[key].get<double>();
    return std::nullopt;
  };
  const auto q = pick("--q", f.q, cav, "q_factor");
  const auto vmode = pick("--vmode", f.vmode, cav, "mode_volume");
  const auto lambda_c = pick("--lambda-c", f.lambda_c, cav, "lambda_c");
  auto lambda_i = pick("--lambda-i", f.lambda_i, emi, "lambda_i");
  const double f_phc = pick("--f-phc", f.f_phc, sc, "f_phc").value_or(1.0);
  r.input("f_phc", f_phc);

  std::optional<Vec3> dipole, field_axis;
  if (f.given("--dipole")) dipole = parse_vec3(f.dipole, "--dipole");
  else if (emi.contains("dipole_axis")) dipole = io::vec3_from_json(emi["dipole_axis"]);
  if (f.given("--field-axis")) field_axis = parse_vec3(f.field_axis, "--field-axis");
  else if (sc.contains("field_axis")) field_axis = io::vec3_from_json(sc["field_axis"]);

  const bool cavity = q || vmode || lambda_c;
  std::optional<double> f_cav;
  if (cavity) {
    std::vector<std::string> missing;
    if (!q) missing.push_back("--q is required with a cavity");
    if (!vmode) missing.push_back("--vmode is required with a cavity");
    if (!lambda_c) missing.push_back("--lambda-c is required with a cavity");
    if (!missing.empty()) throw ValidationError(missing);
    if (!lambda_i) lambda_i = *lambda_c;
    const CavityMode mode({*lambda_c, *q, *vmode, 0.0, nullptr, cav.value("label", "")});
    EmitterLine::Fields ef;
    ef.lambda_i = *lambda_i;
    ef.linewidth = emi.value("linewidth", 0.0);
    if (dipole) ef.dipole_axis = *dipole;
    const EmitterLine line(ef);
    r.input("cavity", io::to_json(mode));
    r.input("emitter", io::to_json(line));

    const double fp = purcell::ideal_purcell(mode);
    const auto sp = purcell::spectral_overlap(line, mode);
    if (sp.linewidth_warning) r.warn("emitter linewidth exceeds the cavity linewidth; R_lambda is approximate");
    double r_mu = 1.0;
    if (dipole && field_axis) {
      r_mu = purcell::orientation_overlap(*dipole, *field_axis);
      r.input("dipole", io::vec_to_json(*dipole));
      r.input("field_axis", io::vec_to_json(*field_axis));
    } else {
      r.warn("dipole or field axis not given; R_mu = 1");
    }
    double r_r = 1.0;
    if (!f.fieldmap.empty()) {
      if (!f.given("--pos")) throw ValidationError({"--fieldmap needs --pos x,y"});
      const auto xy = parse_list(f.pos, 2, "--pos");
      r.input_file("fieldmap", f.fieldmap);
      r.input("pos", xy);
      r_r = purcell::spatial_overlap(io::read_fieldmap_csv(f.fieldmap), {xy[0], xy[1]});
    } else if (f.given("--r-r")) {
      r_r = f.r_r;
    } else if (sc.contains("r_r")) {
      r_r = sc["r_r"].get<double>();
    } else {
      r.warn("no field map or --r-r; R_r = 1");
    }
    r.input("r_r", r_r);
    f_cav = purcell::effective_purcell(fp, {sp.r_lambda, r_mu, r_r});
    r.result("F_P", fp, "dimensionless");
    r.result("R_lambda", sp.r_lambda, "dimensionless");
    r.result("R_mu", r_mu, "dimensionless");
    r.result("R_r", r_r, "dimensionless");
    r.result("F_cav", *f_cav, "dimensionless");
    r.result("I_PL", purcell::pl_enhancement(*f_cav, f_phc), "dimensionless");
    std::cerr << "F_P " << fp << "  F_cav " << *f_cav << "  I_PL " << purcell::pl_enhancement(*f_cav, f_phc)
              << "\n";
  }

  std::optional<RadiativeBudget> budget;
  if (!f.budget.empty()) {
    budget = io::read_budget_json(f.budget);
    r.input_file("budget", f.budget);
  } else if (sc.contains("budget")) {
    budget = io::budget_from_json(sc["budget"]);
  }
  if (budget) {
    r.input("budget_rates", io::to_json(*budget));
    const auto bulk = purcell::modified_budget(*budget, PhotonicEnvironment::bulk());
    r.result("rates_bulk", io::to_json(bulk));
    r.result("eta_qe_bulk", bulk.eta_qe, "dimensionless");
    if (f_phc != 1.0 || cavity) {
      const auto off = purcell::modified_budget(*budget, PhotonicEnvironment::bandgap_only(f_phc));
      r.result("rates_off", io::to_json(off));
      r.result("eta_qe_off", off.eta_qe, "dimensionless");
    }
    if (f_cav) {
      const auto on = purcell::modified_budget(*budget, PhotonicEnvironment::cavity_coupled(*f_cav, f_phc));
      r.result("rates_on", io::to_json(on));
      r.result("eta_qe_on", on.eta_qe, "dimensionless");
      const auto beta = purcell::mode_emission_fractions(on);
      r.result("beta_total", beta.beta_total, "dimensionless");
      r.result("beta_radiative", beta.beta_radiative, "dimensionless");
    }
    std::cerr << "bulk lifetime " << lifetime_from_rate(bulk.gamma_total) * 1e9 << " ns, eta_qe " << bulk.eta_qe
              << "\n";
  }
  if (sc.contains("tau_bulk") && sc.contains("tau_phc")) {
    const auto inh = purcell::infer_bulk_qe_from_inhibition(sc["tau_bulk"].get<double>(),
                                                            sc["tau_phc"].get<double>(), f_phc);
    r.result("eta_qe_bulk_inferred", inh.eta_bulk, "dimensionless");
    r.result("eta_qe_phc_inferred", inh.eta_phc, "dimensionless");
    r.result("lifetime_ratio", inh.lifetime_ratio, "dimensionless");
  }
  if (!cavity && !budget) throw ValidationError({"nothing to compute: give a cavity (--q ...) or --budget"});
  emit(r, out);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateFlags {
  std::string rates, budget, out_stream;
  double duration = 1e-3, jitter = 0.0, det_eff = 1.0;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateFlags& f, const Output& out) {
  AnalysisReport r("simulate");
  const auto k = parse_list(f.rates, 4, "--rates");
  const ThreeLevelRates rates(k[0], k[1], k[2], k[3]);
  montecarlo::EmissionSplit split;
  if (!f.budget.empty()) {
    split = montecarlo::EmissionSplit::from_budget(io::read_budget_json(f.budget));
    r.input_file("budget", f.budget);
  }
  r.input("rates", io::to_json(rates));
  r.input("duration", {{"value", f.duration}, {"units", "s"}});
  r.input("jitter", {{"value", f.jitter}, {"units", "s"}});
  r.input("det_eff", f.det_eff);
  r.input("split", {{"eta_qe", split.eta_qe}, {"zpl_fraction", split.zpl_fraction}});
  r.seed(f.seed);

  auto stream = montecarlo::simulate_stream(rates, split, f.duration, f.det_eff, f.seed);
  if (f.jitter > 0) {
    r.seed(f.seed + 1);
    stream = montecarlo::apply_jitter(stream, f.jitter, f.seed + 1);
  }
  if (stream.empty()) r.warn(f.det_eff == 0 ? "det-eff 0: empty stream" : "no photons detected");
  if (!f.out_stream.empty()) {
    io::write_text(f.out_stream, io::stream_csv(stream));
    r.input("out_stream", f.out_stream);
  }
  const double n = static_cast<double>(stream.size());
  const double predicted = montecarlo::predicted_detected_rate(rates, split, f.det_eff);
  const double sigma = std::sqrt(std::max(predicted * f.duration, 1.0)) / f.duration;
  r.result("photon_count", n, "photons");
  r.result("detected_rate", n / f.duration, "Hz", std::sqrt(std::max(n, 1.0)) / f.duration);
  r.result("predicted_rate", predicted, "Hz");
  r.result("rate_deviation", (n / f.duration - predicted) / sigma, "standard deviations");
  std::cerr << stream.size() << " photons, " << n / f.duration << " Hz (predicted " << predicted << " Hz)\n";
  emit(r, out);
  return 0;
}

// ---------------------------------------------------------------------------
// g2

struct G2Flags {
  std::string input, stream, out_hist, mode = "full";
  double irf = 0, tau1 = 0, tau2 = 0, a = 0, bin_width = 50e-12, window = 20e-9;
  std::uint64_t seed = 0;
  CLI::App* app = nullptr;
};

void emit_g2_curves(const std::string& path, const G2Curve& c, const G2Params& p, double irf) {
  std::string text = "tau_s,g2,model\n";
  for (std::size_t i = 0; i < c.size(); ++i)
    text += io::format_double(c.delays()[i]) + "," + io::format_double(c.values()[i]) + "," +
            io::format_double(fitting::g2_model(c.delays()[i], p.a(), p.tau1(), p.tau2(), irf)) + "\n";
  io::write_text(path, text);
}

int cmd_g2_fit(const G2Flags& f, const Output& out) {
  AnalysisReport r("g2 fit");
  r.input_file("input", f.input);
  const auto curve = io::read_g2_csv(f.input);
  const bool user_init = f.app->count("--tau1") + f.app->count("--tau2") + f.app->count("--a") > 0;
  if (user_init && !(f.app->count("--tau1") && f.app->count("--tau2") && f.app->count("--a")))
    throw ValidationError({"--tau1, --tau2 and --a must be given together"});
  const G2Params init = user_init ? G2Params(f.tau1, f.tau2, f.a) : fitting::estimate_g2_init(curve);
  r.input("init", io::to_json(init));
  std::optional<double> irf;
  if (f.irf > 0) {
    irf = fitting::pair_irf_sigma(f.irf);
    r.input("irf_per_detector", {{"value", f.irf}, {"units", "s"}});
  }
  const auto fit = fitting::fit_g2(curve, init, irf);
  r.result("tau1", fit_quantity(fit.value("tau1"), fit.sigma("tau1"), "s"));
  r.result("tau2", fit_quantity(fit.value("tau2"), fit.sigma("tau2"), "s"));
  r.result("a", fit_quantity(fit.value("a"), fit.sigma("a"), "dimensionless"));
  auto fj = io::to_json(fit);
  fj["units"] = "a: dimensionless, tau1 and tau2: s";
  r.result("fit", fj);
  for (const auto& w : fit.warnings) r.warn(w);
  r.converged(fit.converged);
  if (!out.emit_curves.empty()) {
    emit_g2_curves(out.emit_curves, curve, G2Params(fit.value("tau1"), fit.value("tau2"), fit.value("a")),
                   irf.value_or(0.0));
    r.input("emit_curves", out.emit_curves);
  }
  std::cerr << "tau1 " << fit.value("tau1") * 1e9 << " ns, tau2 " << fit.value("tau2") * 1e9 << " ns, a "
            << fit.value("a") << ", reduced chi2 " << fit.reduced_chi2 << (fit.converged ? "" : " (not converged)")
            << "\n";
  emit(r, out);
  return fit.converged ? 0 : kExitNotConverged;
}

int cmd_g2_correlate(const G2Flags& f, const Output& out) {
  AnalysisReport r("g2 correlate");
  r.input_file("stream", f.stream);
  const auto stream = io::read_stream_csv(f.stream);
  const auto mode = montecarlo::correlation_mode_from_string(f.mode);
  const std::uint64_t split_seed = f.app->count("--seed") ? f.seed : stream.seed();
  r.input("bin_width", {{"value", f.bin_width}, {"units", "s"}});
  r.input("window", {{"value", f.window}, {"units", "s"}});
  r.input("mode", montecarlo::to_string(mode));
  if (mode == montecarlo::CorrelationMode::StartStop) r.seed(split_seed);
  const auto h = montecarlo::correlate(stream, f.bin_width, f.window, mode, split_seed);
  if (!f.out_hist.empty()) {
    io::write_text(f.out_hist, io::histogram_csv(h));
    r.input("out_hist", f.out_hist);
  }
  const auto c = h.bin_centers();
  const auto g = h.g2();
  const auto s = h.sigma();
  std::size_t zero = 0;
  double chi2 = 0, mean = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (std::abs(c[i]) < std::abs(c[zero])) zero = i;
    chi2 += std::pow((g[i] - 1) / s[i], 2);
    mean += g[i];
  }
  mean /= static_cast<double>(c.size());
  r.result("photon_count", static_cast<double>(stream.size()), "photons");
  r.result("bins", static_cast<double>(c.size()), "bins");
  r.result("g2_zero", g[zero], "dimensionless", s[zero]);
  r.result("g2_mean", mean, "dimensionless");
  r.result("flat_chi2_per_bin", chi2 / static_cast<double>(c.size()), "dimensionless");
  std::cerr << c.size() << " bins, g2(0) " << g[zero] << " +- " << s[zero] << ", chi2/bin against 1: "
            << chi2 / static_cast<double>(c.size()) << "\n";
  emit(r, out);
  return 0;
}

int cmd_g2_sweep(const G2Flags& f, const Output& out) {
  AnalysisReport r("g2 sweep");
  r.input_file("input", f.input);
  const auto sweep = io::read_power_sweep_csv(f.input);
  const auto ext = dynamics::extrapolate_zero_power(sweep);
  const auto& fit = ext.fit;
  const auto i21 = static_cast<Eigen::Index>(fit.index("k21"));
  const auto i23 = static_cast<Eigen::Index>(fit.index("k23"));
  const double var = fit.covariance(i21, i21) + fit.covariance(i23, i23) + 2 * fit.covariance(i21, i23);
  const double tau_sigma = ext.tau1_zero * ext.tau1_zero * std::sqrt(std::max(var, 0.0));
  r.result("tau1_zero", fit_quantity(ext.tau1_zero, tau_sigma, "s"));
  r.result("k21", fit_quantity(fit.value("k21"), fit.sigma("k21"), "Hz"));
  r.result("k23", fit_quantity(fit.value("k23"), fit.sigma("k23"), "Hz"));
  r.result("k31", fit_quantity(fit.value("k31"), fit.sigma("k31"), "Hz"));
  r.result("pump_sigma", fit_quantity(fit.value("sigma"), fit.sigma("sigma"), "Hz/mW"));
  auto fj = io::to_json(fit);
  fj["units"] = "k21, k23, k31: Hz; sigma: Hz/mW";
  r.result("fit", fj);
  for (const auto& w : fit.warnings) r.warn(w);
  r.converged(fit.converged);
  if (!out.emit_curves.empty()) {
    const auto model = dynamics::power_sweep(ext.rates_fit, dynamics::PumpModel(ext.sigma), sweep.powers());
    std::string text = "power_mW,tau1_ns,tau1_model_ns,tau2_ns,tau2_model_ns,a,a_model\n";
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      const auto& d = sweep.params()[i];
      const auto& m = model.params()[i];
      text += io::format_double(sweep.powers()[i]) + "," + io::format_double(d.tau1() * 1e9) + "," +
              io::format_double(m.tau1() * 1e9) + "," + io::format_double(d.tau2() * 1e9) + "," +
              io::format_double(m.tau2() * 1e9) + "," + io::format_double(d.a()) + "," +
              io::format_double(m.a()) + "\n";
    }
    io::write_text(out.emit_curves, text);
    r.input("emit_curves", out.emit_curves);
  }
  std::cerr << "tau1 at zero power " << ext.tau1_zero * 1e9 << " +- " << tau_sigma * 1e9 << " ns\n";
  emit(r, out);
  return fit.converged ? 0 : kExitNotConverged;
}

// ---------------------------------------------------------------------------
// spectra

struct SpectraFlags {
  std::string input, manifest;
  int peaks = 1;
  double lo = 0, hi = 0, lambda_i = 0, linewidth = 0;
  CLI::App* app = nullptr;
};

json peak_json(const fitting::LorentzianFit::Peak& p) {
  return {{"units", "nm (center, fwhm); counts (amplitude); counts nm (area)"},
          {"center", p.center}, {"center_sigma", p.center_sigma},
          {"fwhm", p.fwhm}, {"fwhm_sigma", p.fwhm_sigma},
          {"amplitude", p.amplitude}, {"amplitude_sigma", p.amplitude_sigma},
          {"area", p.area}, {"area_sigma", p.area_sigma},
          {"q", p.q}, {"q_sigma", p.q_sigma}};
}

int cmd_spectra_fit(const SpectraFlags& f, const Output& out) {
  AnalysisReport r("spectra fit");
  r.input_file("input", f.input);
  r.input("peaks", f.peaks);
  if (f.peaks < 1) throw ValidationError({"--peaks must be at least 1"});
  const auto spec = io::read_spectrum_csv(f.input);
  const bool window = f.app->count("--lo") || f.app->count("--hi");
  const double lo = f.app->count("--lo") ? f.lo : spec.wavelengths().front();
  const double hi = f.app->count("--hi") ? f.hi : spec.wavelengths().back();
  if (window) r.input("window", {{"lo", lo}, {"hi", hi}, {"units", "nm"}});
  const auto n = static_cast<std::size_t>(f.peaks);
  const auto fit = window ? fitting::fit_lorentzians(spec, n, {}, lo, hi) : fitting::fit_lorentzians(spec, n);
  json peaks = json::array();
  for (std::size_t k = 0; k < fit.peaks.size(); ++k) {
    r.result("peak_" + std::to_string(k), peak_json(fit.peaks[k]));
    std::cerr << "peak " << k << ": " << fit.peaks[k].center << " nm, fwhm " << fit.peaks[k].fwhm << " nm, Q "
              << fit.peaks[k].q << "\n";
  }
  r.result("baseline", fit.baseline, "counts", fit.baseline_sigma);
  auto fj = io::to_json(fit.fit);
  fj["units"] = "nm (center_k, fwhm_k); counts (amplitude_k, baseline)";
  r.result("fit", fj);
  for (const auto& w : fit.fit.warnings) r.warn(w);
  r.converged(fit.fit.converged);
  if (!out.emit_curves.empty()) {
    std::string text = "wavelength_nm,counts,model\n";
    const std::vector<double> p(fit.fit.values.data(), fit.fit.values.data() + fit.fit.values.size());
    for (std::size_t i = 0; i < spec.size(); ++i)
      text += io::format_double(spec.wavelengths()[i]) + "," + io::format_double(spec.intensities()[i]) + "," +
              io::format_double(fitting::lorentzian_sum(spec.wavelengths()[i], p)) + "\n";
    io::write_text(out.emit_curves, text);
    r.input("emit_curves", out.emit_curves);
  }
  emit(r, out);
  return fit.fit.converged ? 0 : kExitNotConverged;
}

struct Loaded {
  io::TuningManifest manifest;
  spectra::TuningSeries series;
};

Loaded load_series(const SpectraFlags& f, AnalysisReport& r) {
  r.input_file("manifest", f.manifest);
  auto m = io::read_tuning_manifest(f.manifest);
  for (std::size_t i = 0; i < m.files.size(); ++i) r.input_file("step_" + std::to_string(m.steps[i].index), m.files[i]);
  if (m.seeds.empty()) throw ValidationError({"manifest lists no seed peaks"});
  json seeds = json::array();
  for (const auto& s : m.seeds) seeds.push_back({{"label", s.label}, {"center", s.center}, {"fwhm", s.fwhm}});
  r.input("seeds", seeds);
  auto series = spectra::track_modes(m.steps, m.seeds);
  return {std::move(m), std::move(series)};
}

std::optional<EmitterLine> line_from(const SpectraFlags& f, const io::TuningManifest& m) {
  if (f.app->count("--lambda-i")) {
    EmitterLine::Fields lf;
    lf.lambda_i = f.lambda_i;
    lf.linewidth = f.app->count("--linewidth") ? f.linewidth : (m.line ? m.line->linewidth() : 0.0);
    return EmitterLine(lf);
  }
  return m.line;
}

int cmd_spectra_track(const SpectraFlags& f, const Output& out) {
  AnalysisReport r("spectra track");
  const auto [m, series] = load_series(f, r);
  const auto line = line_from(f, m);
  if (line) r.input("line", io::to_json(*line));
  std::string curves = "step,label,center_nm,center_sigma_nm,fwhm_nm\n";
  for (const auto& mode : series.tracked_modes()) {
    auto j = io::to_json(mode);
    if (line) {
      const auto res = spectra::find_resonance(mode, *line);
      json ov = json::array();
      for (const auto& o : res.overlaps) ov.push_back({{"step", o.step}, {"r_lambda", o.r_lambda}});
      j["resonance"] = {{"found", res.found}, {"step", res.step}, {"detuning", res.detuning},
                        {"detuning_linewidths", res.detuning_linewidths}, {"r_lambda", ov}};
    }
    r.result("mode_" + mode.label, j);
    r.result("rate_" + mode.label, mode.mean_rate, "nm/step", mode.mean_rate_sigma);
    if (!mode.monotonic) r.warn("mode " + mode.label + " is not monotonically blue-shifting");
    if (mode.terminated_at) r.warn("mode " + mode.label + " lost at step " + std::to_string(*mode.terminated_at));
    for (const auto& p : mode.points)
      curves += std::to_string(p.step) + "," + mode.label + "," + io::format_double(p.center) + "," +
                io::format_double(p.center_sigma) + "," + io::format_double(p.fwhm) + "\n";
    std::cerr << mode.label << ": " << mode.points.size() << " steps, rate " << mode.mean_rate << " +- "
              << mode.mean_rate_sigma << " nm/step\n";
  }
  if (!out.emit_curves.empty()) {
    io::write_text(out.emit_curves, curves);
    r.input("emit_curves", out.emit_curves);
  }
  emit(r, out);
  return 0;
}

int cmd_spectra_enhance(const SpectraFlags& f, const Output& out) {
  AnalysisReport r("spectra enhance");
  const auto [m, series] = load_series(f, r);
  const auto line = line_from(f, m);
  if (!line) throw ValidationError({"emitter line needed: manifest 'line' or --lambda-i"});
  r.input("line", io::to_json(*line));
  const auto e = spectra::enhancement_ratio(series, *line);
  r.result("enhancement", e.ratio, "dimensionless", e.ratio_sigma);
  r.result("on_step", e.on_step, "step");
  r.result("off_step", e.off_step, "step");
  r.result("on_area", e.on_area, "counts nm", e.on_area_sigma);
  r.result("off_area", e.off_area, "counts nm", e.off_area_sigma);
  std::cerr << "enhancement " << e.ratio << " +- " << e.ratio_sigma << " (step " << e.on_step << " over step "
            << e.off_step << ")\n";
  emit(r, out);
  return 0;
}

int cmd_spectra_polarization(const SpectraFlags& f, const Output& out) {
  AnalysisReport r("spectra polarization");
  r.input_file("input", f.input);
  const auto scan = io::read_polarization_csv(f.input);
  const auto fit = fitting::fit_cos2(scan);
  r.result("phi0", fit.phi0, "deg", fit.phi0_sigma);
  r.result("i_max", fit.i_max, "counts", fit.i_max_sigma);
  r.result("i_min", fit.i_min, "counts", fit.i_min_sigma);
  r.result("visibility", fit.visibility, "dimensionless", fit.visibility_sigma);
  auto fj = io::to_json(fit.fit);
  fj["units"] = "phi0: deg; i_max, i_min: counts";
  r.result("fit", fj);
  for (const auto& w : fit.fit.warnings) r.warn(w);
  r.converged(fit.fit.converged);
  if (!out.emit_curves.empty()) {
    std::string text = "angle_deg,intensity,model\n";
    for (std::size_t i = 0; i < scan.size(); ++i)
      text += io::format_double(scan.angles()[i]) + "," + io::format_double(scan.intensities()[i]) + "," +
              io::format_double(fitting::cos2_model(scan.angles()[i], fit.phi0, fit.i_max, fit.i_min)) + "\n";
    io::write_text(out.emit_curves, text);
    r.input("emit_curves", out.emit_curves);
  }
  std::cerr << "phi0 " << fit.phi0 << " +- " << fit.phi0_sigma << " deg, visibility " << fit.visibility << "\n";
  emit(r, out);
  return fit.fit.converged ? 0 : kExitNotConverged;
}

int fail(const std::string& kind, const std::string& message, const std::vector<std::string>& details = {},
         int code = kExitInput) {
  std::cerr << report::error_json(kind, message, details).dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cavity-emitter analysis: Purcell factors, photon statistics and spectra"};
  app.set_version_flag("--version", CQED_VERSION);
  app.require_subcommand(1);
  Output out;
  auto add_out = [&](CLI::App* c, bool curves) {
    c->add_option("--out", out.out, "Write the JSON report here instead of stdout");
    if (curves) c->add_option("--emit-curves", out.emit_curves, "Write plot-ready data and model CSV");
  };

  std::uint64_t seed = 0;
  try {
    seed = default_seed();
  } catch (const ValidationError& e) {
    return fail("ValidationError", e.what(), e.violations());
  }

  PurcellFlags pf;
  auto* purcell = app.add_subcommand("purcell", "Purcell factors and modified decay rates");
  pf.app = purcell;
  purcell->add_option("--scenario", pf.scenario, "Preset (siv4, siv3, siv1) or scenario JSON file");
  purcell->add_option("--q", pf.q, "Cavity quality factor");
  purcell->add_option("--vmode", pf.vmode, "Mode volume, (lambda/n)^3");
  purcell->add_option("--lambda-c", pf.lambda_c, "Cavity wavelength, nm");
  purcell->add_option("--lambda-i", pf.lambda_i, "Emitter ZPL wavelength, nm");
  purcell->add_option("--dipole", pf.dipole, "Dipole axis x,y,z (unit vector)");
  purcell->add_option("--field-axis", pf.field_axis, "Local field axis x,y,z (unit vector)");
  purcell->add_option("--fieldmap", pf.fieldmap, "Field-intensity map CSV");
  purcell->add_option("--pos", pf.pos, "Emitter position x,y in nm (with --fieldmap)");
  purcell->add_option("--r-r", pf.r_r, "Spatial overlap when no field map is given");
  purcell->add_option("--f-phc", pf.f_phc, "Bandgap inhibition factor");
  purcell->add_option("--budget", pf.budget, "Radiative budget JSON (Hz)");
  add_out(purcell, false);

  SimulateFlags sf;
  sf.seed = seed;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo photon stream");
  simulate->add_option("--rates", sf.rates, "k12,k21,k23,k31 in Hz")->required();
  simulate->add_option("--duration", sf.duration, "Stream length, s")->capture_default_str();
  simulate->add_option("--seed", sf.seed, "RNG seed (default from CQED_SEED)")->capture_default_str();
  simulate->add_option("--jitter", sf.jitter, "Per-detector Gaussian timing jitter, s")->capture_default_str();
  simulate->add_option("--det-eff", sf.det_eff, "Detection efficiency")->capture_default_str();
  simulate->add_option("--budget", sf.budget, "Radiative budget JSON for the emission split");
  simulate->add_option("--out-stream", sf.out_stream, "Photon stream CSV");
  add_out(simulate, false);

  G2Flags gf;
  gf.seed = seed;
  auto* g2 = app.add_subcommand("g2", "Second-order correlation analyses");
  g2->require_subcommand(1);
  auto* g2fit = g2->add_subcommand("fit", "Fit the three-parameter g2 model to a histogram");
  g2fit->add_option("--input", gf.input, "Histogram CSV (tau_s, g2[, sigma])")->required();
  g2fit->add_option("--irf", gf.irf, "Per-detector jitter sigma, s (0 fits the bare model)");
  g2fit->add_option("--tau1", gf.tau1, "Initial tau1, s");
  g2fit->add_option("--tau2", gf.tau2, "Initial tau2, s");
  g2fit->add_option("--a", gf.a, "Initial bunching amplitude");
  add_out(g2fit, true);
  auto* g2corr = g2->add_subcommand("correlate", "Coincidence histogram from a photon stream");
  g2corr->add_option("--stream", gf.stream, "Photon stream CSV")->required();
  g2corr->add_option("--bin-width", gf.bin_width, "Bin width, s")->capture_default_str();
  g2corr->add_option("--window", gf.window, "Half-width of the delay window, s")->capture_default_str();
  g2corr->add_option("--mode", gf.mode, "full or start-stop")->capture_default_str();
  g2corr->add_option("--seed", gf.seed, "Detector split seed (default: the stream seed)");
  g2corr->add_option("--out-hist", gf.out_hist, "Histogram CSV");
  add_out(g2corr, false);
  auto* g2sweep = g2->add_subcommand("sweep", "Zero-power extrapolation of a power series");
  g2sweep->add_option("--input", gf.input, "Power sweep CSV (power_mW, tau1_ns, tau2_ns, a)")->required();
  add_out(g2sweep, true);

  SpectraFlags pf2;
  auto* spectra_cmd = app.add_subcommand("spectra", "Spectral fits, mode tracking and polarization");
  spectra_cmd->require_subcommand(1);
  auto* sfit = spectra_cmd->add_subcommand("fit", "Lorentzian peak fit");
  sfit->add_option("--input", pf2.input, "Spectrum CSV (wavelength_nm, counts)")->required();
  sfit->add_option("--peaks", pf2.peaks, "Number of peaks")->capture_default_str();
  sfit->add_option("--lo", pf2.lo, "Lower wavelength bound, nm");
  sfit->add_option("--hi", pf2.hi, "Upper wavelength bound, nm");
  add_out(sfit, true);
  auto* strack = spectra_cmd->add_subcommand("track", "Track modes across tuning steps");
  auto* senh = spectra_cmd->add_subcommand("enhance", "ZPL enhancement on versus off resonance");
  for (auto* c : {strack, senh}) {
    c->add_option("--manifest", pf2.manifest, "Tuning manifest JSON")->required();
    c->add_option("--lambda-i", pf2.lambda_i, "Emitter ZPL wavelength, nm (overrides the manifest)");
    c->add_option("--linewidth", pf2.linewidth, "Emitter linewidth, nm");
  }
  add_out(strack, true);
  add_out(senh, false);
  auto* spol = spectra_cmd->add_subcommand("polarization", "cos^2 fit of a polarization scan");
  spol->add_option("--input", pf2.input, "Scan CSV (angle_deg, intensity)")->required();
  add_out(spol, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("UsageError", e.what());
  }

  try {
    if (purcell->parsed()) return cmd_purcell(pf, out);
    if (simulate->parsed()) return cmd_simulate(sf, out);
    if (g2fit->parsed()) {
      gf.app = g2fit;
      return cmd_g2_fit(gf, out);
    }
    if (g2corr->parsed()) {
      gf.app = g2corr;
      return cmd_g2_correlate(gf, out);
    }
    if (g2sweep->parsed()) return cmd_g2_sweep(gf, out);
    for (auto* c : {sfit, strack, senh, spol}) pf2.app = c->parsed() ? c : pf2.app;
    if (sfit->parsed()) return cmd_spectra_fit(pf2, out);
    if (strack->parsed()) return cmd_spectra_track(pf2, out);
    if (senh->parsed()) return cmd_spectra_enhance(pf2, out);
    if (spol->parsed()) return cmd_spectra_polarization(pf2, out);
  } catch (const ParseError& e) {
    return fail("ParseError", e.what(), {e.file() + ":" + std::to_string(e.line())});
  } catch (const ValidationError& e) {
    return fail("ValidationError", e.what(), e.violations());
  } catch (const RankDeficientError& e) {
    return fail("RankDeficientError", e.what(), {"direction: " + e.direction()}, kExitNotConverged);
  } catch (const DomainError& e) {
    return fail("DomainError", e.what());
  } catch (const InfeasibleError& e) {
    return fail("InfeasibleError", e.what());
  } catch (const UnphysicalError& e) {
    return fail("UnphysicalError", e.what());
  } catch (const std::exception& e) {
    return fail("Error", e.what(), {}, 1);
  }
  return 0;
}
