// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cqed/dynamics.hpp"
#include "cqed/fitting.hpp"
#include "cqed/montecarlo.hpp"
#include "cqed/purcell.hpp"
#include "cqed/spectra.hpp"

using namespace cqed;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (detail.tellp() > 0) detail << "; ";
    detail << what << (ok ? "" : " [miss]");
  }
};

std::string fmt(double x, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, x);
  return buf;
}

bool within_rel(double x, double target, double tol) { return std::abs(x / target - 1) <= tol; }

// SiV(4): budget lifetimes 1.44 ns (ZPL), 5.75 ns (PSB), 583 ps (non-radiative).
const RadiativeBudget kSiv4Budget(1 / 1.44e-9, 1 / 5.75e-9, 1 / 583e-12);
constexpr double kFphc = 0.25;

double siv4_fcav() {
  const CavityMode mode({740.0, 430.0, 1.7, 0.0, nullptr, "siv4"});
  const double s3 = 1 / std::sqrt(3.0), s2 = 1 / std::sqrt(2.0);
  const double r_mu = purcell::orientation_overlap({s3, s3, s3}, {s2, s2, 0.0});
  return purcell::effective_purcell(purcell::ideal_purcell(mode), {1.0, r_mu, 0.4});
}

Outcome criterion1() {
  Outcome o;
  const CavityMode mode({740.0, 430.0, 1.7, 0.0, nullptr, "siv4"});
  const double fp = purcell::ideal_purcell(mode);
  o.check(within_rel(fp, 19.2, 0.005), "F_P " + fmt(fp) + " vs 19.2 (0.5%)");
  const double fcav = purcell::effective_purcell(fp, {1.0, 0.667, 0.4});
  o.check(within_rel(fcav, 5.15, 0.01), "F_cav " + fmt(fcav) + " vs 5.15 (1%)");
  const double ipl = purcell::pl_enhancement(fcav, kFphc);
  o.check(within_rel(ipl, 20.6, 0.01), "I_PL " + fmt(ipl) + " vs 20.6 (1%)");
  o.check(within_rel(ipl, 19.0, 0.10), "vs observed 19: " + fmt(100 * (ipl / 19 - 1), 3) + "% (<= 10%)");
  return o;
}

Outcome criterion2() {
  Outcome o;
  const double fcav = siv4_fcav();
  const auto off = purcell::modified_budget(kSiv4Budget, PhotonicEnvironment::bandgap_only(kFphc));
  const auto on = purcell::modified_budget(kSiv4Budget, PhotonicEnvironment::cavity_coupled(fcav, kFphc));
  o.check(within_rel(off.gamma_total, 1932e6, 0.01), "gamma_PhC " + fmt(off.gamma_total / 1e6) + " MHz (1%)");
  o.check(within_rel(on.gamma_total, 5238e6, 0.03), "gamma_cav " + fmt(on.gamma_total / 1e6) + " MHz (3%)");
  const double eta_bulk = kSiv4Budget.eta_qe();
  o.check(std::abs(on.eta_qe - 0.67) <= 0.02 && std::abs(off.eta_qe - 0.11) <= 0.02 &&
              std::abs(eta_bulk - 0.34) <= 0.02,
          "eta on/off/bulk " + fmt(on.eta_qe, 3) + "/" + fmt(off.eta_qe, 3) + "/" + fmt(eta_bulk, 3));
  const auto beta = purcell::mode_emission_fractions(on);
  o.check(std::abs(beta.beta_radiative - 0.988) <= 0.002, "beta_rad " + fmt(beta.beta_radiative));
  o.check(std::abs(beta.beta_total - 0.63) <= 0.05, "beta_total " + fmt(beta.beta_total, 3) + " (0.63 +- 0.05)");
  return o;
}

Outcome criterion3() {
  Outcome o;
  const auto b = purcell::invert_budget(5238e6, 1932e6, 5.0, kFphc, 4.0);
  o.check(within_rel(1 / b.gamma_zpl(), 1.44e-9, 0.02), "tau_zpl " + fmt(1e9 / b.gamma_zpl()) + " ns");
  o.check(within_rel(1 / b.gamma_psb(), 5.75e-9, 0.02), "tau_psb " + fmt(1e9 / b.gamma_psb()) + " ns");
  o.check(within_rel(1 / b.gamma_nr(), 583e-12, 0.02), "tau_nr " + fmt(1e12 / b.gamma_nr()) + " ps");

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double z = 1e8 + 2e9 * u(rng), br = 0.5 + 9.5 * u(rng), nr = 1e8 + 3e9 * u(rng);
    const double fc = 1.5 + 28.5 * u(rng), fph = 0.05 + 0.95 * u(rng);
    const RadiativeBudget truth(z, z / br, nr);
    const double gc = purcell::modified_budget(truth, PhotonicEnvironment::cavity_coupled(fc, fph)).gamma_total;
    const double gp = purcell::modified_budget(truth, PhotonicEnvironment::bandgap_only(fph)).gamma_total;
    const auto back = purcell::invert_budget(gc, gp, fc, fph, br);
    worst = std::max({worst, std::abs(back.gamma_zpl() / z - 1), std::abs(back.gamma_psb() / (z / br) - 1),
                      std::abs(back.gamma_nr() / nr - 1)});
  }
  o.check(worst <= 1e-9, "invert o forward worst rel " + fmt(worst, 2) + " on 1000 budgets");
  return o;
}

Outcome criterion4() {
  Outcome o;
  const auto r = purcell::infer_bulk_qe_from_inhibition(1.3e-9, 2.6e-9, kFphc);
  o.check(std::abs(r.eta_bulk - 0.667) <= 0.01, "eta_bulk " + fmt(r.eta_bulk, 3));
  o.check(std::abs(r.eta_phc - 0.333) <= 0.01, "eta_PhC " + fmt(r.eta_phc, 3));
  o.check(r.lifetime_ratio == 2.0, "lifetime ratio " + fmt(r.lifetime_ratio, 17));
  return o;
}

Outcome criterion5() {
  Outcome o;
  const double f = purcell::nanosphere_factor(2.4);
  o.check(std::abs(f - 0.0623) <= 1e-4, "nanosphere factor " + fmt(f));
  const double a = purcell::rescale_qe(0.66, f), b = purcell::rescale_qe(0.34, f);
  o.check(std::abs(a - 0.108) <= 0.01, "0.66 -> " + fmt(a, 3));
  o.check(std::abs(b - 0.031) <= 0.01, "0.34 -> " + fmt(b, 3));
  return o;
}

// Histogram g2 minus the analytic curve averaged over each bin, on bins with
// centers in [0, tmax].
struct OracleGap {
  double sup = 0, rms = 0;
  std::size_t photons = 0;
  double seconds = 0;
};

OracleGap oracle_gap(const ThreeLevelRates& r, double photons, double bin, double tmax, std::uint64_t seed) {
  const montecarlo::EmissionSplit ideal{1.0, 1.0};
  const double duration = photons / montecarlo::predicted_detected_rate(r, ideal, 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  const auto s = montecarlo::simulate_stream(r, ideal, duration, 1.0, seed);
  const auto h = montecarlo::correlate(s, bin, tmax + bin);
  OracleGap g;
  g.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  g.photons = s.size();
  const auto c = h.bin_centers();
  const auto y = h.g2();
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] < -1e-3 * bin || c[i] > tmax) continue;
    double avg = 0;
    constexpr int kSub = 16;
    for (int k = 0; k < kSub; ++k) avg += dynamics::g2_analytic(r, c[i] - bin / 2 + bin * (k + 0.5) / kSub);
    avg /= kSub;
    const double d = std::abs(y[i] - avg);
    g.sup = std::max(g.sup, d);
    g.rms += d * d;
    ++n;
  }
  g.rms = std::sqrt(g.rms / static_cast<double>(n));
  return g;
}

Outcome criterion6() {
  Outcome o;
  const ThreeLevelRates r(100e6, 2247e6, 315e6, 50e6);
  const double tau2 = dynamics::g2_params_from_rates(r).params->tau2();
  const auto small = oracle_gap(r, 1e6, 0.2e-9, 10 * tau2, 61);
  const auto large = oracle_gap(r, 4e6, 0.2e-9, 10 * tau2, 62);
  o.check(small.sup < 0.05, "sup " + fmt(small.sup, 3) + " at " + std::to_string(small.photons) + " photons");
  const double ratio = small.rms / large.rms;
  o.check(std::abs(ratio / 2 - 1) <= 0.3, "rms ratio x4 photons " + fmt(ratio, 3) + " (2 +- 30%)");
  o.check(small.seconds < 60, "runtime " + fmt(small.seconds, 3) + " s");
  return o;
}

std::vector<double> delay_grid(const G2Params& p) {
  std::vector<double> t;
  const double step = p.tau1() / 30;
  for (int i = 0; i < 150; ++i) t.push_back(i * step);
  const double lo = 150 * step, hi = 8 * p.tau2();
  for (int i = 0; i < 250; ++i) t.push_back(lo * std::pow(hi / lo, i / 249.0));
  return t;
}

Outcome criterion7() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> noise(0, 0.01);
  const std::vector<double> powers = {0.1, 0.3, 0.6, 1.0, 2.0, 3.0};
  int recovered = 0, limits_ok = 0, curves = 0;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double k21 = 0.3e9 * std::pow(10.0, u(rng));
    const ThreeLevelRates base(0, k21, k21 * (0.05 + 0.45 * u(rng)), k21 * (0.01 + 0.09 * u(rng)));
    const dynamics::PumpModel pump(base.k31() * (base.k21() + base.k23()) / (base.k31() + base.k23()));
    std::vector<G2Params> fitted;
    for (double p : powers) {
      const auto rates = pump.at_power(base, p);
      const auto truth = *dynamics::g2_params_from_rates(rates).params;
      const auto t = delay_grid(truth);
      const auto clean = dynamics::g2_analytic(rates, t);
      ++curves;
      const double far = dynamics::g2_analytic(rates, 30 * truth.tau2());
      limits_ok += std::abs(dynamics::g2_analytic(rates, 0.0)) <= 1e-4 && std::abs(far - 1) <= 1e-4;
      G2Curve::Fields f{t, clean.values(), std::vector<double>(t.size(), 0.01)};
      for (auto& y : f.values) y = std::max(0.0, y + noise(rng));
      const G2Curve curve(f);
      const auto fit = fitting::fit_g2(curve, fitting::estimate_g2_init(curve));
      fitted.emplace_back(fit.value("tau1"), fit.value("tau2"), fit.value("a"));
    }
    const auto ext = dynamics::extrapolate_zero_power(dynamics::PowerSweep(powers, fitted));
    const double err = std::abs(ext.rates_fit.k21() / k21 - 1);
    worst = std::max(worst, err);
    recovered += err <= 0.05;
  }
  o.check(recovered == 100, "k21 within 5% for " + std::to_string(recovered) + "/100 rate sets (worst " +
                                fmt(100 * worst, 3) + "%)");
  o.check(limits_ok == curves, "g2(0) = 0 and far limit 1 on " + std::to_string(limits_ok) + "/" +
                                   std::to_string(curves) + " curves");
  return o;
}

double fitted_tau1(double gamma_total, const purcell::ModifiedRates& env, double jitter, std::uint64_t seed,
                   double& truth) {
  // same pump on and off resonance; weak shelving
  const double k23 = 5e7;
  const ThreeLevelRates r(2e8, gamma_total - k23, k23, 3e7);
  truth = dynamics::g2_params_from_rates(r).params->tau1();
  const auto split = montecarlo::EmissionSplit::from_modified(env);
  const auto s = montecarlo::simulate_stream(r, split, 0.1, 1.0, seed);
  const auto h = montecarlo::correlate(montecarlo::apply_jitter(s, jitter, seed + 1), 50e-12, 30e-9);
  const auto curve = h.to_curve();
  const auto fit = fitting::fit_g2(curve, fitting::estimate_g2_init(curve), fitting::pair_irf_sigma(jitter));
  return fit.value("tau1");
}

Outcome criterion8() {
  Outcome o;
  const auto off = purcell::modified_budget(kSiv4Budget, PhotonicEnvironment::bandgap_only(kFphc));
  const auto on = purcell::modified_budget(kSiv4Budget, PhotonicEnvironment::cavity_coupled(siv4_fcav(), kFphc));
  double t_on_true = 0, t_off_true = 0;
  const double t_on = fitted_tau1(on.gamma_total, on, 296e-12, 801, t_on_true);
  const double t_off = fitted_tau1(off.gamma_total, off, 296e-12, 811, t_off_true);
  const double ratio = t_on / t_off;
  o.check(within_rel(ratio, 0.40, 0.20), "tau_on/tau_off " + fmt(ratio, 3) + " (" + fmt(t_on * 1e12) + " ps / " +
                                             fmt(t_off * 1e12) + " ps; model " + fmt(t_on_true * 1e12) + " / " +
                                             fmt(t_off_true * 1e12) + " ps)");
  return o;
}

Eigen::MatrixXd central_jacobian(const fitting::ResidualFunction& f, const Eigen::VectorXd& p,
                                 const std::vector<fitting::Parameter>& params) {
  const Eigen::VectorXd r0 = f(p);
  Eigen::MatrixXd j(r0.size(), p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double s = params[static_cast<std::size_t>(k)].scale;
    const double h = 1e-4 * (s > 0 ? s : std::abs(p[k]));
    Eigen::VectorXd a = p, b = p;
    a[k] += h;
    b[k] -= h;
    j.col(k) = (f(a) - f(b)) / (2 * h);
  }
  return j;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> x;
  for (int i = 0; i < n; ++i) x.push_back(a + (b - a) * i / (n - 1));
  return x;
}

Outcome criterion9() {
  Outcome o;
  using Model = std::function<double(double, const Eigen::VectorXd&)>;
  struct Case {
    Model model;
    std::vector<double> x;
    Eigen::VectorXd p;
    std::vector<double> scales;
  };
  Eigen::VectorXd lp(7);
  lp << 739.9, 2.3, 40, 742.5, 1.1, 25, 4;
  const std::vector<Case> zoo = {
      {[](double x, const Eigen::VectorXd& p) { return fitting::g2_model(x, p[0], p[1], p[2]); },
       linspace(-30e-9, 30e-9, 121), Eigen::Vector3d(0.8, 0.48e-9, 5e-9), {}},
      {[](double x, const Eigen::VectorXd& p) { return fitting::g2_model(x, p[0], p[1], p[2], 419e-12); },
       linspace(-30e-9, 30e-9, 121), Eigen::Vector3d(0.8, 0.48e-9, 5e-9), {}},
      {[](double x, const Eigen::VectorXd& p) { return fitting::lorentzian_sum(x, {p.data(), 7}); },
       linspace(730, 750, 101), lp, {2.3, 2.3, 40, 1.1, 1.1, 25, 40}},
      {[](double x, const Eigen::VectorXd& p) { return fitting::cos2_model(x, p[0], p[1], p[2]); },
       linspace(0, 350, 36), Eigen::Vector3d(37.0, 100.0, 12.0), {}},
      {[](double x, const Eigen::VectorXd& p) { return p[0] * x / (x + p[1]); }, linspace(0.05, 5, 20),
       Eigen::Vector2d(2e5, 0.89), {}}};
  double worst_jac = 0;
  for (const auto& c : zoo) {
    const auto x = c.x;
    const auto model = c.model;
    const fitting::ResidualFunction f = [&](const Eigen::VectorXd& p) {
      Eigen::VectorXd r(static_cast<Eigen::Index>(x.size()));
      for (std::size_t i = 0; i < x.size(); ++i) r[static_cast<Eigen::Index>(i)] = model(x[i], p);
      return r;
    };
    std::vector<fitting::Parameter> params;
    for (Eigen::Index k = 0; k < c.p.size(); ++k) {
      fitting::Parameter par{"p" + std::to_string(k), c.p[k]};
      if (!c.scales.empty()) par.scale = c.scales[static_cast<std::size_t>(k)];
      params.push_back(par);
    }
    const Eigen::MatrixXd fwd = fitting::numerical_jacobian(f, c.p, params);
    const Eigen::MatrixXd ctr = central_jacobian(f, c.p, params);
    for (Eigen::Index k = 0; k < c.p.size(); ++k)
      worst_jac = std::max(worst_jac, (fwd.col(k) - ctr.col(k)).norm() / ctr.col(k).norm());
  }
  o.check(worst_jac < 1e-6, "Jacobian worst column mismatch " + fmt(worst_jac, 2));

  double worst_fit = 0;
  auto rel = [&](double got, double want) { worst_fit = std::max(worst_fit, std::abs(got / want - 1)); };
  {
    const auto t = linspace(-40e-9, 40e-9, 401);
    for (double irf : {0.0, 0.3e-9}) {
      G2Curve::Fields f;
      f.delays = t;
      for (double x : t) f.values.push_back(fitting::g2_model(x, 0.8, 0.48e-9, 5e-9, irf));
      const G2Curve c(f);
      const auto r = fitting::fit_g2(c, fitting::estimate_g2_init(c), irf > 0 ? std::optional(irf) : std::nullopt);
      rel(r.value("a"), 0.8);
      rel(r.value("tau1"), 0.48e-9);
      rel(r.value("tau2"), 5e-9);
    }
  }
  const auto wl = linspace(730, 750, 401);
  auto spectrum = [&](const std::vector<double>& p) {
    PLSpectrum::Fields f;
    f.wavelengths = wl;
    for (double x : wl) f.intensities.push_back(fitting::lorentzian_sum(x, p));
    return PLSpectrum(f);
  };
  {
    const std::vector<double> p{736.2, 1.4, 60.0, 742.8, 2.6, 35.0, 3.0};
    const std::vector<fitting::PeakGuess> g{{736.0, 1.0, 50.0}, {743.0, 2.0, 30.0}};
    const auto r = fitting::fit_lorentzians(spectrum(p), 2, g);
    for (std::size_t k = 0; k < p.size(); ++k) rel(r.fit.values[static_cast<Eigen::Index>(k)], p[k]);
  }
  {
    PolarizationScan::Fields f;
    f.angles = linspace(0, 345, 24);
    for (double a : f.angles) f.intensities.push_back(fitting::cos2_model(a, 37, 100, 12));
    const auto r = fitting::fit_cos2(PolarizationScan(f));
    rel(r.phi0, 37);
    rel(r.i_max, 100);
    rel(r.i_min, 12);
  }
  {
    SaturationCurve::Fields f;
    f.powers = linspace(0.05, 5, 20);
    for (double p : f.powers) f.rates.push_back(2e5 * p / (p + 0.89));
    const auto r = fitting::fit_saturation(SaturationCurve(f));
    rel(r.r_inf, 2e5);
    rel(r.p_sat, 0.89);
  }
  o.check(worst_fit <= 1e-8, "noiseless self-fits worst rel " + fmt(worst_fit, 2));

  const auto q1 = fitting::fit_lorentzians(spectrum({739.9, 2.3, 100.0, 5.0}), 1).peaks.at(0).q;
  const auto q2 = fitting::fit_lorentzians(spectrum({740.0, 1.7, 80.0, 2.0}), 1).peaks.at(0).q;
  o.check(std::round(q1) == 322 && within_rel(q1, 739.9 / 2.3, 1e-8), "Q " + fmt(q1, 6) + " (322)");
  o.check(std::round(q2) == 435 && within_rel(q2, 740.0 / 1.7, 1e-8), "Q " + fmt(q2, 6) + " (~435)");
  return o;
}

Outcome criterion10() {
  Outcome o;
  // 24 angles, 10% intensity noise
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0, 10.0);
    PolarizationScan::Fields f;
    f.angles = linspace(0, 345, 24);
    for (double a : f.angles) f.intensities.push_back(std::max(0.0, fitting::cos2_model(a, 0.0, 100, 20) + n(rng)));
    const auto r = fitting::fit_cos2(PolarizationScan(f));
    worst = std::max(worst, std::abs(r.phi0));
  }
  o.check(worst < 10, "cos2 angle worst error " + fmt(worst, 3) + " deg over 100 scans");

  const spectra::PolarizedChannel emitter{60.0, 1.0};
  const double li = 739.9;
  const CavityMode m0({742.0, 320.0, 1.3, 0.0, nullptr, "m0"});
  const CavityMode m45({744.0, 320.0, 1.3, -45.0, nullptr, "m-45"});
  const std::vector<spectra::ModeChannel> modes = {{{0.0, 2.0}, m0}, {{-45.0, 50.0}, m45}};
  const double far = spectra::effective_angle(emitter, modes, li, 500.0).angle;
  o.check(std::abs(far - 60) < 0.5, "far detuned " + fmt(far, 4) + " deg");
  const std::vector<spectra::ModeChannel> dominant = {{{-45.0, 1e4}, m45}};
  const double dom = spectra::effective_angle(emitter, dominant, li, li - m45.lambda_c()).angle;
  o.check(std::abs(dom + 45) < 0.5, "mode dominance " + fmt(dom, 4) + " deg");

  const double step = m45.linewidth() / 100;
  std::vector<double> d;
  for (double x = -15.0; x <= 5.0; x += step) d.push_back(x);
  const auto sweep = spectra::polarization_mixture(emitter, modes, li, d);
  std::vector<double> ang;
  for (const auto& p : sweep) ang.push_back(p.angle);
  const auto un = spectra::unwrap_axis_angles(ang);
  double jump = 0;
  for (std::size_t i = 1; i < un.size(); ++i) jump = std::max(jump, std::abs(un[i] - un[i - 1]));
  o.check(jump < 1.0, "largest jump " + fmt(jump, 3) + " deg at detuning step " + fmt(step, 3) + " nm");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  int failures = 0;
  for (const auto& [id, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failures += !o.pass;
    std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
