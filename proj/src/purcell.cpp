#include "cqed/purcell.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "cqed/errors.hpp"

namespace cqed::purcell {

namespace {

bool is_unit(const Vec3& v) {
  const double n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
  return std::isfinite(n2) && std::abs(std::sqrt(n2) - 1.0) <= 1e-9;
}

}  // namespace

OverlapFactors::OverlapFactors(double rl, double rm, double rr) : r_lambda(rl), r_mu(rm), r_r(rr) {
  std::vector<std::string> v;
  auto check = [&](const char* name, double x) {
    if (!(x >= 0.0 && x <= 1.0)) v.push_back(std::string(name) + " outside [0, 1]");
  };
  check("r_lambda", rl);
  check("r_mu", rm);
  check("r_r", rr);
  if (!v.empty()) throw ValidationError(v);
}

double ideal_purcell(const CavityMode& mode) {
  return 3.0 * mode.q_factor() / (4.0 * std::numbers::pi * std::numbers::pi * mode.mode_volume());
}

double spectral_overlap(double lambda_i, double lambda_c, double q_factor) {
  const double d = lambda_i / lambda_c - 1.0;
  return 1.0 / (1.0 + 4.0 * q_factor * q_factor * d * d);
}

SpectralOverlap spectral_overlap(const EmitterLine& line, const CavityMode& mode) {
  SpectralOverlap out;
  out.r_lambda = spectral_overlap(line.lambda_i(), mode.lambda_c(), mode.q_factor());
  out.linewidth_warning = mode.linewidth() < line.linewidth();
  return out;
}

double orientation_overlap(const Vec3& dipole_axis, const Vec3& field_axis) {
  if (!is_unit(dipole_axis)) throw DomainError("orientation_overlap: dipole_axis not a unit vector");
  if (!is_unit(field_axis)) throw DomainError("orientation_overlap: field_axis not a unit vector");
  const double dot = dipole_axis[0] * field_axis[0] + dipole_axis[1] * field_axis[1] +
                     dipole_axis[2] * field_axis[2];
  return std::min(1.0, dot * dot);
}

double spatial_overlap(const FieldMap& field, const Vec2& position) {
  const double eps = field.normalized_amplitude(position);
  return std::min(1.0, eps * eps);
}

double effective_purcell(double f_p, const OverlapFactors& o) {
  return f_p * o.r_lambda * o.r_mu * o.r_r;
}

ModifiedRates modified_budget(const RadiativeBudget& b, const PhotonicEnvironment& env) {
  ModifiedRates m;
  m.kind = env.kind();
  switch (env.kind()) {
    case EnvironmentKind::Bulk:
      m.channel_zpl = b.gamma_zpl();
      m.channel_psb = b.gamma_psb();
      break;
    case EnvironmentKind::BandgapOnly:
      m.channel_zpl = env.f_phc() * b.gamma_zpl();
      m.channel_psb = env.f_phc() * b.gamma_psb();
      break;
    case EnvironmentKind::CavityCoupled:
      m.channel_zpl = env.f_cav() * b.gamma_zpl();
      m.channel_psb = env.f_phc() * b.gamma_psb();
      break;
  }
  m.channel_nr = b.gamma_nr();
  const double rad = m.channel_zpl + m.channel_psb;
  m.gamma_total = rad + m.channel_nr;
  m.eta_qe = m.gamma_total > 0 ? rad / m.gamma_total : 0.0;
  return m;
}

double pl_enhancement(double f_cav, double f_phc) {
  if (!(f_phc > 0.0)) throw DomainError("pl_enhancement: f_phc must be positive");
  return f_cav / f_phc;
}

EmissionFractions mode_emission_fractions(const ModifiedRates& m) {
  if (m.kind != EnvironmentKind::CavityCoupled)
    throw DomainError("mode_emission_fractions: rates were not computed for a cavity-coupled emitter");
  const double rad = m.channel_zpl + m.channel_psb;
  if (!(m.gamma_total > 0) || !(rad > 0))
    throw DomainError("mode_emission_fractions: no radiative decay");
  return {m.channel_zpl / m.gamma_total, m.channel_zpl / rad};
}

RadiativeBudget invert_budget(double gamma_cav, double gamma_phc, double f_cav, double f_phc,
                              double branching) {
  for (double x : {gamma_cav, gamma_phc, f_cav, f_phc, branching}) {
    if (!std::isfinite(x)) throw DomainError("invert_budget: non-finite input");
  }
  // Unknowns (zpl, psb, nr):
  //   f_cav zpl + f_phc psb + nr = gamma_cav
  //   f_phc zpl + f_phc psb + nr = gamma_phc
  //   zpl - branching psb        = 0
  Eigen::Matrix3d a;
  a << f_cav, f_phc, 1.0,
       f_phc, f_phc, 1.0,
       1.0, -branching, 0.0;
  const Eigen::Vector3d rhs(gamma_cav, gamma_phc, 0.0);
  Eigen::FullPivLU<Eigen::Matrix3d> lu(a);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible())
    throw InfeasibleError("invert_budget: singular system (f_cav = f_phc or branching = -1); "
                          "the measured rates do not determine the budget");
  const Eigen::Vector3d x = lu.solve(rhs);

  std::vector<std::string> bad;
  const char* names[] = {"gamma_zpl", "gamma_psb", "gamma_nr"};
  for (int i = 0; i < 3; ++i) {
    // Tolerate round-off around zero.
    if (x[i] < -1e-12 * std::max(std::abs(gamma_cav), std::abs(gamma_phc)))
      bad.push_back(std::string(names[i]) + " = " + std::to_string(x[i]) + " Hz");
  }
  if (!bad.empty()) {
    std::string msg = "invert_budget: infeasible measurement, negative";
    for (const auto& s : bad) msg += " " + s;
    throw InfeasibleError(msg);
  }
  return RadiativeBudget(std::max(0.0, x[0]), std::max(0.0, x[1]), std::max(0.0, x[2]));
}

InhibitionEfficiencies infer_bulk_qe_from_inhibition(double tau_bulk, double tau_phc, double f_phc) {
  if (!(tau_bulk > 0) || !std::isfinite(tau_bulk) || !std::isfinite(tau_phc))
    throw DomainError("infer_bulk_qe_from_inhibition: lifetimes must be positive and finite");
  if (!(f_phc > 0 && f_phc < 1))
    throw DomainError("infer_bulk_qe_from_inhibition: f_phc outside (0, 1)");
  if (tau_phc < tau_bulk)
    throw InfeasibleError("infer_bulk_qe_from_inhibition: tau_phc shorter than tau_bulk");
  // (f eta + 1 - eta) / tau_bulk = 1 / tau_phc
  const double eta = (1.0 - tau_bulk / tau_phc) / (1.0 - f_phc);
  if (eta < -1e-12 || eta > 1.0 + 1e-12)
    throw InfeasibleError("infer_bulk_qe_from_inhibition: implied efficiency " +
                          std::to_string(eta) + " outside [0, 1]");
  InhibitionEfficiencies out;
  out.eta_bulk = std::clamp(eta, 0.0, 1.0);
  out.eta_phc = rescale_qe(out.eta_bulk, f_phc);
  out.lifetime_ratio = tau_phc / tau_bulk;
  return out;
}

double nanosphere_factor(double n) {
  if (!(n >= 1.0) || !std::isfinite(n)) throw DomainError("nanosphere_factor: n must be >= 1");
  const double s = 3.0 / (2.0 + n * n);
  return s * s / n;
}

double rescale_qe(double eta, double f) {
  if (!(eta >= 0 && eta <= 1)) throw DomainError("rescale_qe: eta outside [0, 1]");
  if (!(f > 0 && std::isfinite(f))) throw DomainError("rescale_qe: radiative_factor must be positive");
  const double denom = f * eta + 1.0 - eta;
  return denom > 0 ? f * eta / denom : 1.0;
}

}  // namespace cqed::purcell
