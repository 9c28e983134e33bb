#include "cqed/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cqed/errors.hpp"

namespace cqed {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += "; ";
    out += s;
  }
  return out;
}

void throw_if_any(const std::vector<std::string>& v) {
  if (!v.empty()) throw ValidationError(v);
}

// Appends "<name> not finite" and returns false if x is NaN/Inf.
bool finite(std::vector<std::string>& v, const std::string& name, double x) {
  if (!std::isfinite(x)) {
    v.push_back(name + " not finite");
    return false;
  }
  return true;
}

void finite_all(std::vector<std::string>& v, const std::string& name,
                const std::vector<double>& xs) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i])) {
      v.push_back(name + "[" + std::to_string(i) + "] not finite");
      return;
    }
  }
}

void strictly_increasing(std::vector<std::string>& v, const std::string& name,
                         const std::vector<double>& xs) {
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] > xs[i - 1])) {
      v.push_back(name + " not strictly increasing at index " + std::to_string(i));
      return;
    }
  }
}

void nonnegative_all(std::vector<std::string>& v, const std::string& name,
                     const std::vector<double>& xs) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] < 0.0) {
      v.push_back(name + "[" + std::to_string(i) + "] negative");
      return;
    }
  }
}

void same_length(std::vector<std::string>& v, const std::string& a, std::size_t na,
                 const std::string& b, std::size_t nb) {
  if (na != nb) {
    v.push_back(a + " and " + b + " differ in length (" + std::to_string(na) + " vs " +
                std::to_string(nb) + ")");
  }
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error("validation failed: " + join(violations)), violations_(std::move(violations)) {}

ParseError::ParseError(const std::string& file, std::size_t line, const std::string& msg)
    : Error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + msg),
      file_(file),
      line_(line) {}

double lifetime_from_rate(double rate_hz) {
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz))
    throw DomainError("lifetime_from_rate: rate must be positive and finite");
  return 1.0 / rate_hz;
}

double rate_from_lifetime(double lifetime_s) {
  if (!(lifetime_s > 0.0) || !std::isfinite(lifetime_s))
    throw DomainError("rate_from_lifetime: lifetime must be positive and finite");
  return 1.0 / lifetime_s;
}

double canonical_axis_angle(double degrees) {
  double a = std::fmod(degrees, 180.0);
  if (a <= -90.0) a += 180.0;
  if (a > 90.0) a -= 180.0;
  return a;
}

// ---------------------------------------------------------------------------

std::vector<std::string> RadiativeBudget::violations(const Fields& f) {
  std::vector<std::string> v;
  bool ok = finite(v, "gamma_zpl", f.gamma_zpl);
  ok &= finite(v, "gamma_psb", f.gamma_psb);
  ok &= finite(v, "gamma_nr", f.gamma_nr);
  if (f.gamma_zpl < 0) v.push_back("gamma_zpl negative");
  if (f.gamma_psb < 0) v.push_back("gamma_psb negative");
  if (f.gamma_nr < 0) v.push_back("gamma_nr negative");
  if (ok && !(f.gamma_zpl > 0 || f.gamma_psb > 0))
    v.push_back("at least one radiative rate must be positive");
  return v;
}

RadiativeBudget::RadiativeBudget(const Fields& f) : f_(f) { throw_if_any(violations(f)); }

// ---------------------------------------------------------------------------

std::vector<std::string> FieldMap::violations(const Fields& f) {
  std::vector<std::string> v;
  if (f.grid.rows() < 2 || f.grid.cols() < 2) v.push_back("grid must be at least 2x2");
  if (!f.grid.allFinite()) v.push_back("grid not finite");
  finite(v, "spacing_nm", f.spacing_nm);
  if (!(f.spacing_nm > 0)) v.push_back("spacing_nm must be positive");
  finite(v, "origin.x", f.origin[0]);
  finite(v, "origin.y", f.origin[1]);
  finite(v, "normalization", f.normalization);
  if (f.grid.size() > 0 && f.grid.allFinite()) {
    const double peak = f.grid.cwiseAbs().maxCoeff();
    if (!(peak > 0)) v.push_back("grid is identically zero");
    if (f.normalization != 0.0 && peak > 0 &&
        std::abs(peak / f.normalization - 1.0) > 1e-6)
      v.push_back("normalization does not match the global field maximum");
  }
  return v;
}

FieldMap::FieldMap(Fields f) : f_(std::move(f)) {
  throw_if_any(violations(f_));
  if (f_.normalization == 0.0) f_.normalization = f_.grid.cwiseAbs().maxCoeff();
}

Vec2 FieldMap::lower_corner() const { return f_.origin; }

Vec2 FieldMap::upper_corner() const {
  return {f_.origin[0] + f_.spacing_nm * static_cast<double>(f_.grid.cols() - 1),
          f_.origin[1] + f_.spacing_nm * static_cast<double>(f_.grid.rows() - 1)};
}

double FieldMap::normalized_amplitude(const Vec2& position) const {
  const Vec2 lo = lower_corner();
  const Vec2 hi = upper_corner();
  const char* axis[] = {"x", "y"};
  for (int k = 0; k < 2; ++k) {
    if (!std::isfinite(position[k]))
      throw DomainError(std::string("position.") + axis[k] + " not finite");
    if (position[k] < lo[k] || position[k] > hi[k]) {
      std::ostringstream os;
      os << "position." << axis[k] << " = " << position[k] << " nm outside field map bound ["
         << lo[k] << ", " << hi[k] << "]";
      throw DomainError(os.str());
    }
  }
  const double fx = (position[0] - lo[0]) / f_.spacing_nm;
  const double fy = (position[1] - lo[1]) / f_.spacing_nm;
  const Eigen::Index ncols = f_.grid.cols();
  const Eigen::Index nrows = f_.grid.rows();
  const Eigen::Index i0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(fx), ncols - 2);
  const Eigen::Index j0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(fy), nrows - 2);
  const double tx = fx - static_cast<double>(i0);
  const double ty = fy - static_cast<double>(j0);
  const auto& g = f_.grid;
  const double v = (1 - tx) * (1 - ty) * g(j0, i0) + tx * (1 - ty) * g(j0, i0 + 1) +
                   (1 - tx) * ty * g(j0 + 1, i0) + tx * ty * g(j0 + 1, i0 + 1);
  return v / f_.normalization;
}

// ---------------------------------------------------------------------------

std::vector<std::string> CavityMode::violations(const Fields& f) {
  std::vector<std::string> v;
  if (finite(v, "lambda_c", f.lambda_c) && !(f.lambda_c > 0)) v.push_back("lambda_c must be positive");
  if (finite(v, "q_factor", f.q_factor) && !(f.q_factor > 0)) v.push_back("q_factor must be positive");
  if (finite(v, "mode_volume", f.mode_volume) && !(f.mode_volume > 0))
    v.push_back("mode_volume must be positive");
  if (finite(v, "pol_angle", f.pol_angle) && !(f.pol_angle > -90.0 && f.pol_angle <= 90.0))
    v.push_back("pol_angle outside (-90, 90]");
  return v;
}

CavityMode::CavityMode(Fields f) : f_(std::move(f)) { throw_if_any(violations(f_)); }

// ---------------------------------------------------------------------------

std::vector<std::string> EmitterLine::violations(const Fields& f) {
  std::vector<std::string> v;
  if (finite(v, "lambda_i", f.lambda_i) && !(f.lambda_i > 0)) v.push_back("lambda_i must be positive");
  if (finite(v, "linewidth", f.linewidth) && f.linewidth < 0) v.push_back("linewidth negative");
  bool ok = true;
  for (int k = 0; k < 3; ++k) {
    ok &= finite(v, "dipole_axis[" + std::to_string(k) + "]", f.dipole_axis[k]);
    finite(v, "position[" + std::to_string(k) + "]", f.position[k]);
  }
  if (ok) {
    const double n = std::sqrt(f.dipole_axis[0] * f.dipole_axis[0] +
                               f.dipole_axis[1] * f.dipole_axis[1] +
                               f.dipole_axis[2] * f.dipole_axis[2]);
    if (std::abs(n - 1.0) > 1e-9) v.push_back("dipole_axis not a unit vector");
  }
  return v;
}

EmitterLine::EmitterLine(Fields f) : f_(std::move(f)) { throw_if_any(violations(f_)); }

// ---------------------------------------------------------------------------

std::string to_string(EnvironmentKind kind) {
  switch (kind) {
    case EnvironmentKind::Bulk: return "Bulk";
    case EnvironmentKind::BandgapOnly: return "BandgapOnly";
    case EnvironmentKind::CavityCoupled: return "CavityCoupled";
  }
  return "?";
}

EnvironmentKind environment_kind_from_string(const std::string& s) {
  if (s == "Bulk") return EnvironmentKind::Bulk;
  if (s == "BandgapOnly") return EnvironmentKind::BandgapOnly;
  if (s == "CavityCoupled") return EnvironmentKind::CavityCoupled;
  throw ValidationError({"unknown environment kind '" + s + "'"});
}

std::vector<std::string> PhotonicEnvironment::violations(const Fields& f) {
  std::vector<std::string> v;
  const bool phc_ok = finite(v, "f_phc", f.f_phc);
  if (phc_ok && !(f.f_phc > 0 && f.f_phc <= 1)) v.push_back("f_phc outside (0, 1]");
  if (f.f_cav) {
    if (finite(v, "f_cav", *f.f_cav) && *f.f_cav < 0) v.push_back("f_cav negative");
  }
  switch (f.kind) {
    case EnvironmentKind::Bulk:
      if (phc_ok && f.f_phc != 1.0) v.push_back("Bulk requires f_phc = 1");
      if (f.f_cav) v.push_back("Bulk must not carry f_cav");
      break;
    case EnvironmentKind::BandgapOnly:
      if (f.f_cav) v.push_back("BandgapOnly must not carry f_cav");
      break;
    case EnvironmentKind::CavityCoupled:
      if (!f.f_cav) v.push_back("CavityCoupled requires f_cav");
      break;
  }
  return v;
}

PhotonicEnvironment::PhotonicEnvironment(const Fields& f) : f_(f) { throw_if_any(violations(f)); }

PhotonicEnvironment PhotonicEnvironment::bulk() {
  return PhotonicEnvironment(Fields{EnvironmentKind::Bulk, 1.0, std::nullopt});
}

PhotonicEnvironment PhotonicEnvironment::bandgap_only(double f_phc) {
  return PhotonicEnvironment(Fields{EnvironmentKind::BandgapOnly, f_phc, std::nullopt});
}

PhotonicEnvironment PhotonicEnvironment::cavity_coupled(double f_cav, double f_phc) {
  return PhotonicEnvironment(Fields{EnvironmentKind::CavityCoupled, f_phc, f_cav});
}

// ---------------------------------------------------------------------------

std::vector<std::string> ThreeLevelRates::violations(const Fields& f) {
  std::vector<std::string> v;
  if (finite(v, "k12", f.k12) && f.k12 < 0) v.push_back("k12 negative");
  if (finite(v, "k21", f.k21) && !(f.k21 > 0)) v.push_back("k21 must be positive");
  if (finite(v, "k23", f.k23) && f.k23 < 0) v.push_back("k23 negative");
  if (finite(v, "k31", f.k31) && !(f.k31 > 0)) v.push_back("k31 must be positive");
  return v;
}

ThreeLevelRates::ThreeLevelRates(const Fields& f) : f_(f) { throw_if_any(violations(f)); }

ThreeLevelRates ThreeLevelRates::with_pump(double k12) const {
  Fields f = f_;
  f.k12 = k12;
  return ThreeLevelRates(f);
}

// ---------------------------------------------------------------------------

std::vector<std::string> G2Params::violations(const Fields& f) {
  std::vector<std::string> v;
  if (finite(v, "tau1", f.tau1) && !(f.tau1 > 0)) v.push_back("tau1 must be positive");
  if (finite(v, "tau2", f.tau2) && !(f.tau2 > 0)) v.push_back("tau2 must be positive");
  if (finite(v, "a", f.a) && f.a < 0) v.push_back("a negative");
  if (std::isfinite(f.tau1) && f.tau1 == f.tau2) v.push_back("tau1 equals tau2");
  return v;
}

G2Params::G2Params(const Fields& f) : f_(f) {
  throw_if_any(violations(f));
  if (f_.tau1 > f_.tau2) std::swap(f_.tau1, f_.tau2);
}

double G2Params::evaluate(double tau) const {
  const double t = std::abs(tau);
  return 1.0 - (1.0 + f_.a) * std::exp(-t / f_.tau1) + f_.a * std::exp(-t / f_.tau2);
}

// ---------------------------------------------------------------------------

std::vector<std::string> G2Curve::violations(const Fields& f) {
  std::vector<std::string> v;
  same_length(v, "delays", f.delays.size(), "values", f.values.size());
  if (!f.sigmas.empty()) same_length(v, "delays", f.delays.size(), "sigmas", f.sigmas.size());
  finite_all(v, "delays", f.delays);
  finite_all(v, "values", f.values);
  finite_all(v, "sigmas", f.sigmas);
  strictly_increasing(v, "delays", f.delays);
  nonnegative_all(v, "values", f.values);
  for (std::size_t i = 0; i < f.sigmas.size(); ++i) {
    if (!(f.sigmas[i] > 0)) {
      v.push_back("sigmas[" + std::to_string(i) + "] must be positive");
      break;
    }
  }
  return v;
}

G2Curve::G2Curve(Fields f) : f_(std::move(f)) { throw_if_any(violations(f_)); }

// ---------------------------------------------------------------------------

std::vector<std::string> PLSpectrum::violations(const Fields& f) {
  std::vector<std::string> v;
  same_length(v, "wavelengths", f.wavelengths.size(), "intensities", f.intensities.size());
  finite_all(v, "wavelengths", f.wavelengths);
  finite_all(v, "intensities", f.intensities);
  strictly_increasing(v, "wavelengths", f.wavelengths);
  nonnegative_all(v, "intensities", f.intensities);
  return v;
}

PLSpectrum::PLSpectrum(Fields f) : f_(std::move(f)) { throw_if_any(violations(f_)); }

// ---------------------------------------------------------------------------

std::vector<std::string> PolarizationScan::violations(const Fields& f) {
  std::vector<std::string> v;
  same_length(v, "angles", f.angles.size(), "intensities", f.intensities.size());
  finite_all(v, "angles", f.angles);
  finite_all(v, "intensities", f.intensities);
  nonnegative_all(v, "intensities", f.intensities);
  return v;
}

PolarizationScan::PolarizationScan(Fields f) : f_(std::move(f)) { throw_if_any(violations(f_)); }

// ---------------------------------------------------------------------------

std::vector<std::string> SaturationCurve::violations(const Fields& f) {
  std::vector<std::string> v;
  same_length(v, "powers", f.powers.size(), "rates", f.rates.size());
  finite_all(v, "powers", f.powers);
  finite_all(v, "rates", f.rates);
  strictly_increasing(v, "powers", f.powers);
  for (std::size_t i = 0; i < f.powers.size(); ++i) {
    if (!(f.powers[i] > 0)) {
      v.push_back("powers[" + std::to_string(i) + "] must be positive");
      break;
    }
  }
  nonnegative_all(v, "rates", f.rates);
  return v;
}

SaturationCurve::SaturationCurve(Fields f) : f_(std::move(f)) { throw_if_any(violations(f_)); }

// ---------------------------------------------------------------------------

CheckedModel validate_model(const RadiativeBudget::Fields& budget,
                            const PhotonicEnvironment::Fields& env) {
  auto v = RadiativeBudget::violations(budget);
  auto e = PhotonicEnvironment::violations(env);
  v.insert(v.end(), e.begin(), e.end());
  throw_if_any(v);
  return CheckedModel{RadiativeBudget(budget), PhotonicEnvironment(env)};
}

}  // namespace cqed
