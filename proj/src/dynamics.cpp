#include "cqed/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "cqed/errors.hpp"

namespace cqed::dynamics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Real spectral decomposition of p2(t | p(0) = |1>):
//   p2(t) = sum_k coef[k] exp(lambda[k] t)
struct Decomposition {
  GeneratorSpectrum spectrum;
  double coef_fast = 0.0;
  double coef_slow = 0.0;
  bool usable = false;  // real and non-degenerate
};

Decomposition decompose(const ThreeLevelRates& rates) {
  const Eigen::Matrix3d m = generator(rates);
  Eigen::EigenSolver<Eigen::Matrix3d> es(m);
  const Eigen::Vector3cd lam = es.eigenvalues();
  const Eigen::Matrix3cd v = es.eigenvectors();

  Decomposition d;
  const double scale = lam.cwiseAbs().maxCoeff();
  int zero = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(lam[k]) < std::abs(lam[zero])) zero = k;
  }
  int o[2], n = 0;
  for (int k = 0; k < 3; ++k) {
    if (k != zero) o[n++] = k;
  }
  if (lam[o[0]].real() > lam[o[1]].real()) std::swap(o[0], o[1]);
  const int fast = o[0], slow = o[1];

  auto& s = d.spectrum;
  s.zero = lam[zero].real();
  s.fast = lam[fast].real();
  s.slow = lam[slow].real();
  s.complex = std::abs(lam[fast].imag()) > 1e-12 * scale || std::abs(lam[slow].imag()) > 1e-12 * scale;
  s.near_degenerate = !s.complex && std::abs(s.fast - s.slow) < 1e-6 * std::abs(s.fast);
  if (s.complex || s.near_degenerate) return d;

  const Eigen::Matrix3cd w = v.inverse();
  d.coef_fast = (v(1, fast) * w(fast, 0)).real();
  d.coef_slow = (v(1, slow) * w(slow, 0)).real();
  d.usable = true;
  return d;
}

void require_pump(const ThreeLevelRates& rates, const char* where) {
  if (!(rates.k12() > 0))
    throw DomainError(std::string(where) + ": g2 is undefined without pumping (k12 = 0)");
}

}  // namespace

Eigen::Matrix3d generator(const ThreeLevelRates& r) {
  Eigen::Matrix3d m;
  // columns: from |1>, |2>, |3>
  m << -r.k12(), r.k21(), r.k31(),
       r.k12(), -(r.k21() + r.k23()), 0.0,
       0.0, r.k23(), -r.k31();
  return m;
}

Eigen::Vector3d steady_state(const ThreeLevelRates& rates) {
  Eigen::Matrix3d a = generator(rates);
  a.row(2).setOnes();
  const Eigen::Vector3d b(0.0, 0.0, 1.0);
  Eigen::Vector3d p = a.fullPivLu().solve(b);
  p = p.cwiseMax(0.0);
  return p / p.sum();
}

Eigen::Vector3d propagate(const ThreeLevelRates& rates, const Eigen::Vector3d& p0, double t) {
  const Eigen::Matrix3d mt = generator(rates) * t;
  return mt.exp() * p0;
}

GeneratorSpectrum generator_spectrum(const ThreeLevelRates& rates) { return decompose(rates).spectrum; }

double g2_analytic(const ThreeLevelRates& rates, double delay) {
  const double d[1] = {delay};
  return g2_analytic(rates, d).values()[0];
}

G2Curve g2_analytic(const ThreeLevelRates& rates, std::span<const double> delays) {
  require_pump(rates, "g2_analytic");
  const Decomposition dec = decompose(rates);
  const double p2ss = steady_state(rates)[1];
  const Eigen::Vector3d ground(1.0, 0.0, 0.0);

  G2Curve::Fields f;
  f.delays.assign(delays.begin(), delays.end());
  f.values.reserve(delays.size());
  for (double tau : delays) {
    const double t = std::abs(tau);
    double g;
    if (t == 0.0) {
      g = 0.0;
    } else if (dec.usable) {
      g = 1.0 + (dec.coef_fast * std::exp(dec.spectrum.fast * t) +
                 dec.coef_slow * std::exp(dec.spectrum.slow * t)) / p2ss;
    } else {
      g = propagate(rates, ground, t)[1] / p2ss;
    }
    f.values.push_back(std::max(g, 0.0));
  }
  return G2Curve(std::move(f));
}

G2Decomposition g2_params_from_rates(const ThreeLevelRates& rates) {
  require_pump(rates, "g2_params_from_rates");
  if (rates.k23() == 0.0) {
    // |3> is unreachable: pure two-level antibunching, the tau2 term has zero
    // weight and tau2 is only kept above tau1 for the canonical ordering.
    const double t1 = 1.0 / (rates.k12() + rates.k21());
    const double t2 = 1.0 / rates.k31() > t1 ? 1.0 / rates.k31() : 2.0 * t1;
    return {G2Params(t1, t2, 0.0), false};
  }
  const Decomposition dec = decompose(rates);
  if (dec.spectrum.complex)
    throw UnphysicalError("g2_params_from_rates: complex generator eigenvalues (oscillating g2); "
                          "check the rate set");
  G2Decomposition out;
  if (dec.spectrum.near_degenerate) {
    out.near_degenerate = true;
    return out;
  }
  const double p2ss = steady_state(rates)[1];
  double a = dec.coef_slow / p2ss;
  if (a < 0) {
    if (a < -1e-9)
      throw UnphysicalError("g2_params_from_rates: negative bunching amplitude a = " +
                            std::to_string(a) + "; the slow mode is not a shelving mode");
    a = 0.0;
  }
  out.params = G2Params(-1.0 / dec.spectrum.fast, -1.0 / dec.spectrum.slow, a);
  return out;
}

// ---------------------------------------------------------------------------

PumpModel::PumpModel(double sigma) : sigma_(sigma) {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw ValidationError({"sigma must be positive"});
}

double PumpModel::p_sat(const ThreeLevelRates& r) const {
  return r.k31() * (r.k21() + r.k23()) / (sigma_ * (r.k31() + r.k23()));
}

ThreeLevelRates PumpModel::at_power(const ThreeLevelRates& base, double power_mw) const {
  return base.with_pump(k12(power_mw));
}

PowerSweep::PowerSweep(std::vector<double> powers, std::vector<G2Params> params,
                       std::vector<double> counts)
    : powers_(std::move(powers)), params_(std::move(params)), counts_(std::move(counts)) {
  std::vector<std::string> v;
  if (powers_.size() != params_.size()) v.push_back("powers and params differ in length");
  if (!counts_.empty() && counts_.size() != powers_.size())
    v.push_back("powers and counts differ in length");
  for (std::size_t i = 0; i < powers_.size(); ++i) {
    if (!std::isfinite(powers_[i])) v.push_back("powers[" + std::to_string(i) + "] not finite");
    if (i > 0 && !(powers_[i] > powers_[i - 1])) {
      v.push_back("powers not strictly increasing at index " + std::to_string(i));
      break;
    }
  }
  if (!v.empty()) throw ValidationError(v);
}

PowerSweep power_sweep(const ThreeLevelRates& base, const PumpModel& pump,
                       std::span<const double> powers) {
  std::vector<G2Params> params;
  params.reserve(powers.size());
  for (double p : powers) {
    if (!(p > 0)) throw DomainError("power_sweep: powers must be positive");
    auto dec = g2_params_from_rates(pump.at_power(base, p));
    if (!dec.params)
      throw UnphysicalError("power_sweep: degenerate eigenvalues at P = " + std::to_string(p) + " mW");
    params.push_back(*dec.params);
  }
  return PowerSweep(std::vector<double>(powers.begin(), powers.end()), std::move(params));
}

// ---------------------------------------------------------------------------

namespace {

struct LinearFit {
  double slope = 0.0, intercept = 0.0;
};

LinearFit linear_regression(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  LinearFit f;
  f.slope = den != 0 ? (n * sxy - sx * sy) / den : 0.0;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

// Closed-form starting points. The nonzero eigenvalues satisfy
//   -(l1 + l2) = sigma P + k21 + k23 + k31
//   l1 l2      = sigma (k23 + k31) P + k31 (k21 + k23)
// so both are linear in P; the two roots of the zero-power quadratic can be
// assigned to k31 either way, hence two candidates.
std::vector<Eigen::Vector4d> initial_guesses(const PowerSweep& sweep) {
  std::vector<double> p, b, c;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const auto& g = sweep.params()[i];
    p.push_back(sweep.powers()[i]);
    b.push_back(1.0 / g.tau1() + 1.0 / g.tau2());
    c.push_back(1.0 / (g.tau1() * g.tau2()));
  }
  const LinearFit fb = linear_regression(p, b);
  const LinearFit fc = linear_regression(p, c);
  const double pmax = p.back();
  const double g0 = 1.0 / sweep.params().front().tau1();
  const double s_sum = fb.intercept > 0 ? fb.intercept : g0;
  const double sigma = fb.slope > 0 ? fb.slope : 0.1 * g0 / pmax;
  const double t = std::max(fc.slope / sigma, 0.0);  // k23 + k31
  double prod = fc.intercept;
  const double disc = std::max(s_sum * s_sum - 4.0 * std::max(prod, 0.0), 0.0);
  const double u = 0.5 * (s_sum + std::sqrt(disc));
  const double v = std::max(0.5 * (s_sum - std::sqrt(disc)), 1e-3 * u);

  std::vector<Eigen::Vector4d> out;
  for (const auto& [decay, k31] : {std::pair{u, v}, std::pair{v, u}}) {
    const double k23 = std::clamp(t - k31, 0.0, 0.9 * decay);
    const double k21 = decay - k23;
    if (k21 > 0 && k31 > 0) out.emplace_back(k21, k23, k31, sigma);
  }
  return out;
}

}  // namespace

ZeroPowerExtrapolation extrapolate_zero_power(const PowerSweep& sweep) {
  std::set<double> distinct(sweep.powers().begin(), sweep.powers().end());
  if (distinct.size() < 3)
    throw RankDeficientError("extrapolate_zero_power: fewer than 3 distinct powers; the pump "
                             "cross-section cannot be separated from the decay rates",
                             "sigma");
  for (double p : sweep.powers()) {
    if (!(p > 0)) throw DomainError("extrapolate_zero_power: powers must be positive");
  }

  const std::size_t n = sweep.size();
  fitting::ResidualFunction f = [&](const Eigen::VectorXd& q) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(3 * n));
    try {
      const ThreeLevelRates base(0.0, q[0], q[1], q[2]);
      const PumpModel pump(q[3]);
      for (std::size_t i = 0; i < n; ++i) {
        const auto dec = g2_params_from_rates(pump.at_power(base, sweep.powers()[i]));
        if (!dec.params) throw UnphysicalError("degenerate");
        const auto& obs = sweep.params()[i];
        const auto k = static_cast<Eigen::Index>(3 * i);
        r[k] = (dec.params->tau1() - obs.tau1()) / obs.tau1();
        r[k + 1] = (dec.params->tau2() - obs.tau2()) / obs.tau2();
        r[k + 2] = (dec.params->a() - obs.a()) / std::max(obs.a(), 0.1);
      }
    } catch (const Error&) {
      r.setConstant(kInf);
    }
    return r;
  };

  std::optional<fitting::FitResult> best;
  std::optional<RankDeficientError> rank_error;
  for (const Eigen::Vector4d& g : initial_guesses(sweep)) {
    const std::vector<fitting::Parameter> params = {
        {"k21", g[0], 1e-9 * g[0], kInf, g[0]},
        {"k23", g[1], 0.0, kInf, std::max(g[1], 1e-3 * g[0])},
        {"k31", g[2], 1e-9 * g[2], kInf, g[2]},
        {"sigma", g[3], 1e-9 * g[3], kInf, g[3]},
    };
    try {
      auto res = fitting::least_squares_with_restarts(f, params);
      if (!best || (res.converged && !best->converged) ||
          (res.converged == best->converged && res.residual_norm < best->residual_norm))
        best = std::move(res);
    } catch (const RankDeficientError& e) {
      rank_error = e;
    } catch (const DomainError&) {
      // unphysical starting point for this root assignment
    }
  }
  if (!best) {
    if (rank_error) throw *rank_error;
    throw InfeasibleError("extrapolate_zero_power: no physical rate set reproduces the sweep");
  }

  ZeroPowerExtrapolation out;
  const auto& v = best->values;
  out.rates_fit = ThreeLevelRates(0.0, v[0], v[1], v[2]);
  out.sigma = v[3];
  out.tau1_zero = 1.0 / (v[0] + v[1]);
  out.fit = std::move(*best);
  return out;
}

// ---------------------------------------------------------------------------

double excited_population_limit(const ThreeLevelRates& r) { return r.k31() / (r.k31() + r.k23()); }

SaturationCurve saturation_curve(const ThreeLevelRates& base, const PumpModel& pump,
                                 double collection_eff, double eta_qe,
                                 std::span<const double> powers) {
  if (!(collection_eff > 0 && collection_eff <= 1))
    throw DomainError("saturation_curve: collection_eff outside (0, 1]");
  if (!(eta_qe >= 0 && eta_qe <= 1)) throw DomainError("saturation_curve: eta_qe outside [0, 1]");
  SaturationCurve::Fields f;
  f.powers.assign(powers.begin(), powers.end());
  for (double p : powers) {
    const double p2 = steady_state(pump.at_power(base, p))[1];
    f.rates.push_back(collection_eff * eta_qe * base.k21() * p2);
  }
  return SaturationCurve(std::move(f));
}

double qe_from_saturation(double r_inf, const ThreeLevelRates& rates_fit, double collection_eff) {
  if (!(collection_eff > 0)) throw DomainError("qe_from_saturation: collection_eff must be positive");
  if (!(r_inf >= 0) || !std::isfinite(r_inf)) throw DomainError("qe_from_saturation: invalid R_inf");
  const double eta = r_inf / (collection_eff * rates_fit.k21() * excited_population_limit(rates_fit));
  if (eta > 1.05)
    throw InfeasibleError("qe_from_saturation: inconsistent calibration, implied efficiency " +
                          std::to_string(eta) + " > 1");
  return eta;
}

}  // namespace cqed::dynamics
