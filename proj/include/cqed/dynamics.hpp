// dynamics.hpp - three-level population dynamics of a single emitter.
//
// States: |1> ground, |2> excited, |3> shelving. The generator acts on column
// population vectors, dp/dt = M p, with M(j, i) = rate i -> j for i != j and
// columns summing to zero.
#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cqed/fitting.hpp"
#include "cqed/model.hpp"

namespace cqed::dynamics {

Eigen::Matrix3d generator(const ThreeLevelRates& rates);

// Kernel vector of the generator normalized to unit sum.
Eigen::Vector3d steady_state(const ThreeLevelRates& rates);

// p(t) = exp(M t) p0 by matrix exponential.
Eigen::Vector3d propagate(const ThreeLevelRates& rates, const Eigen::Vector3d& p0, double t);

struct GeneratorSpectrum {
  double zero = 0.0;  // numerically ~0
  double fast = 0.0;  // most negative
  double slow = 0.0;
  bool complex = false;
  bool near_degenerate = false;  // |fast - slow| < 1e-6 |fast|
};

GeneratorSpectrum generator_spectrum(const ThreeLevelRates& rates);

// g2(tau) = p2(|tau| | start in |1>) / p2(steady state), from the generator.
// Requires k12 > 0.
G2Curve g2_analytic(const ThreeLevelRates& rates, std::span<const double> delays);
double g2_analytic(const ThreeLevelRates& rates, double delay);

struct G2Decomposition {
  std::optional<G2Params> params;  // empty when eigenvalues nearly coincide
  bool near_degenerate = false;
};

// Maps the generator's spectral decomposition onto
// 1 - (1+a) exp(-|tau|/tau1) + a exp(-|tau|/tau2).
// Throws UnphysicalError for complex eigenvalues or a negative bunching
// amplitude.
G2Decomposition g2_params_from_rates(const ThreeLevelRates& rates);

// Linear pump law k12 = sigma * P.
class PumpModel {
 public:
  explicit PumpModel(double sigma_hz_per_mw);

  double sigma() const { return sigma_; }
  double k12(double power_mw) const { return sigma_ * power_mw; }
  // Power at which the excited population reaches half its P -> inf limit.
  double p_sat(const ThreeLevelRates& rates) const;
  // `base` with k12 replaced by sigma * P.
  ThreeLevelRates at_power(const ThreeLevelRates& base, double power_mw) const;

 private:
  double sigma_;
};

class PowerSweep {
 public:
  PowerSweep(std::vector<double> powers, std::vector<G2Params> params,
             std::vector<double> counts = {});

  const std::vector<double>& powers() const { return powers_; }
  const std::vector<G2Params>& params() const { return params_; }
  const std::vector<double>& counts() const { return counts_; }
  std::size_t size() const { return powers_.size(); }

 private:
  std::vector<double> powers_;
  std::vector<G2Params> params_;
  std::vector<double> counts_;
};

// `base.k12()` is ignored; each point uses k12 = sigma * P.
PowerSweep power_sweep(const ThreeLevelRates& base, const PumpModel& pump,
                       std::span<const double> powers);

struct ZeroPowerExtrapolation {
  double tau1_zero = 0.0;  // 1 / (k21 + k23)
  ThreeLevelRates rates_fit{0.0, 1.0, 0.0, 1.0};  // k12 = 0
  double sigma = 0.0;                              // Hz per mW
  fitting::FitResult fit;                          // params k21, k23, k31, sigma
};

// Least-squares fit of (k21, k23, k31, sigma) to the (tau1, tau2, a) triples.
ZeroPowerExtrapolation extrapolate_zero_power(const PowerSweep& sweep);

// Excited population in the P -> inf limit, k31 / (k31 + k23).
double excited_population_limit(const ThreeLevelRates& rates);

// rate(P) = collection_eff * eta_qe * k21 * p2(P).
SaturationCurve saturation_curve(const ThreeLevelRates& base, const PumpModel& pump,
                                 double collection_eff, double eta_qe,
                                 std::span<const double> powers);

// eta = R_inf / (collection_eff * k21 * p2_max). Throws InfeasibleError above
// 1.05 (inconsistent calibration).
double qe_from_saturation(double r_inf, const ThreeLevelRates& rates_fit, double collection_eff);

}  // namespace cqed::dynamics
