// fitting.hpp - damped Gauss-Newton least squares and the model fitters built
// on it (g2, Lorentzian peaks, cos^2 polarization, saturation).
#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cqed/model.hpp"

namespace cqed::fitting {

struct Parameter {
  std::string name;
  double init = 0.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  // Typical size of a variation; sets the finite-difference step. 0 means
  // "use the current magnitude".
  double scale = 0.0;
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd values;
  Eigen::MatrixXd covariance;
  double residual_norm = 0.0;  // ||weighted residual||_2
  double reduced_chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;

  std::size_t index(const std::string& name) const;
  double value(const std::string& name) const { return values[static_cast<Eigen::Index>(index(name))]; }
  // 1 sigma; +inf for directions the data do not constrain.
  double sigma(const std::string& name) const;
};

struct FitOptions {
  int max_iterations = 500;
  double xtol = 1e-10;  // relative parameter step
  double ftol = 1e-12;  // relative cost decrease
  // Columns of the column-normalized Jacobian whose smallest singular value
  // falls below this ratio are treated as rank deficient.
  double rank_tolerance = 1e-7;
  // Applied after every trial step (e.g. label reordering); must keep the
  // parameter vector within bounds.
  std::function<void(Eigen::VectorXd&)> canonicalize;
  // Filled with the cost of every accepted iterate when non-null.
  std::vector<double>* cost_trace = nullptr;
};

// Maps parameters to the vector of weighted residuals (model - data) / sigma.
using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// y = f(x; p)
using CurveModel = std::function<double(double x, std::span<const double> p)>;

struct CurveData {
  std::span<const double> x;
  std::span<const double> y;
  std::span<const double> sigma;  // empty -> unit weights
};

// Forward-difference Jacobian of `f` at `p` with step sqrt(eps) * scale_j
// (or sqrt(eps) * |p_j| when no scale is set).
// Steps are reversed where the forward step would leave [lower, upper].
Eigen::MatrixXd numerical_jacobian(const ResidualFunction& f, const Eigen::VectorXd& p,
                                   std::span<const Parameter> params);

// Levenberg-Marquardt with Marquardt diagonal scaling and box bounds enforced by
// projection. Throws RankDeficientError when the normal equations are
// singular at the starting point. Non-convergence is reported through
// FitResult::converged, never thrown.
FitResult least_squares(const ResidualFunction& residuals, std::span<const Parameter> params,
                        const FitOptions& options = {});

FitResult least_squares(const CurveModel& model, const CurveData& data,
                        std::span<const Parameter> params, const FitOptions& options = {});

// Runs least_squares and, if it does not converge, retries from five
// deterministically jittered starting points; returns the best result.
FitResult least_squares_with_restarts(const ResidualFunction& residuals,
                                      std::span<const Parameter> params,
                                      const FitOptions& options = {});

// ---------------------------------------------------------------------------
// g2

// Three-exponential antibunching model convolved with a Gaussian of standard
// deviation `sigma` (s) on the delay axis; sigma = 0 gives the bare model.
double g2_model(double tau, double a, double tau1, double tau2, double irf_sigma = 0.0);

// Kernel width on the delay axis when each of the two detectors adds
// independent Gaussian jitter of `per_detector_sigma`.
double pair_irf_sigma(double per_detector_sigma);

// Rough starting point read off a measured curve.
G2Params estimate_g2_init(const G2Curve& curve);

// Fits (a, tau1, tau2). tau2 > tau1 > 0 and a >= 0 hold on return.
FitResult fit_g2(const G2Curve& curve, const G2Params& init,
                 std::optional<double> irf_sigma = std::nullopt);

// ---------------------------------------------------------------------------
// Lorentzian peaks

struct PeakGuess {
  double center = 0.0;     // nm
  double fwhm = 1.0;       // nm
  double amplitude = 1.0;  // peak height above baseline
};

// baseline + sum_k h_k (fwhm_k/2)^2 / ((x - c_k)^2 + (fwhm_k/2)^2)
double lorentzian_sum(double x, std::span<const double> p);

struct LorentzianFit {
  FitResult fit;  // params center_k, fwhm_k, amplitude_k (k = 0..n-1), baseline
  struct Peak {
    double center, center_sigma;
    double fwhm, fwhm_sigma;
    double amplitude, amplitude_sigma;
    double area, area_sigma;
    double q, q_sigma;
  };
  std::vector<Peak> peaks;
  double baseline = 0.0;
  double baseline_sigma = 0.0;
};

// Peak guesses are taken from `init`; when empty, n_peaks guesses are read
// from the spectrum's largest local maxima.
LorentzianFit fit_lorentzians(const PLSpectrum& spectrum, std::size_t n_peaks,
                              std::span<const PeakGuess> init = {});

// Fit restricted to wavelengths in [lo, hi].
LorentzianFit fit_lorentzians(const PLSpectrum& spectrum, std::size_t n_peaks,
                              std::span<const PeakGuess> init, double lo, double hi);

// ---------------------------------------------------------------------------
// Polarization

struct Cos2Fit {
  FitResult fit;  // phi0 (deg), i_max, i_min
  double phi0 = 0.0, phi0_sigma = 0.0;  // degrees, (-90, 90]
  double i_max = 0.0, i_max_sigma = 0.0;
  double i_min = 0.0, i_min_sigma = 0.0;
  double visibility = 0.0, visibility_sigma = 0.0;
};

// I(phi) = i_min + (i_max - i_min) cos^2(phi - phi0)
double cos2_model(double phi_deg, double phi0_deg, double i_max, double i_min);

Cos2Fit fit_cos2(const PolarizationScan& scan);

// ---------------------------------------------------------------------------
// Saturation

struct SaturationFit {
  FitResult fit;  // r_inf (counts/s), p_sat (mW)
  double r_inf = 0.0, r_inf_sigma = 0.0;
  double p_sat = 0.0, p_sat_sigma = 0.0;
  bool p_sat_poorly_constrained = false;
};

SaturationFit fit_saturation(const SaturationCurve& curve);

}  // namespace cqed::fitting
