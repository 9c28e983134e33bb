#include "cqed/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "cqed/errors.hpp"

namespace cqed::fitting {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double step_scale(const Parameter& par, double value) {
  if (par.scale > 0) return std::max(par.scale, 1e-3 * std::abs(value));
  double s = std::abs(value);
  if (s == 0.0) s = std::abs(par.init);
  if (s == 0.0) s = 1.0;
  return s;
}

Eigen::VectorXd project(Eigen::VectorXd p, std::span<const Parameter> params) {
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const auto& par = params[static_cast<std::size_t>(j)];
    p[j] = std::clamp(p[j], par.lower, par.upper);
  }
  return p;
}

std::string describe_direction(const Eigen::VectorXd& v, std::span<const Parameter> params) {
  std::ostringstream os;
  os.precision(3);
  bool first = true;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (std::abs(v[j]) < 0.1) continue;
    if (!first) os << (v[j] < 0 ? " - " : " + ");
    else if (v[j] < 0) os << "-";
    os << std::abs(v[j]) << "*" << params[static_cast<std::size_t>(j)].name;
    first = false;
  }
  return os.str();
}

// Returns the unidentifiable direction, or empty when the Jacobian has full
// column rank.
std::string rank_deficiency(const Eigen::MatrixXd& jac, std::span<const Parameter> params,
                            double tol) {
  const Eigen::Index n = jac.cols();
  if (jac.rows() < n) return "more parameters than data points";
  Eigen::MatrixXd jn = jac;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double c = jn.col(j).norm();
    if (!(c > 0)) return params[static_cast<std::size_t>(j)].name;
    jn.col(j) /= c;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jn, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (s[n - 1] < tol * s[0]) return describe_direction(svd.matrixV().col(n - 1), params);
  return {};
}

struct Covariance {
  Eigen::MatrixXd cov;
  bool singular = false;
};

// (J^T J)^-1 via SVD of the column-normalized Jacobian; unconstrained
// directions get infinite variance.
Covariance unscaled_covariance(const Eigen::MatrixXd& jac, double tol) {
  const Eigen::Index n = jac.cols();
  Covariance out;
  Eigen::VectorXd norms(n);
  Eigen::MatrixXd jn = jac;
  for (Eigen::Index j = 0; j < n; ++j) {
    norms[j] = jn.col(j).norm();
    if (norms[j] > 0) jn.col(j) /= norms[j];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jn, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const auto& v = svd.matrixV();
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
  std::vector<Eigen::Index> null_dirs;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s[0] > 0 && s[k] > tol * s[0]) {
      inv += v.col(k) * v.col(k).transpose() / (s[k] * s[k]);
    } else {
      null_dirs.push_back(k);
    }
  }
  out.cov = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = (norms[i] > 0 && norms[j] > 0) ? norms[i] * norms[j] : 0.0;
      out.cov(i, j) = d > 0 ? inv(i, j) / d : 0.0;
    }
  }
  for (Eigen::Index k : null_dirs) {
    out.singular = true;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::abs(v(j, k)) > 1e-3 || !(norms[j] > 0)) out.cov(j, j) = kInf;
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(norms[j] > 0)) {
      out.cov(j, j) = kInf;
      out.singular = true;
    }
  }
  return out;
}

}  // namespace

std::size_t FitResult::index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw DomainError("FitResult: no parameter named '" + name + "'");
}

double FitResult::sigma(const std::string& name) const {
  const auto i = static_cast<Eigen::Index>(index(name));
  const double v = covariance(i, i);
  return v >= 0 ? std::sqrt(v) : kInf;
}

Eigen::MatrixXd numerical_jacobian(const ResidualFunction& f, const Eigen::VectorXd& p,
                                   std::span<const Parameter> params) {
  const Eigen::VectorXd r0 = f(p);
  Eigen::MatrixXd jac(r0.size(), p.size());
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const auto& par = params[static_cast<std::size_t>(j)];
    double h = root_eps * step_scale(par, p[j]);
    if (p[j] + h > par.upper) h = -h;
    Eigen::VectorXd q = p;
    q[j] = p[j] + h;
    h = q[j] - p[j];  // exactly representable step
    Eigen::VectorXd r1 = f(q);
    if (!r1.allFinite()) {
      q[j] = p[j] - h;
      h = q[j] - p[j];
      r1 = f(q);
    }
    jac.col(j) = (r1 - r0) / h;
  }
  return jac;
}

// Largest |cos| between the residual vector and a Jacobian column.
static double scaled_gradient(const Eigen::MatrixXd& jac, const Eigen::VectorXd& r) {
  const double rn = r.norm();
  double gmax = 0;
  for (Eigen::Index j = 0; j < jac.cols(); ++j) {
    const double cj = jac.col(j).norm();
    if (cj > 0 && rn > 0) gmax = std::max(gmax, std::abs(jac.col(j).dot(r)) / (cj * rn));
  }
  return gmax;
}

FitResult least_squares(const ResidualFunction& f, std::span<const Parameter> params,
                        const FitOptions& opt) {
  const auto n = static_cast<Eigen::Index>(params.size());
  if (n == 0) throw DomainError("least_squares: no parameters");
  Eigen::VectorXd p(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& par = params[static_cast<std::size_t>(j)];
    if (!std::isfinite(par.init) || par.init < par.lower || par.init > par.upper)
      throw DomainError("least_squares: initial value of '" + par.name + "' outside its bounds");
    p[j] = par.init;
  }
  if (opt.canonicalize) opt.canonicalize(p);

  Eigen::VectorXd r = f(p);
  if (!r.allFinite()) throw DomainError("least_squares: residuals not finite at the initial point");
  double cost = 0.5 * r.squaredNorm();
  Eigen::MatrixXd jac = numerical_jacobian(f, p, params);
  if (!jac.allFinite()) throw DomainError("least_squares: Jacobian not finite at the initial point");
  if (auto dir = rank_deficiency(jac, params, opt.rank_tolerance); !dir.empty())
    throw RankDeficientError("least_squares: singular normal equations, unidentifiable direction: " + dir,
                             dir);

  FitResult res;
  for (const auto& par : params) res.names.push_back(par.name);
  if (opt.cost_trace) opt.cost_trace->push_back(cost);

  double lambda = 1e-3;
  bool converged = cost == 0.0;
  int it = 0;
  while (!converged && it < opt.max_iterations) {
    ++it;
    const Eigen::MatrixXd a = jac.transpose() * jac;
    const Eigen::VectorXd g = jac.transpose() * r;
    Eigen::VectorXd d = a.diagonal();
    const double dmax = d.maxCoeff();
    for (Eigen::Index j = 0; j < n; ++j) d[j] = std::max(d[j], 1e-30 * dmax);

    bool accepted = false;
    Eigen::VectorXd p_new, r_new;
    double cost_new = 0;
    while (!accepted && lambda < 1e20) {
      Eigen::MatrixXd damped = a;
      damped.diagonal() += lambda * d;
      const Eigen::VectorXd step = damped.ldlt().solve(-g);
      p_new = project(p + step, params);
      if (opt.canonicalize) opt.canonicalize(p_new);
      r_new = f(p_new);
      cost_new = r_new.allFinite() ? 0.5 * r_new.squaredNorm() : kInf;
      if (cost_new <= cost && (p_new - p).cwiseAbs().maxCoeff() > 0) {
        accepted = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) {
      // No descent direction left at machine precision; converged when the
      // scaled gradient vanishes.
      converged = scaled_gradient(jac, r) < 1e-6;
      break;
    }

    double rel_step = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double s = step_scale(params[static_cast<std::size_t>(j)], p[j]);
      rel_step = std::max(rel_step, std::abs(p_new[j] - p[j]) / s);
    }
    const double rel_decrease = cost > 0 ? (cost - cost_new) / cost : 0.0;
    p = p_new;
    r = r_new;
    cost = cost_new;
    if (opt.cost_trace) opt.cost_trace->push_back(cost);
    const double lambda_used = lambda;
    lambda = std::max(lambda / 10.0, 1e-15);
    if (cost == 0.0) {
      converged = true;
      break;
    }
    jac = numerical_jacobian(f, p, params);
    if (!jac.allFinite()) break;
    // a heavily damped step is short by construction; trust the tolerances
    // after an essentially Gauss-Newton step or once the gradient vanishes
    if ((rel_step < opt.xtol || rel_decrease < opt.ftol) &&
        (lambda_used <= 1e-6 || scaled_gradient(jac, r) < 1e-6)) {
      converged = true;
      break;
    }
  }

  res.values = p;
  res.iterations = it;
  res.converged = converged;
  res.residual_norm = std::sqrt(2.0 * cost);
  const auto m = r.size();
  if (m > n) {
    res.reduced_chi2 = 2.0 * cost / static_cast<double>(m - n);
  } else {
    res.reduced_chi2 = 1.0;
    res.warnings.push_back("no degrees of freedom; covariance not scaled");
  }
  const Eigen::MatrixXd jac_final = numerical_jacobian(f, p, params);
  Covariance c = unscaled_covariance(jac_final, opt.rank_tolerance);
  res.covariance = c.cov * res.reduced_chi2;
  // inf * 0 for noiseless fits of unconstrained directions
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isnan(res.covariance(j, j))) res.covariance(j, j) = kInf;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j && !std::isfinite(res.covariance(i, j))) res.covariance(i, j) = 0.0;
    }
  }
  if (c.singular) res.warnings.push_back("Jacobian singular at the solution; some parameters unconstrained");
  if (!converged) res.warnings.push_back("did not converge");
  return res;
}

FitResult least_squares(const CurveModel& model, const CurveData& data,
                        std::span<const Parameter> params, const FitOptions& options) {
  if (data.x.size() != data.y.size() || (!data.sigma.empty() && data.sigma.size() != data.x.size()))
    throw DomainError("least_squares: data arrays differ in length");
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    if (!std::isfinite(data.x[i]) || !std::isfinite(data.y[i]) ||
        (!data.sigma.empty() && !(data.sigma[i] > 0)))
      throw DomainError("least_squares: non-finite data or non-positive sigma at index " +
                        std::to_string(i));
  }
  ResidualFunction f = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(data.x.size()));
    const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
    for (std::size_t i = 0; i < data.x.size(); ++i) {
      const double w = data.sigma.empty() ? 1.0 : 1.0 / data.sigma[i];
      r[static_cast<Eigen::Index>(i)] = (model(data.x[i], ps) - data.y[i]) * w;
    }
    return r;
  };
  return least_squares(f, params, options);
}

FitResult least_squares_with_restarts(const ResidualFunction& f, std::span<const Parameter> params,
                                      const FitOptions& options) {
  FitResult best = least_squares(f, params, options);
  if (best.converged) return best;
  static constexpr double kFactors[5] = {0.7, 1.4, 0.5, 2.0, 1.15};
  for (int k = 0; k < 5; ++k) {
    std::vector<Parameter> jittered(params.begin(), params.end());
    for (std::size_t j = 0; j < jittered.size(); ++j) {
      auto& par = jittered[j];
      const double fct = kFactors[(static_cast<std::size_t>(k) + j) % 5];
      double v = par.init != 0.0 ? par.init * fct : step_scale(par, 0.0) * (fct - 1.0);
      par.init = std::clamp(v, par.lower, par.upper);
    }
    try {
      FitResult r = least_squares(f, jittered, options);
      const bool better = (r.converged && !best.converged) ||
                          (r.converged == best.converged && r.residual_norm < best.residual_norm);
      if (better) best = std::move(r);
      if (best.converged) break;
    } catch (const RankDeficientError&) {
      // a jittered start may land on a degenerate point; keep the others
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// g2

namespace {

double g2_bare(double tau, double a, double tau1, double tau2) {
  const double t = std::abs(tau);
  return 1.0 - (1.0 + a) * std::exp(-t / tau1) + a * std::exp(-t / tau2);
}

// Composite Simpson of g2_bare(tau - s) * gauss(s) over [s0, s1].
double simpson_piece(double tau, double a, double tau1, double tau2, double sigma, double s0,
                     double s1, int intervals, double& weight) {
  const double h = (s1 - s0) / intervals;
  double acc = 0, wacc = 0;
  for (int k = 0; k <= intervals; ++k) {
    const double s = s0 + h * k;
    const double c = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    const double gk = std::exp(-0.5 * (s / sigma) * (s / sigma));
    acc += c * gk * g2_bare(tau - s, a, tau1, tau2);
    wacc += c * gk;
  }
  weight += wacc * h / 3.0;
  return acc * h / 3.0;
}

}  // namespace

double g2_model(double tau, double a, double tau1, double tau2, double irf_sigma) {
  if (!(irf_sigma > 0)) return g2_bare(tau, a, tau1, tau2);
  constexpr int kIntervals = 48;
  const double lo = -6.0 * irf_sigma;
  const double hi = 6.0 * irf_sigma;
  double weight = 0, acc = 0;
  // The kink of |tau - s| sits at s = tau; integrate each side separately.
  if (tau > lo && tau < hi) {
    acc += simpson_piece(tau, a, tau1, tau2, irf_sigma, lo, tau, kIntervals, weight);
    acc += simpson_piece(tau, a, tau1, tau2, irf_sigma, tau, hi, kIntervals, weight);
  } else {
    acc += simpson_piece(tau, a, tau1, tau2, irf_sigma, lo, hi, 2 * kIntervals, weight);
  }
  return acc / weight;
}

double pair_irf_sigma(double per_detector_sigma) { return std::sqrt(2.0) * per_detector_sigma; }

G2Params estimate_g2_init(const G2Curve& curve) {
  const auto& t = curve.delays();
  const auto& y = curve.values();
  const auto& sg = curve.sigmas();
  const std::size_t n = t.size();
  if (n < 3) throw DomainError("estimate_g2_init: need at least 3 points");

  std::vector<double> at(n);
  for (std::size_t i = 0; i < n; ++i) at[i] = std::abs(t[i]);
  std::vector<double> sorted = at;
  std::sort(sorted.begin(), sorted.end());
  double dt = 0;
  for (std::size_t i = 1; i < n && dt == 0; ++i) dt = sorted[i] - sorted[i - 1];
  const double tmax = sorted.back();
  if (!(dt > 0) || !(tmax > 0)) throw DomainError("estimate_g2_init: delays do not span an interval");

  // For fixed (tau1, tau2) the model is linear in a, so a coarse log grid over
  // the two times with a solved in closed form gives a robust start.
  auto log_grid = [](double lo, double hi, int m) {
    std::vector<double> g(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) g[static_cast<std::size_t>(k)] = lo * std::pow(hi / lo, k / double(m - 1));
    return g;
  };
  const auto g1 = log_grid(0.25 * dt, tmax / 3, 40);
  const auto g2 = log_grid(dt, 3 * tmax, 40);
  double best_cost = kInf, b1 = g1[0], b2 = g2.back(), ba = 0;
  std::vector<double> e1(n), e2(n);
  for (double tau1 : g1) {
    for (std::size_t i = 0; i < n; ++i) e1[i] = std::exp(-at[i] / tau1);
    for (double tau2 : g2) {
      if (tau2 <= 1.5 * tau1) continue;
      for (std::size_t i = 0; i < n; ++i) e2[i] = std::exp(-at[i] / tau2);
      // residual = (1 - e1 - y) + a (e2 - e1)
      double suu = 0, suv = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = sg.empty() ? 1.0 : 1.0 / (sg[i] * sg[i]);
        const double u = e2[i] - e1[i], v = 1 - e1[i] - y[i];
        suu += w * u * u;
        suv += w * u * v;
      }
      const double a = suu > 0 ? std::max(-suv / suu, 0.0) : 0.0;
      double cost = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = sg.empty() ? 1.0 : 1.0 / (sg[i] * sg[i]);
        const double r = 1 - e1[i] - y[i] + a * (e2[i] - e1[i]);
        cost += w * r * r;
      }
      if (cost < best_cost) {
        best_cost = cost;
        b1 = tau1;
        b2 = tau2;
        ba = a;
      }
    }
  }
  return G2Params(b1, b2, ba);
}

FitResult fit_g2(const G2Curve& curve, const G2Params& init, std::optional<double> irf_sigma) {
  if (curve.size() < 8) throw DomainError("fit_g2: need at least 8 points");
  const double sigma_irf = irf_sigma.value_or(0.0);
  if (sigma_irf < 0 || !std::isfinite(sigma_irf)) throw DomainError("fit_g2: irf_sigma must be >= 0");

  double tau_span = 0;
  for (double d : curve.delays()) tau_span = std::max(tau_span, std::abs(d));
  const std::vector<Parameter> params = {
      {"a", init.a(), 0.0, kInf, 1.0},
      {"tau1", init.tau1(), init.tau1() * 1e-6, kInf, init.tau1()},
      {"tau2", init.tau2(), init.tau1() * 1e-6, 10.0 * tau_span, init.tau2()},
  };
  const auto& x = curve.delays();
  const auto& y = curve.values();
  const auto& s = curve.sigmas();
  ResidualFunction f = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double w = s.empty() ? 1.0 : 1.0 / s[i];
      r[static_cast<Eigen::Index>(i)] = (g2_model(x[i], p[0], p[1], p[2], sigma_irf) - y[i]) * w;
    }
    return r;
  };
  // the model is not symmetric in (tau1, tau2), so no swapping
  FitResult res = least_squares_with_restarts(f, params);
  if (res.values[1] > res.values[2]) res.warnings.push_back("tau1 exceeds tau2");
  if (res.values[1] == res.values[2]) res.warnings.push_back("tau1 and tau2 coincide");
  return res;
}

// ---------------------------------------------------------------------------
// Lorentzians

double lorentzian_sum(double x, std::span<const double> p) {
  const std::size_t n = (p.size() - 1) / 3;
  double y = p.back();
  for (std::size_t k = 0; k < n; ++k) {
    const double c = p[3 * k], hw = 0.5 * p[3 * k + 1], h = p[3 * k + 2];
    const double d = x - c;
    y += h * hw * hw / (d * d + hw * hw);
  }
  return y;
}

namespace {

std::vector<PeakGuess> auto_peak_guesses(std::span<const double> x, std::span<const double> y,
                                         std::size_t n_peaks) {
  std::vector<std::size_t> maxima;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (y[i] >= y[i - 1] && y[i] > y[i + 1]) maxima.push_back(i);
  }
  if (maxima.empty()) maxima.push_back(static_cast<std::size_t>(
      std::max_element(y.begin(), y.end()) - y.begin()));
  std::sort(maxima.begin(), maxima.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  std::vector<double> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  const double base = sorted[sorted.size() / 10];
  std::vector<PeakGuess> out;
  const double range = x.back() - x.front();
  for (std::size_t k = 0; k < n_peaks; ++k) {
    PeakGuess g;
    if (k < maxima.size()) {
      const std::size_t i = maxima[k];
      const double half = base + 0.5 * (y[i] - base);
      std::size_t l = i, r = i;
      while (l > 0 && y[l] > half) --l;
      while (r + 1 < x.size() && y[r] > half) ++r;
      g.center = x[i];
      g.fwhm = std::max(x[r] - x[l], 2.0 * range / static_cast<double>(x.size()));
      g.amplitude = y[i] - base;
    } else {
      g.center = x.front() + range * (static_cast<double>(k) + 0.5) / static_cast<double>(n_peaks);
      g.fwhm = range / 10.0;
      g.amplitude = 0.0;
    }
    out.push_back(g);
  }
  return out;
}

}  // namespace

LorentzianFit fit_lorentzians(const PLSpectrum& spectrum, std::size_t n_peaks,
                              std::span<const PeakGuess> init) {
  if (spectrum.size() == 0) throw DomainError("fit_lorentzians: empty spectrum");
  return fit_lorentzians(spectrum, n_peaks, init, spectrum.wavelengths().front(),
                         spectrum.wavelengths().back());
}

LorentzianFit fit_lorentzians(const PLSpectrum& spectrum, std::size_t n_peaks,
                              std::span<const PeakGuess> init, double lo, double hi) {
  if (n_peaks < 1) throw DomainError("fit_lorentzians: n_peaks must be >= 1");
  if (!init.empty() && init.size() != n_peaks)
    throw DomainError("fit_lorentzians: init must hold one guess per peak");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const double w = spectrum.wavelengths()[i];
    if (w >= lo && w <= hi) {
      x.push_back(w);
      y.push_back(spectrum.intensities()[i]);
    }
  }
  if (x.size() < 3 * n_peaks + 2)
    throw DomainError("fit_lorentzians: too few points in the fit range");
  const double xmin = x.front(), xmax = x.back(), range = xmax - xmin;

  std::vector<PeakGuess> guesses(init.begin(), init.end());
  if (guesses.empty()) guesses = auto_peak_guesses(x, y, n_peaks);
  for (const auto& g : guesses) {
    if (!(g.center >= xmin && g.center <= xmax))
      throw DomainError("fit_lorentzians: initial center " + std::to_string(g.center) +
                        " nm outside the wavelength range");
  }
  std::vector<double> sorted = y;
  std::sort(sorted.begin(), sorted.end());
  const double base0 = sorted[sorted.size() / 10];
  const double ymax = sorted.back();

  std::vector<Parameter> params;
  const double dx = range / static_cast<double>(x.size() - 1);
  for (std::size_t k = 0; k < n_peaks; ++k) {
    const auto ks = std::to_string(k);
    const auto& g = guesses[k];
    const double w0 = std::clamp(g.fwhm, 0.1 * dx, 2.0 * range);
    params.push_back({"center_" + ks, g.center, xmin, xmax, w0});
    params.push_back({"fwhm_" + ks, w0, 0.01 * dx, 4.0 * range, w0});
    params.push_back({"amplitude_" + ks, g.amplitude, -kInf, kInf,
                      std::max({std::abs(g.amplitude), std::abs(ymax - base0), 1.0})});
  }
  params.push_back({"baseline", base0, -kInf, kInf, std::max(std::abs(ymax), 1.0)});

  FitResult fit = least_squares_with_restarts(
      [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(x.size()));
        const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
        for (std::size_t i = 0; i < x.size(); ++i)
          r[static_cast<Eigen::Index>(i)] = lorentzian_sum(x[i], ps) - y[i];
        return r;
      },
      params);

  LorentzianFit out;
  const auto& v = fit.values;
  const auto& c = fit.covariance;
  auto sd = [](double var) { return var >= 0 ? std::sqrt(var) : kInf; };
  for (std::size_t k = 0; k < n_peaks; ++k) {
    const auto i = static_cast<Eigen::Index>(3 * k);
    LorentzianFit::Peak pk{};
    pk.center = v[i];
    pk.fwhm = v[i + 1];
    pk.amplitude = v[i + 2];
    pk.center_sigma = sd(c(i, i));
    pk.fwhm_sigma = sd(c(i + 1, i + 1));
    pk.amplitude_sigma = sd(c(i + 2, i + 2));
    // area = pi/2 * h * w
    pk.area = 0.5 * std::numbers::pi * pk.amplitude * pk.fwhm;
    {
      const double dh = 0.5 * std::numbers::pi * pk.fwhm, dw = 0.5 * std::numbers::pi * pk.amplitude;
      pk.area_sigma = sd(dh * dh * c(i + 2, i + 2) + dw * dw * c(i + 1, i + 1) +
                         2 * dh * dw * c(i + 1, i + 2));
    }
    pk.q = pk.center / pk.fwhm;
    {
      const double dc = 1.0 / pk.fwhm, dw = -pk.center / (pk.fwhm * pk.fwhm);
      pk.q_sigma = sd(dc * dc * c(i, i) + dw * dw * c(i + 1, i + 1) + 2 * dc * dw * c(i, i + 1));
    }
    out.peaks.push_back(pk);
  }
  const auto nb = static_cast<Eigen::Index>(3 * n_peaks);
  out.baseline = v[nb];
  out.baseline_sigma = sd(c(nb, nb));
  out.fit = std::move(fit);
  return out;
}

// ---------------------------------------------------------------------------
// cos^2

double cos2_model(double phi_deg, double phi0_deg, double i_max, double i_min) {
  const double c = std::cos((phi_deg - phi0_deg) * std::numbers::pi / 180.0);
  return i_min + (i_max - i_min) * c * c;
}

Cos2Fit fit_cos2(const PolarizationScan& scan) {
  if (scan.size() < 5) throw DomainError("fit_cos2: need at least 5 angles");
  const auto [amin, amax] = std::minmax_element(scan.angles().begin(), scan.angles().end());
  if (*amax - *amin < 135.0) throw DomainError("fit_cos2: angles must span at least 135 degrees");

  // I = c0 + c1 cos(2 phi) + c2 sin(2 phi): linear in the coefficients, so the
  // fit stays well posed for isotropic scans where phi0 is undefined.
  const auto& ang = scan.angles();
  const auto& in = scan.intensities();
  const double mean = std::accumulate(in.begin(), in.end(), 0.0) / static_cast<double>(in.size());
  const double scale = std::max(std::abs(mean), 1.0);
  const std::vector<Parameter> params = {
      {"c0", mean, -kInf, kInf, scale},
      {"c_cos", 0.0, -kInf, kInf, scale},
      {"c_sin", 0.0, -kInf, kInf, scale},
  };
  FitResult lin = least_squares(
      [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(ang.size()));
        for (std::size_t i = 0; i < ang.size(); ++i) {
          const double t = 2.0 * ang[i] * std::numbers::pi / 180.0;
          r[static_cast<Eigen::Index>(i)] = p[0] + p[1] * std::cos(t) + p[2] * std::sin(t) - in[i];
        }
        return r;
      },
      params);

  const double c0 = lin.values[0], c1 = lin.values[1], c2 = lin.values[2];
  const double amp = std::hypot(c1, c2);
  constexpr double kDeg = 90.0 / std::numbers::pi;  // d(phi0)/d(2 phi0 in rad)
  Eigen::Matrix<double, 4, 3> t = Eigen::Matrix<double, 4, 3>::Zero();
  if (amp > 0) {
    t.row(0) << 0, -kDeg * c2 / (amp * amp), kDeg * c1 / (amp * amp);
    t.row(1) << 1, c1 / amp, c2 / amp;
    t.row(2) << 1, -c1 / amp, -c2 / amp;
    if (c0 != 0) t.row(3) << -amp / (c0 * c0), c1 / (amp * c0), c2 / (amp * c0);
  } else {
    t.row(1) << 1, std::sqrt(0.5), std::sqrt(0.5);
    t.row(2) << 1, std::sqrt(0.5), std::sqrt(0.5);
    if (c0 != 0) t.row(3) << 0, std::sqrt(0.5) / c0, std::sqrt(0.5) / c0;
  }
  const Eigen::Matrix4d cov4 = t * lin.covariance * t.transpose();

  Cos2Fit out;
  out.phi0 = canonical_axis_angle(amp > 0 ? kDeg * std::atan2(c2, c1) : 0.0);
  out.i_max = c0 + amp;
  out.i_min = c0 - amp;
  out.visibility = c0 != 0 ? amp / c0 : 0.0;
  out.phi0_sigma = amp > 0 ? std::sqrt(cov4(0, 0)) : 90.0;
  out.i_max_sigma = std::sqrt(cov4(1, 1));
  out.i_min_sigma = std::sqrt(cov4(2, 2));
  out.visibility_sigma = std::sqrt(cov4(3, 3));

  FitResult& fr = out.fit;
  fr.names = {"phi0", "i_max", "i_min"};
  fr.values = Eigen::Vector3d(out.phi0, out.i_max, out.i_min);
  fr.covariance = cov4.topLeftCorner<3, 3>();
  if (!(amp > 0)) fr.covariance(0, 0) = kInf;
  fr.residual_norm = lin.residual_norm;
  fr.reduced_chi2 = lin.reduced_chi2;
  fr.iterations = lin.iterations;
  fr.converged = lin.converged;
  fr.warnings = lin.warnings;
  return out;
}

// ---------------------------------------------------------------------------
// Saturation

SaturationFit fit_saturation(const SaturationCurve& curve) {
  if (curve.size() < 4) throw DomainError("fit_saturation: need at least 4 powers");
  const auto& p = curve.powers();
  const auto& r = curve.rates();
  const double rmax = *std::max_element(r.begin(), r.end());
  if (!(rmax > 0)) throw DomainError("fit_saturation: all rates are zero");
  // P_sat guess: power where the rate first exceeds half its maximum.
  double psat0 = p[p.size() / 2];
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (r[i] >= 0.5 * rmax) {
      psat0 = p[i];
      break;
    }
  }
  const double rinf0 = rmax * (p.back() + psat0) / p.back();
  const std::vector<Parameter> params = {
      {"r_inf", rinf0, 0.0, kInf, rinf0},
      {"p_sat", psat0, psat0 * 1e-9, kInf, psat0},
  };
  FitResult fit = least_squares_with_restarts(
      [&](const Eigen::VectorXd& q) {
        Eigen::VectorXd res(static_cast<Eigen::Index>(p.size()));
        for (std::size_t i = 0; i < p.size(); ++i)
          res[static_cast<Eigen::Index>(i)] = q[0] * p[i] / (p[i] + q[1]) - r[i];
        return res;
      },
      params);
  SaturationFit out;
  out.r_inf = fit.values[0];
  out.p_sat = fit.values[1];
  out.r_inf_sigma = fit.sigma("r_inf");
  out.p_sat_sigma = fit.sigma("p_sat");
  out.p_sat_poorly_constrained = !(out.p_sat_sigma < 0.5 * out.p_sat);
  if (out.p_sat_poorly_constrained) fit.warnings.push_back("p_sat poorly constrained by the data");
  out.fit = std::move(fit);
  return out;
}

}  // namespace cqed::fitting
