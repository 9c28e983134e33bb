#include "cqed/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <tuple>

#include "cqed/errors.hpp"
#include "cqed/purcell.hpp"

namespace cqed::spectra {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double interpolate(const PLSpectrum& s, double x) {
  const auto& w = s.wavelengths();
  const auto& y = s.intensities();
  if (x <= w.front()) return y.front();
  if (x >= w.back()) return y.back();
  const auto it = std::upper_bound(w.begin(), w.end(), x);
  const auto i = static_cast<std::size_t>(it - w.begin());
  const double t = (x - w[i - 1]) / (w[i] - w[i - 1]);
  return y[i - 1] + t * (y[i] - y[i - 1]);
}

double low_quantile(std::vector<double> y) {
  std::sort(y.begin(), y.end());
  return y[y.size() / 10];
}

double median_spacing(const PLSpectrum& s) {
  const auto& w = s.wavelengths();
  if (w.size() < 2) return 1.0;
  std::vector<double> d(w.size() - 1);
  for (std::size_t i = 1; i < w.size(); ++i) d[i - 1] = w[i] - w[i - 1];
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

bool credible_peak(const fitting::LorentzianFit::Peak& p, double prev_fwhm) {
  if (!(p.amplitude > 0) || !std::isfinite(p.center)) return false;
  if (std::isfinite(p.amplitude_sigma) && p.amplitude < 2.0 * p.amplitude_sigma) return false;
  return p.fwhm > 0.1 * prev_fwhm && p.fwhm < 10.0 * prev_fwhm;
}

// Prominent local maxima inside [lo, hi], tallest first.
std::vector<fitting::PeakGuess> detect_peaks(const PLSpectrum& s, double lo, double hi) {
  const auto& w = s.wavelengths();
  const auto& y = s.intensities();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] >= lo && w[i] <= hi) idx.push_back(i);
  std::vector<fitting::PeakGuess> out;
  if (idx.size() < 10) return out;
  const std::size_t n = idx.size();
  std::vector<double> ys(n), dy;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = k > 0 ? k - 1 : k, b = k + 1 < n ? k + 1 : k;
    ys[k] = (y[idx[a]] + y[idx[k]] + y[idx[b]]) / 3.0;
    if (k > 0) dy.push_back(std::abs(y[idx[k]] - y[idx[k - 1]]));
  }
  std::nth_element(dy.begin(), dy.begin() + static_cast<std::ptrdiff_t>(dy.size() / 2), dy.end());
  const double noise = 1.4826 * dy[dy.size() / 2] / std::sqrt(2.0);
  std::vector<double> sorted = ys;
  std::sort(sorted.begin(), sorted.end());
  const double floor = sorted[n / 10];
  for (std::size_t k = 3; k + 3 < n; ++k) {
    bool top = true;
    for (std::size_t j = k - 3; j <= k + 3 && top; ++j) top = j == k || ys[j] < ys[k] || (ys[j] == ys[k] && j > k);
    if (!top || !(ys[k] - floor > 8.0 * noise)) continue;
    const double half = floor + 0.5 * (ys[k] - floor);
    std::size_t a = k, b = k;
    while (a > 0 && ys[a] > half) --a;
    while (b + 1 < n && ys[b] > half) ++b;
    const double width = std::max(w[idx[b]] - w[idx[a]], 2.0 * median_spacing(s));
    out.push_back({w[idx[k]], width, y[idx[k]] - floor});
  }
  std::sort(out.begin(), out.end(), [](const auto& p, const auto& q) { return p.amplitude > q.amplitude; });
  return out;
}

// Largest unexplained line inside [lo, hi], when it stands clear of the noise.
std::optional<fitting::PeakGuess> residual_peak(const PLSpectrum& s, const fitting::LorentzianFit& fit,
                                                double lo, double hi) {
  const auto& w = s.wavelengths();
  const auto& y = s.intensities();
  const std::span<const double> p(fit.fit.values.data(), static_cast<std::size_t>(fit.fit.values.size()));
  std::vector<std::size_t> idx;
  std::vector<double> r, absr;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] < lo || w[i] > hi) continue;
    idx.push_back(i);
    r.push_back(y[i] - fitting::lorentzian_sum(w[i], p));
    absr.push_back(std::abs(r.back()));
  }
  if (r.size() < 10) return std::nullopt;
  std::nth_element(absr.begin(), absr.begin() + static_cast<std::ptrdiff_t>(absr.size() / 2), absr.end());
  const double noise = 1.4826 * absr[absr.size() / 2];
  const auto k = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  if (!(r[k] > 6.0 * noise)) return std::nullopt;
  std::size_t a = k, b = k;
  while (a > 0 && r[a] > 0.5 * r[k]) --a;
  while (b + 1 < r.size() && r[b] > 0.5 * r[k]) ++b;
  const double width = std::max(w[idx[b]] - w[idx[a]], 2.0 * median_spacing(s));
  return fitting::PeakGuess{w[idx[k]], width, r[k]};
}

struct LiveMode {
  std::size_t slot;  // index into the output vector
  double predicted;
  double velocity = 0.0;  // nm per step index
  double fwhm;
  int last_step = 0;
  double last_center = 0.0;
};

void finalize(TrackedMode& m) {
  const auto n = m.points.size();
  m.monotonic_violations.clear();
  for (std::size_t i = 1; i < n; ++i) {
    const auto& a = m.points[i - 1];
    const auto& b = m.points[i];
    const double sa = std::isfinite(a.center_sigma) ? a.center_sigma : 0.0;
    const double sb = std::isfinite(b.center_sigma) ? b.center_sigma : 0.0;
    if (b.center > a.center + 3.0 * std::hypot(sa, sb) + 1e-9) m.monotonic_violations.push_back(b.step);
  }
  m.monotonic = m.monotonic_violations.empty();
  if (n < 2) return;
  double sx = 0, sy = 0;
  for (const auto& p : m.points) {
    sx += p.step;
    sy += p.center;
  }
  const double mx = sx / static_cast<double>(n), my = sy / static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (const auto& p : m.points) {
    sxx += (p.step - mx) * (p.step - mx);
    sxy += (p.step - mx) * (p.center - my);
  }
  m.mean_rate = sxy / sxx;
  if (n > 2) {
    double ss = 0;
    for (const auto& p : m.points) {
      const double r = p.center - (my + m.mean_rate * (p.step - mx));
      ss += r * r;
    }
    m.mean_rate_sigma = std::sqrt(ss / static_cast<double>(n - 2) / sxx);
  }
}

}  // namespace

TuningSeries::TuningSeries(std::vector<TuningStep> steps, std::vector<TrackedMode> modes)
    : steps_(std::move(steps)), modes_(std::move(modes)) {
  for (std::size_t i = 1; i < steps_.size(); ++i) {
    if (steps_[i].index <= steps_[i - 1].index)
      throw ValidationError({"step indices must be strictly increasing (index " +
                             std::to_string(steps_[i].index) + ")"});
  }
}

const TrackedMode& TuningSeries::mode(const std::string& label) const {
  for (const auto& m : modes_)
    if (m.label == label) return m;
  throw DomainError("no tracked mode labelled '" + label + "'");
}

TuningSeries track_modes(std::vector<TuningStep> steps, std::span<const SeedPeak> seeds,
                         const TrackOptions& options) {
  if (steps.empty()) throw DomainError("track_modes: no tuning steps");
  if (seeds.empty()) throw DomainError("track_modes: no seed peaks");
  if (!(options.threshold_factor > 0)) throw DomainError("track_modes: threshold_factor must be positive");
  {
    std::vector<std::string> labels;
    for (const auto& s : seeds) {
      if (!(s.fwhm > 0) || !std::isfinite(s.center))
        throw DomainError("track_modes: seed '" + s.label + "' needs a finite center and fwhm > 0");
      labels.push_back(s.label);
    }
    std::sort(labels.begin(), labels.end());
    if (std::adjacent_find(labels.begin(), labels.end()) != labels.end())
      throw DomainError("track_modes: duplicate seed labels");
  }
  TuningSeries checked(std::move(steps));  // validates ordering

  std::vector<TrackedMode> out(seeds.size());
  std::vector<LiveMode> live;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    out[i].label = seeds[i].label;
    live.push_back({i, seeds[i].center, 0.0, seeds[i].fwhm, 0, seeds[i].center});
  }
  bool first = true;

  for (const auto& step : checked.steps()) {
    if (live.empty()) break;
    const auto& spec = step.spectrum;
    const auto& wl = spec.wavelengths();
    if (!first) {
      for (auto& m : live)
        m.predicted = m.last_center + m.velocity * (step.index - m.last_step);
    }
    first = false;

    // Order independent of how the seeds were listed.
    std::sort(live.begin(), live.end(), [&](const LiveMode& a, const LiveMode& b) {
      return std::tie(a.predicted, out[a.slot].label) < std::tie(b.predicted, out[b.slot].label);
    });

    std::vector<LiveMode> fitted_modes, lost;
    for (auto& m : live) {
      if (spec.size() < 5 || m.predicted < wl.front() || m.predicted > wl.back())
        lost.push_back(m);
      else
        fitted_modes.push_back(m);
    }

    const double base = low_quantile(spec.intensities());
    std::vector<fitting::PeakGuess> guesses;
    for (const auto& m : fitted_modes)
      guesses.push_back({m.predicted, m.fwhm, std::max(interpolate(spec, m.predicted) - base, 1e-12)});
    auto reach = [&](const LiveMode& m) { return (options.threshold_factor + 3.0) * m.fwhm; };

    using Peak = fitting::LorentzianFit::Peak;
    auto joint_fit = [&] {
      std::vector<Peak> peaks;
      if (fitted_modes.empty()) return peaks;
      double lo = wl.back(), hi = wl.front();
      for (const auto& m : fitted_modes) {
        lo = std::min(lo, m.predicted - reach(m));
        hi = std::max(hi, m.predicted + reach(m));
      }
      // Lines that belong to no tracked mode (the ZPL, say) are absorbed by
      // extra peaks seeded at the largest residual.
      std::vector<fitting::PeakGuess> g = guesses;
      for (const auto& d : detect_peaks(spec, lo, hi)) {
        bool near_mode = false;
        for (const auto& m : fitted_modes) near_mode = near_mode || std::abs(d.center - m.predicted) < m.fwhm;
        if (!near_mode && g.size() < fitted_modes.size() + 4) g.push_back(d);
      }
      std::optional<fitting::LorentzianFit> best;
      for (int extra = 0; extra <= 2; ++extra) {
        fitting::LorentzianFit fit;
        try {
          fit = fitting::fit_lorentzians(spec, g.size(), g, lo, hi);
        } catch (const Error&) {
          break;
        }
        const bool positive = std::all_of(fit.peaks.begin(), fit.peaks.end(),
                                          [](const auto& pk) { return pk.amplitude > 0; });
        if (best && !(fit.fit.converged && positive && fit.fit.reduced_chi2 < 0.8 * best->fit.reduced_chi2))
          break;
        best = std::move(fit);
        const auto next = residual_peak(spec, *best, lo, hi);
        if (!next) break;
        g.clear();
        for (const auto& pk : best->peaks) g.push_back({pk.center, pk.fwhm, pk.amplitude});
        g.push_back(*next);
      }
      if (best) peaks = best->peaks;
      return peaks;
    };
    // One isolated fit per mode; fits that landed on the same line are merged.
    auto separate_fits = [&] {
      std::vector<Peak> peaks;
      for (std::size_t k = 0; k < fitted_modes.size(); ++k) {
        const auto& m = fitted_modes[k];
        try {
          const auto one = fitting::fit_lorentzians(spec, 1, std::span(&guesses[k], 1), m.predicted - reach(m),
                                                    m.predicted + reach(m));
          const Peak& pk = one.peaks.front();
          bool dup = false;
          for (auto& q : peaks) {
            if (std::abs(q.center - pk.center) < 0.25 * std::min(q.fwhm, pk.fwhm)) {
              if (pk.center_sigma < q.center_sigma) q = pk;
              dup = true;
            }
          }
          if (!dup) peaks.push_back(pk);
        } catch (const Error&) {
        }
      }
      return peaks;
    };

    // Greedy nearest-center association.
    struct Pair {
      double dist;
      std::size_t mode, peak;
    };
    auto associate = [&](const std::vector<Peak>& peaks) {
      std::vector<Pair> pairs;
      for (std::size_t i = 0; i < fitted_modes.size(); ++i) {
        const auto& m = fitted_modes[i];
        for (std::size_t j = 0; j < peaks.size(); ++j) {
          const double d = std::abs(peaks[j].center - m.predicted);
          if (d <= options.threshold_factor * m.fwhm && credible_peak(peaks[j], m.fwhm))
            pairs.push_back({d, i, j});
        }
      }
      std::sort(pairs.begin(), pairs.end(), [&](const Pair& x, const Pair& y) {
        return std::tie(x.dist, fitted_modes[x.mode].predicted, peaks[x.peak].center) <
               std::tie(y.dist, fitted_modes[y.mode].predicted, peaks[y.peak].center);
      });
      std::vector<std::optional<std::size_t>> match(fitted_modes.size());
      std::vector<bool> peak_used(peaks.size(), false);
      for (const auto& p : pairs) {
        if (match[p.mode] || peak_used[p.peak]) continue;
        match[p.mode] = p.peak;
        peak_used[p.peak] = true;
      }
      return match;
    };

    std::vector<Peak> peaks = joint_fit();
    auto match = associate(peaks);
    if (std::any_of(match.begin(), match.end(), [](const auto& x) { return !x.has_value(); })) {
      // a vanished mode can drag the joint fit onto a neighbour's line
      std::vector<Peak> alt = separate_fits();
      auto alt_match = associate(alt);
      const auto count = [](const auto& v) { return std::count_if(v.begin(), v.end(), [](const auto& x) { return x.has_value(); }); };
      if (count(alt_match) > count(match)) {
        peaks = std::move(alt);
        match = std::move(alt_match);
      }
    }

    std::vector<LiveMode> next;
    std::vector<bool> mode_done(fitted_modes.size(), false);
    for (std::size_t i = 0; i < fitted_modes.size(); ++i) {
      if (!match[i]) continue;
      mode_done[i] = true;
      auto m = fitted_modes[i];
      const auto& pk = peaks[*match[i]];
      auto& track = out[m.slot];
      if (!track.points.empty()) m.velocity = (pk.center - m.last_center) / (step.index - m.last_step);
      track.points.push_back({step.index, pk.center, pk.center_sigma, pk.fwhm, pk.fwhm_sigma,
                              pk.amplitude, pk.amplitude_sigma});
      m.last_center = pk.center;
      m.last_step = step.index;
      m.fwhm = pk.fwhm;
      next.push_back(m);
    }
    for (std::size_t i = 0; i < fitted_modes.size(); ++i)
      if (!mode_done[i]) lost.push_back(fitted_modes[i]);
    for (const auto& m : lost) out[m.slot].terminated_at = step.index;
    live = std::move(next);
  }

  for (auto& m : out) finalize(m);
  return TuningSeries(checked.steps(), std::move(out));
}

// ---------------------------------------------------------------------------

ResonanceReport find_resonance(const TrackedMode& mode, const EmitterLine& line) {
  if (mode.points.empty()) throw DomainError("find_resonance: mode '" + mode.label + "' has no points");
  ResonanceReport r;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : mode.points) {
    const double q = p.center / p.fwhm;
    r.overlaps.push_back({p.step, p.center, p.fwhm, purcell::spectral_overlap(line.lambda_i(), p.center, q)});
    const double d = std::abs(p.center - line.lambda_i());
    if (d < best) {
      best = d;
      r.step = p.step;
      r.detuning = p.center - line.lambda_i();
      r.detuning_linewidths = d / p.fwhm;
    }
  }
  r.found = r.detuning_linewidths <= 5.0;
  return r;
}

ResonanceReport find_resonance(const TuningSeries& series, const std::string& label,
                               const EmitterLine& line) {
  return find_resonance(series.mode(label), line);
}

fitting::LorentzianFit fit_zpl(const PLSpectrum& spectrum, const EmitterLine& line) {
  if (spectrum.size() < 5) throw DomainError("too few spectral points");
  const double dx = median_spacing(spectrum);
  const double lw = std::max(line.linewidth(), 2.0 * dx);
  const double half = std::max(4.0 * lw, 6.0 * dx);
  const double lo = line.lambda_i() - half, hi = line.lambda_i() + half;
  double ymax = -std::numeric_limits<double>::infinity(), ymin = -ymax;
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const double w = spectrum.wavelengths()[i];
    if (w < lo || w > hi) continue;
    ymax = std::max(ymax, spectrum.intensities()[i]);
    ymin = std::min(ymin, spectrum.intensities()[i]);
  }
  if (!std::isfinite(ymax)) throw DomainError("no spectral points around the ZPL");
  const fitting::PeakGuess g{line.lambda_i(), lw, std::max(ymax - ymin, 1e-12)};
  auto fit = fitting::fit_lorentzians(spectrum, 1, std::span(&g, 1), lo, hi);
  const auto& p = fit.peaks.front();
  if (!(p.amplitude > 0) || std::abs(p.center - line.lambda_i()) > 2.0 * lw ||
      (std::isfinite(p.area_sigma) && p.area < 3.0 * p.area_sigma) || !fit.fit.converged)
    throw DomainError("ZPL peak not resolvable");
  return fit;
}

Enhancement enhancement_ratio(const TuningSeries& series, const EmitterLine& line, int on_step,
                              int off_step) {
  const auto find = [&](int idx) -> const PLSpectrum& {
    for (const auto& s : series.steps())
      if (s.index == idx) return s.spectrum;
    throw DomainError("enhancement_ratio: no step " + std::to_string(idx));
  };
  const auto area = [&](int idx) {
    try {
      const auto f = fit_zpl(find(idx), line);
      return std::pair{f.peaks.front().area, f.peaks.front().area_sigma};
    } catch (const DomainError& e) {
      throw DomainError("enhancement_ratio: step " + std::to_string(idx) + ": " + e.what());
    } catch (const Error& e) {
      throw DomainError("enhancement_ratio: step " + std::to_string(idx) + ": ZPL peak not resolvable (" +
                        e.what() + ")");
    }
  };
  Enhancement e;
  e.on_step = on_step;
  e.off_step = off_step;
  std::tie(e.on_area, e.on_area_sigma) = area(on_step);
  std::tie(e.off_area, e.off_area_sigma) = area(off_step);
  e.ratio = e.on_area / e.off_area;
  e.ratio_sigma = std::abs(e.ratio) * std::hypot(e.on_area_sigma / e.on_area, e.off_area_sigma / e.off_area);
  return e;
}

Enhancement enhancement_ratio(const TuningSeries& series, const EmitterLine& line) {
  if (series.tracked_modes().empty())
    throw DomainError("enhancement_ratio: automatic step choice needs tracked modes");
  std::map<int, double> best;
  for (const auto& s : series.steps()) best[s.index] = 0.0;
  for (const auto& m : series.tracked_modes()) {
    for (const auto& p : m.points) {
      const double r = purcell::spectral_overlap(line.lambda_i(), p.center, p.center / p.fwhm);
      best[p.step] = std::max(best[p.step], r);
    }
  }
  auto on = best.begin(), off = best.begin();
  for (auto it = best.begin(); it != best.end(); ++it) {
    if (it->second > on->second) on = it;
    if (it->second < off->second) off = it;
  }
  if (on->first == off->first)
    throw DomainError("enhancement_ratio: no detuning contrast between steps");
  return enhancement_ratio(series, line, on->first, off->first);
}

// ---------------------------------------------------------------------------

std::vector<std::string> PolarizedChannel::violations(const PolarizedChannel& c) {
  std::vector<std::string> v;
  if (!std::isfinite(c.angle)) v.push_back("angle must be finite");
  if (!std::isfinite(c.weight) || c.weight < 0) v.push_back("weight must be finite and >= 0");
  return v;
}

MixturePoint effective_angle(const PolarizedChannel& emitter, std::span<const ModeChannel> modes,
                             double lambda_i, double detuning) {
  if (modes.empty()) throw DomainError("polarization_mixture: needs at least one mode");
  {
    auto v = PolarizedChannel::violations(emitter);
    for (const auto& m : modes) {
      auto w = PolarizedChannel::violations(m.channel);
      v.insert(v.end(), w.begin(), w.end());
    }
    if (!v.empty()) throw ValidationError(v);
  }
  // cos^2(phi - a) = (1 + cos 2(phi - a)) / 2: sum the (cos 2a, sin 2a) vectors.
  double total = emitter.weight;
  double s1 = emitter.weight * std::cos(2 * emitter.angle * kDeg);
  double s2 = emitter.weight * std::sin(2 * emitter.angle * kDeg);
  for (const auto& m : modes) {
    const double w = m.channel.weight *
                     purcell::spectral_overlap(lambda_i, m.mode.lambda_c() + detuning, m.mode.q_factor());
    total += w;
    s1 += w * std::cos(2 * m.channel.angle * kDeg);
    s2 += w * std::sin(2 * m.channel.angle * kDeg);
  }
  const double norm = std::hypot(s1, s2);
  if (!(total > 0) || norm <= 1e-12 * total)
    throw DomainError("polarization_mixture: degenerate pattern (no preferred axis)");
  return {detuning, canonical_axis_angle(0.5 * std::atan2(s2, s1) / kDeg), norm / total};
}

std::vector<MixturePoint> polarization_mixture(const PolarizedChannel& emitter,
                                               std::span<const ModeChannel> modes,
                                               double lambda_i,
                                               std::span<const double> detunings) {
  std::vector<MixturePoint> out;
  out.reserve(detunings.size());
  for (double d : detunings) out.push_back(effective_angle(emitter, modes, lambda_i, d));
  return out;
}

std::vector<double> unwrap_axis_angles(std::span<const double> degrees) {
  std::vector<double> out(degrees.begin(), degrees.end());
  for (std::size_t i = 1; i < out.size(); ++i) {
    while (out[i] - out[i - 1] > 90.0) out[i] -= 180.0;
    while (out[i] - out[i - 1] < -90.0) out[i] += 180.0;
  }
  return out;
}

}  // namespace cqed::spectra
