#include "cqed/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cqed/dynamics.hpp"
#include "cqed/errors.hpp"

namespace cqed::montecarlo {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::exponential(double rate) { return -std::log1p(-uniform()) / rate; }

double Rng::normal() {
  if (cached_normal_) {
    const double z = *cached_normal_;
    cached_normal_.reset();
    return z;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(phi);
  return r * std::cos(phi);
}

std::string to_string(Channel c) { return c == Channel::ZPL ? "ZPL" : "PSB"; }

Channel channel_from_string(const std::string& s) {
  if (s == "ZPL") return Channel::ZPL;
  if (s == "PSB") return Channel::PSB;
  throw ValidationError({"unknown channel '" + s + "'"});
}

EmissionSplit EmissionSplit::from_budget(const RadiativeBudget& b) {
  return {b.eta_qe(), b.gamma_zpl() / b.gamma_rad()};
}

EmissionSplit EmissionSplit::from_modified(const purcell::ModifiedRates& m) {
  const double rad = m.channel_zpl + m.channel_psb;
  return {m.eta_qe, rad > 0 ? m.channel_zpl / rad : 0.0};
}

// ---------------------------------------------------------------------------

std::vector<std::string> PhotonStream::violations(const Fields& f) {
  std::vector<std::string> v;
  if (!(f.duration > 0) || !std::isfinite(f.duration)) v.push_back("duration must be positive");
  if (f.timestamps.size() != f.channels.size()) v.push_back("timestamps and channels differ in length");
  for (std::size_t i = 0; i < f.timestamps.size(); ++i) {
    const double t = f.timestamps[i];
    if (!std::isfinite(t) || t < 0 || t > f.duration) {
      v.push_back("timestamps[" + std::to_string(i) + "] outside [0, duration]");
      break;
    }
    if (i > 0 && t < f.timestamps[i - 1]) {
      v.push_back("timestamps not sorted at index " + std::to_string(i));
      break;
    }
  }
  return v;
}

PhotonStream::PhotonStream(Fields f) : f_(std::move(f)) {
  auto v = violations(f_);
  if (!v.empty()) throw ValidationError(v);
}

// ---------------------------------------------------------------------------

PhotonStream simulate_stream(const ThreeLevelRates& rates, const EmissionSplit& split,
                             double duration, double detection_eff, std::uint64_t seed) {
  if (!(duration > 0) || !std::isfinite(duration)) throw DomainError("simulate_stream: duration must be positive");
  if (!(detection_eff >= 0 && detection_eff <= 1))
    throw DomainError("simulate_stream: detection_eff outside [0, 1]");
  if (!(split.eta_qe >= 0 && split.eta_qe <= 1) || !(split.zpl_fraction >= 0 && split.zpl_fraction <= 1))
    throw DomainError("simulate_stream: emission split probabilities outside [0, 1]");

  PhotonStream::Fields out;
  out.duration = duration;
  out.seed = seed;
  out.rates = rates.fields();
  if (detection_eff == 0.0) return PhotonStream(std::move(out));

  Rng rng(seed);
  const Eigen::Vector3d pss = dynamics::steady_state(rates);
  int state;
  {
    const double u = rng.uniform();
    state = u < pss[0] ? 1 : (u < pss[0] + pss[1] ? 2 : 3);
  }
  const double k12 = rates.k12(), k21 = rates.k21(), k23 = rates.k23(), k31 = rates.k31();
  double t = 0.0;
  for (;;) {
    const double out_rate = state == 1 ? k12 : (state == 2 ? k21 + k23 : k31);
    if (!(out_rate > 0)) break;  // unpumped ground state is absorbing
    t += rng.exponential(out_rate);
    if (t > duration) break;
    if (state == 1) {
      state = 2;
    } else if (state == 3) {
      state = 1;
    } else if (rng.uniform() * (k21 + k23) < k23) {
      state = 3;
    } else {
      state = 1;
      if (rng.uniform() < split.eta_qe) {
        const Channel ch = rng.uniform() < split.zpl_fraction ? Channel::ZPL : Channel::PSB;
        if (rng.uniform() < detection_eff) {
          out.timestamps.push_back(t);
          out.channels.push_back(ch);
        }
      }
    }
  }
  return PhotonStream(std::move(out));
}

double predicted_detected_rate(const ThreeLevelRates& rates, const EmissionSplit& split,
                               double detection_eff) {
  return detection_eff * split.eta_qe * rates.k21() * dynamics::steady_state(rates)[1];
}

PhotonStream poisson_stream(double rate, double duration, std::uint64_t seed) {
  if (!(rate > 0) || !(duration > 0)) throw DomainError("poisson_stream: rate and duration must be positive");
  Rng rng(seed);
  PhotonStream::Fields f;
  f.duration = duration;
  f.seed = seed;
  for (double t = rng.exponential(rate); t <= duration; t += rng.exponential(rate)) {
    f.timestamps.push_back(t);
    f.channels.push_back(Channel::ZPL);
  }
  return PhotonStream(std::move(f));
}

PhotonStream apply_jitter(const PhotonStream& stream, double sigma_irf, std::uint64_t seed) {
  if (!(sigma_irf >= 0) || !std::isfinite(sigma_irf)) throw DomainError("apply_jitter: sigma_irf must be >= 0");
  if (sigma_irf == 0.0) return stream;
  Rng rng(seed);
  const auto& ts = stream.timestamps();
  std::vector<std::pair<double, Channel>> moved;
  moved.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double t = ts[i] + sigma_irf * rng.normal();
    if (t >= 0 && t <= stream.duration()) moved.emplace_back(t, stream.channels()[i]);
  }
  std::stable_sort(moved.begin(), moved.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  PhotonStream::Fields f = stream.fields();
  f.timestamps.clear();
  f.channels.clear();
  for (const auto& [t, c] : moved) {
    f.timestamps.push_back(t);
    f.channels.push_back(c);
  }
  return PhotonStream(std::move(f));
}

// ---------------------------------------------------------------------------

std::string to_string(CorrelationMode m) {
  return m == CorrelationMode::FullCorrelation ? "full-correlation" : "start-stop";
}

CorrelationMode correlation_mode_from_string(const std::string& s) {
  if (s == "full-correlation" || s == "full") return CorrelationMode::FullCorrelation;
  if (s == "start-stop") return CorrelationMode::StartStop;
  throw ValidationError({"unknown correlation mode '" + s + "'"});
}

HbtHistogram::HbtHistogram(std::vector<double> bin_edges, std::vector<std::uint64_t> counts,
                           double normalization)
    : edges_(std::move(bin_edges)), counts_(std::move(counts)), normalization_(normalization) {
  std::vector<std::string> v;
  if (edges_.size() != counts_.size() + 1) v.push_back("bin_edges must have one more entry than counts");
  for (std::size_t i = 1; i < edges_.size(); ++i) {
    if (!(edges_[i] > edges_[i - 1])) {
      v.push_back("bin_edges not strictly increasing");
      break;
    }
  }
  if (!(normalization_ > 0) || !std::isfinite(normalization_)) v.push_back("normalization must be positive");
  if (!v.empty()) throw ValidationError(v);
}

std::vector<double> HbtHistogram::bin_centers() const {
  std::vector<double> c(counts_.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (edges_[i] + edges_[i + 1]);
  return c;
}

std::vector<double> HbtHistogram::g2() const {
  std::vector<double> g(counts_.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(counts_[i]) / normalization_;
  return g;
}

std::vector<double> HbtHistogram::sigma() const {
  std::vector<double> s(counts_.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = std::sqrt(std::max(static_cast<double>(counts_[i]), 1.0)) / normalization_;
  return s;
}

G2Curve HbtHistogram::to_curve() const {
  G2Curve::Fields f;
  f.delays = bin_centers();
  f.values = g2();
  f.sigmas = sigma();
  return G2Curve(std::move(f));
}

HbtHistogram HbtHistogram::merge(const HbtHistogram& a, const HbtHistogram& b) {
  if (a.edges_ != b.edges_) throw DomainError("HbtHistogram::merge: bin edges differ");
  std::vector<std::uint64_t> c(a.counts_.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.counts_[i] + b.counts_[i];
  return HbtHistogram(a.edges_, std::move(c), a.normalization_ + b.normalization_);
}

HbtHistogram correlate(const PhotonStream& stream, double bin_width, double window,
                       CorrelationMode mode, std::optional<std::uint64_t> split_seed) {
  if (!(bin_width > 0) || !(window > 0) || !std::isfinite(bin_width) || !std::isfinite(window))
    throw DomainError("correlate: bin_width and window must be positive");
  if (stream.empty()) throw DomainError("correlate: empty stream");

  const auto nb = static_cast<std::int64_t>(std::floor(window / bin_width + 1e-9));
  const std::size_t nbins = static_cast<std::size_t>(2 * nb + 1);
  std::vector<double> edges(nbins + 1);
  for (std::size_t i = 0; i <= nbins; ++i)
    edges[i] = (static_cast<double>(static_cast<std::int64_t>(i) - nb) - 0.5) * bin_width;
  const double reach = (static_cast<double>(nb) + 0.5) * bin_width;
  std::vector<std::uint64_t> counts(nbins, 0);
  const auto bin_of = [&](double dt) {
    return static_cast<std::int64_t>(std::floor(dt / bin_width + 0.5));
  };

  const auto& ts = stream.timestamps();
  const double duration = stream.duration();
  double normalization;

  if (mode == CorrelationMode::FullCorrelation) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      for (std::size_t j = i + 1; j < ts.size(); ++j) {
        const double dt = ts[j] - ts[i];
        if (dt >= reach) break;
        const std::int64_t k = bin_of(dt);
        ++counts[static_cast<std::size_t>(nb + k)];
        ++counts[static_cast<std::size_t>(nb - k)];
      }
    }
    const double n = static_cast<double>(ts.size());
    normalization = n * n * bin_width / duration;
  } else {
    Rng coin(split_seed.value_or(stream.seed() ^ 0x9e3779b97f4a7c15ULL));
    std::vector<double> det[2];
    for (double t : ts) det[coin.uniform() < 0.5 ? 0 : 1].push_back(t);
    // start on detector `s`, stop on the other; sign +1 puts A->B at positive delay
    for (int s = 0; s < 2; ++s) {
      const auto& starts = det[s];
      const auto& stops = det[1 - s];
      const std::int64_t sign = s == 0 ? 1 : -1;
      auto it = stops.begin();
      for (double t : starts) {
        it = std::lower_bound(it, stops.end(), t);
        if (it == stops.end()) break;
        const double dt = *it - t;
        if (dt >= reach) continue;
        const std::int64_t k = bin_of(dt);
        ++counts[static_cast<std::size_t>(nb + sign * k)];
      }
    }
    normalization = static_cast<double>(det[0].size()) * static_cast<double>(det[1].size()) *
                    bin_width / duration;
    if (!(normalization > 0))
      throw DomainError("correlate: start-stop mode needs photons on both detectors");
  }
  return HbtHistogram(std::move(edges), std::move(counts), normalization);
}

}  // namespace cqed::montecarlo
