// montecarlo.hpp - photon streams from the three-level model and HBT
// correlation estimators.
//
// Streams are generated event by event (exact exponential waiting times, no
// time step). Random numbers come from std::mt19937_64 with explicit
// uniform/exponential/normal transforms, so a (seed, inputs) pair yields the
// same stream on every conforming standard library.
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cqed/model.hpp"
#include "cqed/purcell.hpp"

namespace cqed::montecarlo {

inline constexpr const char* kRngName = "mt19937_64";

// Seeded source of uniform, exponential and normal deviates.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();                 // [0, 1), 53 random bits
  double exponential(double rate);  // -log(1 - u) / rate
  double normal();                  // Box-Muller, one cached value

 private:
  std::mt19937_64 engine_;
  std::optional<double> cached_normal_;
};

enum class Channel : std::uint8_t { ZPL = 0, PSB = 1 };

std::string to_string(Channel c);
Channel channel_from_string(const std::string& s);

// Fate of a |2> -> |1> decay: radiative with probability eta_qe, and among
// radiative decays a ZPL photon with probability zpl_fraction.
struct EmissionSplit {
  double eta_qe = 1.0;
  double zpl_fraction = 1.0;

  static EmissionSplit from_budget(const RadiativeBudget& budget);
  static EmissionSplit from_modified(const purcell::ModifiedRates& modified);
};

class PhotonStream {
 public:
  struct Fields {
    std::vector<double> timestamps;  // s, sorted
    std::vector<Channel> channels;
    double duration = 0.0;  // s
    std::uint64_t seed = 0;
    std::optional<ThreeLevelRates::Fields> rates;
    std::string rng = kRngName;
  };

  explicit PhotonStream(Fields f);

  static std::vector<std::string> violations(const Fields& f);

  const std::vector<double>& timestamps() const { return f_.timestamps; }
  const std::vector<Channel>& channels() const { return f_.channels; }
  double duration() const { return f_.duration; }
  std::uint64_t seed() const { return f_.seed; }
  std::size_t size() const { return f_.timestamps.size(); }
  bool empty() const { return f_.timestamps.empty(); }
  double mean_rate() const { return static_cast<double>(size()) / f_.duration; }

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

// Continuous-time Markov chain started from a steady-state draw.
PhotonStream simulate_stream(const ThreeLevelRates& rates, const EmissionSplit& split,
                             double duration, double detection_eff, std::uint64_t seed);

// Detected rate expected from the steady state:
// detection_eff * eta_qe * k21 * p2.
double predicted_detected_rate(const ThreeLevelRates& rates, const EmissionSplit& split,
                               double detection_eff);

// Memoryless (coherent-light) stream; tags every photon ZPL.
PhotonStream poisson_stream(double rate, double duration, std::uint64_t seed);

// Adds independent N(0, sigma^2) offsets and re-sorts. Photons pushed
// outside [0, duration] are dropped.
PhotonStream apply_jitter(const PhotonStream& stream, double sigma_irf, std::uint64_t seed);

enum class CorrelationMode { FullCorrelation, StartStop };

std::string to_string(CorrelationMode m);
CorrelationMode correlation_mode_from_string(const std::string& s);

// Coincidence histogram over symmetric bins centered at k * bin_width.
class HbtHistogram {
 public:
  HbtHistogram(std::vector<double> bin_edges, std::vector<std::uint64_t> counts,
               double normalization);

  const std::vector<double>& bin_edges() const { return edges_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  double normalization() const { return normalization_; }
  std::size_t size() const { return counts_.size(); }

  std::vector<double> bin_centers() const;
  std::vector<double> g2() const;
  // sqrt(max(count, 1)) / normalization
  std::vector<double> sigma() const;

  // Curve over the bin centers, ready for fitting.
  G2Curve to_curve() const;

  // Counts and normalizations add; bin edges must match.
  static HbtHistogram merge(const HbtHistogram& a, const HbtHistogram& b);

 private:
  std::vector<double> edges_;
  std::vector<std::uint64_t> counts_;
  double normalization_;
};

// Full correlation counts every ordered pair with |dt| inside the window and
// normalizes by rate^2 * duration * bin_width. Start-stop splits photons onto
// two detectors with a seeded fair coin and pairs each start with the next
// stop on the other detector. `split_seed` defaults to the stream seed.
HbtHistogram correlate(const PhotonStream& stream, double bin_width, double window,
                       CorrelationMode mode = CorrelationMode::FullCorrelation,
                       std::optional<std::uint64_t> split_seed = std::nullopt);

}  // namespace cqed::montecarlo
