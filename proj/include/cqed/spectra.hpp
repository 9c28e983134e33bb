// spectra.hpp - mode tracking over tuning steps, resonance search, ZPL
// enhancement and the incoherent polarization-mixing model.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cqed/fitting.hpp"
#include "cqed/model.hpp"

namespace cqed::spectra {

struct TuningStep {
  int index = 0;  // etch step
  PLSpectrum spectrum;
};

struct TrackPoint {
  int step = 0;
  double center = 0.0, center_sigma = 0.0;  // nm
  double fwhm = 0.0, fwhm_sigma = 0.0;      // nm
  double amplitude = 0.0, amplitude_sigma = 0.0;
};

struct TrackedMode {
  std::string label;
  std::vector<TrackPoint> points;
  std::optional<int> terminated_at;  // first step without an associated peak
  // Centers non-increasing within errors (blue tuning). Violations are
  // listed, never rejected.
  bool monotonic = true;
  std::vector<int> monotonic_violations;
  // Least-squares slope of center vs step index, nm per step.
  double mean_rate = 0.0;
  double mean_rate_sigma = 0.0;
};

class TuningSeries {
 public:
  TuningSeries(std::vector<TuningStep> steps, std::vector<TrackedMode> modes = {});

  const std::vector<TuningStep>& steps() const { return steps_; }
  const std::vector<TrackedMode>& tracked_modes() const { return modes_; }
  // DomainError when absent.
  const TrackedMode& mode(const std::string& label) const;

 private:
  std::vector<TuningStep> steps_;
  std::vector<TrackedMode> modes_;
};

struct SeedPeak {
  std::string label;
  double center = 0.0;  // nm, in the first step
  double fwhm = 1.0;    // nm
};

struct TrackOptions {
  double threshold_factor = 3.0;  // association radius in previous fwhm
};

// Refits every step with one Lorentzian per live mode, started from the
// centers predicted by each mode's last velocity, and associates fitted peaks
// to modes by nearest predicted center.
TuningSeries track_modes(std::vector<TuningStep> steps, std::span<const SeedPeak> seeds,
                         const TrackOptions& options = {});

struct StepOverlap {
  int step = 0;
  double center = 0.0;
  double fwhm = 0.0;
  double r_lambda = 0.0;
};

struct ResonanceReport {
  bool found = false;  // false when the mode never comes within 5 linewidths
  int step = 0;        // step minimizing |center - lambda_i|
  double detuning = 0.0;           // nm, center - lambda_i at that step
  double detuning_linewidths = 0.0;
  std::vector<StepOverlap> overlaps;
};

ResonanceReport find_resonance(const TrackedMode& mode, const EmitterLine& line);
ResonanceReport find_resonance(const TuningSeries& series, const std::string& label,
                               const EmitterLine& line);

struct Enhancement {
  double ratio = 0.0, ratio_sigma = 0.0;
  int on_step = 0, off_step = 0;
  double on_area = 0.0, off_area = 0.0;
  double on_area_sigma = 0.0, off_area_sigma = 0.0;
};

// ZPL Lorentzian area on resonance over the area far detuned. The on step
// maximizes and the off step minimizes the best tracked-mode R_lambda.
Enhancement enhancement_ratio(const TuningSeries& series, const EmitterLine& line);
Enhancement enhancement_ratio(const TuningSeries& series, const EmitterLine& line, int on_step,
                              int off_step);

// Windowed single-Lorentzian fit of the ZPL in one spectrum.
fitting::LorentzianFit fit_zpl(const PLSpectrum& spectrum, const EmitterLine& line);

// ---------------------------------------------------------------------------
// Polarization mixing (phenomenological incoherent sum)

struct PolarizedChannel {
  double angle = 0.0;   // degrees
  double weight = 1.0;  // >= 0

  static std::vector<std::string> violations(const PolarizedChannel& c);
};

struct ModeChannel {
  PolarizedChannel channel;
  CavityMode mode;
};

struct MixturePoint {
  double detuning = 0.0;  // nm
  double angle = 0.0;     // degrees, (-90, 90]
  double degree = 0.0;    // |Stokes sum| / total weight
};

// I(phi; delta) = w_e cos^2(phi - phi_e) + sum_k w_k R_k(delta) cos^2(phi - phi_k),
// where mode k is centered at lambda_c,k + delta. The effective angle is the
// argmax of I. DomainError when the pattern has no preferred axis.
MixturePoint effective_angle(const PolarizedChannel& emitter, std::span<const ModeChannel> modes,
                             double lambda_i, double detuning);

std::vector<MixturePoint> polarization_mixture(const PolarizedChannel& emitter,
                                               std::span<const ModeChannel> modes,
                                               double lambda_i,
                                               std::span<const double> detunings);

// Adds multiples of 180 deg so consecutive axis angles never jump by more
// than 90 deg.
std::vector<double> unwrap_axis_angles(std::span<const double> degrees);

}  // namespace cqed::spectra
