// purcell.hpp - Purcell factors, bandgap inhibition and decay-rate budgets.
//
// All functions are pure. Rates are in Hz, wavelengths in nm.
#pragma once

#include "cqed/model.hpp"

namespace cqed::purcell {

// Refractive index of diamond.
inline constexpr double kDiamondIndex = 2.4;

struct OverlapFactors {
  double r_lambda = 1.0;
  double r_mu = 1.0;
  double r_r = 1.0;

  OverlapFactors() = default;
  OverlapFactors(double r_lambda, double r_mu, double r_r);  // each in [0,1]
};

struct ModifiedRates {
  double gamma_total = 0.0;
  double channel_zpl = 0.0;
  double channel_psb = 0.0;
  double channel_nr = 0.0;
  double eta_qe = 0.0;
  EnvironmentKind kind = EnvironmentKind::Bulk;
};

// F_P = 3 Q / (4 pi^2 V) with V in (lambda/n)^3; the (lambda_c/n)^3 factor cancels.
double ideal_purcell(const CavityMode& mode);

struct SpectralOverlap {
  double r_lambda = 1.0;
  // The Lorentzian overlap assumes the cavity linewidth exceeds the emitter
  // linewidth; set when that does not hold.
  bool linewidth_warning = false;
};

SpectralOverlap spectral_overlap(const EmitterLine& line, const CavityMode& mode);

// Lorentzian overlap from raw numbers; the single implementation shared with
// the spectra module.
double spectral_overlap(double lambda_i, double lambda_c, double q_factor);

// Squared projection of the dipole on the local field axis. Both must be unit
// vectors (1e-9); DomainError otherwise.
double orientation_overlap(const Vec3& dipole_axis, const Vec3& field_axis);

// |eps(r)|^2 at an in-plane lattice position (nm, cavity-centered).
double spatial_overlap(const FieldMap& field, const Vec2& position);

double effective_purcell(double f_p, const OverlapFactors& overlaps);

// Channel rates in the given environment. CavityCoupled enhances the ZPL
// channel by f_cav and inhibits the side band by f_phc; BandgapOnly inhibits
// both radiative channels; non-radiative decay is never modified.
ModifiedRates modified_budget(const RadiativeBudget& budget, const PhotonicEnvironment& env);

// Ratio of cavity-coupled to bandgap-inhibited ZPL emission.
double pl_enhancement(double f_cav, double f_phc);

struct EmissionFractions {
  double beta_total = 0.0;
  double beta_radiative = 0.0;
};

EmissionFractions mode_emission_fractions(const ModifiedRates& modified);

// Recovers the intrinsic budget from the total decay rates measured on and
// off resonance plus an assumed gamma_zpl:gamma_psb branching ratio.
RadiativeBudget invert_budget(double gamma_cav, double gamma_phc, double f_cav, double f_phc,
                              double branching);

struct InhibitionEfficiencies {
  double eta_bulk = 0.0;
  double eta_phc = 0.0;
  double lifetime_ratio = 0.0;  // tau_phc / tau_bulk
};

InhibitionEfficiencies infer_bulk_qe_from_inhibition(double tau_bulk, double tau_phc, double f_phc);

// Radiative-rate reduction in a sub-wavelength dielectric sphere of index n.
double nanosphere_factor(double n);

// Efficiency after scaling all radiative rates by `radiative_factor` with
// gamma_nr held fixed.
double rescale_qe(double eta, double radiative_factor);

}  // namespace cqed::purcell
