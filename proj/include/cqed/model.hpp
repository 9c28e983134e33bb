// model.hpp - domain types shared by every module.
//
// Unit convention (internal and in serialized documents):
//   rates Hz, times s, wavelengths nm, powers mW, angles degrees.
//
// Each type keeps its raw data in a nested `Fields` aggregate. `Fields` is the
// unchecked wire form; the enclosing class is the checked value. Constructors
// throw ValidationError listing every violated invariant, and reject NaN/Inf
// in all numeric fields. Objects are immutable after construction.
#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cqed {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;

double lifetime_from_rate(double rate_hz);
double rate_from_lifetime(double lifetime_s);

class RadiativeBudget {
 public:
  struct Fields {
    double gamma_zpl = 0.0;
    double gamma_psb = 0.0;
    double gamma_nr = 0.0;
  };

  explicit RadiativeBudget(const Fields& f);
  RadiativeBudget(double gamma_zpl, double gamma_psb, double gamma_nr)
      : RadiativeBudget(Fields{gamma_zpl, gamma_psb, gamma_nr}) {}

  static std::vector<std::string> violations(const Fields& f);

  double gamma_zpl() const { return f_.gamma_zpl; }
  double gamma_psb() const { return f_.gamma_psb; }
  double gamma_nr() const { return f_.gamma_nr; }
  double gamma_rad() const { return f_.gamma_zpl + f_.gamma_psb; }
  double gamma_total() const { return gamma_rad() + f_.gamma_nr; }
  double eta_qe() const { return gamma_rad() / gamma_total(); }

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

// Normalized mid-plane field amplitude of one cavity mode. Rows run along y,
// columns along x. Coordinates are nm in the lattice frame whose origin is the
// cavity center; `origin` is the position of cell (0,0).
class FieldMap {
 public:
  struct Fields {
    Eigen::MatrixXd grid;
    double spacing_nm = 1.0;
    Vec2 origin{0.0, 0.0};
    // Amplitude of the global field maximum. 0 means "compute from grid".
    double normalization = 0.0;
  };

  explicit FieldMap(Fields f);

  static std::vector<std::string> violations(const Fields& f);

  // Signed normalized amplitude at `position`, bilinear between cells.
  // Throws DomainError naming the violated bound when outside the grid.
  double normalized_amplitude(const Vec2& position) const;

  Vec2 lower_corner() const;
  Vec2 upper_corner() const;

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

class CavityMode {
 public:
  struct Fields {
    double lambda_c = 0.0;     // nm
    double q_factor = 0.0;
    double mode_volume = 0.0;  // (lambda/n)^3
    double pol_angle = 0.0;    // degrees in (-90, 90]
    std::shared_ptr<const FieldMap> field_map;
    std::string label;
  };

  explicit CavityMode(Fields f);

  static std::vector<std::string> violations(const Fields& f);

  double lambda_c() const { return f_.lambda_c; }
  double q_factor() const { return f_.q_factor; }
  double mode_volume() const { return f_.mode_volume; }
  double pol_angle() const { return f_.pol_angle; }
  double linewidth() const { return f_.lambda_c / f_.q_factor; }
  const FieldMap* field_map() const { return f_.field_map.get(); }
  const std::string& label() const { return f_.label; }

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

class EmitterLine {
 public:
  struct Fields {
    double lambda_i = 0.0;   // nm
    double linewidth = 0.0;  // nm
    Vec3 dipole_axis{1.0, 0.0, 0.0};
    Vec3 position{0.0, 0.0, 0.0};
    std::string label;
  };

  explicit EmitterLine(Fields f);

  static std::vector<std::string> violations(const Fields& f);

  double lambda_i() const { return f_.lambda_i; }
  double linewidth() const { return f_.linewidth; }
  const Vec3& dipole_axis() const { return f_.dipole_axis; }
  const Vec3& position() const { return f_.position; }
  const std::string& label() const { return f_.label; }

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

enum class EnvironmentKind { Bulk, BandgapOnly, CavityCoupled };

std::string to_string(EnvironmentKind kind);
EnvironmentKind environment_kind_from_string(const std::string& s);

class PhotonicEnvironment {
 public:
  struct Fields {
    EnvironmentKind kind = EnvironmentKind::Bulk;
    double f_phc = 1.0;
    std::optional<double> f_cav;
  };

  explicit PhotonicEnvironment(const Fields& f);

  static PhotonicEnvironment bulk();
  static PhotonicEnvironment bandgap_only(double f_phc);
  static PhotonicEnvironment cavity_coupled(double f_cav, double f_phc);

  static std::vector<std::string> violations(const Fields& f);

  EnvironmentKind kind() const { return f_.kind; }
  double f_phc() const { return f_.f_phc; }
  // Zero unless kind() == CavityCoupled.
  double f_cav() const { return f_.f_cav.value_or(0.0); }

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

class ThreeLevelRates {
 public:
  struct Fields {
    double k12 = 0.0;  // pump |1> -> |2>
    double k21 = 0.0;  // total decay |2> -> |1>
    double k23 = 0.0;  // shelving |2> -> |3>
    double k31 = 0.0;  // deshelving |3> -> |1>
  };

  explicit ThreeLevelRates(const Fields& f);
  ThreeLevelRates(double k12, double k21, double k23, double k31)
      : ThreeLevelRates(Fields{k12, k21, k23, k31}) {}

  static std::vector<std::string> violations(const Fields& f);

  double k12() const { return f_.k12; }
  double k21() const { return f_.k21; }
  double k23() const { return f_.k23; }
  double k31() const { return f_.k31; }

  ThreeLevelRates with_pump(double k12) const;

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

class G2Params {
 public:
  struct Fields {
    double tau1 = 0.0;  // s
    double tau2 = 0.0;  // s
    double a = 0.0;
  };

  // Swaps tau1/tau2 when given in the wrong order.
  explicit G2Params(const Fields& f);
  G2Params(double tau1, double tau2, double a) : G2Params(Fields{tau1, tau2, a}) {}

  static std::vector<std::string> violations(const Fields& f);

  double tau1() const { return f_.tau1; }
  double tau2() const { return f_.tau2; }
  double a() const { return f_.a; }

  // 1 - (1+a) exp(-|tau|/tau1) + a exp(-|tau|/tau2)
  double evaluate(double tau) const;

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

class G2Curve {
 public:
  struct Fields {
    std::vector<double> delays;  // s
    std::vector<double> values;
    std::vector<double> sigmas;  // empty when absent
  };

  explicit G2Curve(Fields f);

  static std::vector<std::string> violations(const Fields& f);

  const std::vector<double>& delays() const { return f_.delays; }
  const std::vector<double>& values() const { return f_.values; }
  const std::vector<double>& sigmas() const { return f_.sigmas; }
  bool has_sigmas() const { return !f_.sigmas.empty(); }
  std::size_t size() const { return f_.delays.size(); }

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

class PLSpectrum {
 public:
  struct Fields {
    std::vector<double> wavelengths;  // nm
    std::vector<double> intensities;  // counts
    std::string meta;
  };

  explicit PLSpectrum(Fields f);

  static std::vector<std::string> violations(const Fields& f);

  const std::vector<double>& wavelengths() const { return f_.wavelengths; }
  const std::vector<double>& intensities() const { return f_.intensities; }
  const std::string& meta() const { return f_.meta; }
  std::size_t size() const { return f_.wavelengths.size(); }

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

class PolarizationScan {
 public:
  struct Fields {
    std::vector<double> angles;  // degrees
    std::vector<double> intensities;
  };

  explicit PolarizationScan(Fields f);

  static std::vector<std::string> violations(const Fields& f);

  const std::vector<double>& angles() const { return f_.angles; }
  const std::vector<double>& intensities() const { return f_.intensities; }
  std::size_t size() const { return f_.angles.size(); }

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

class SaturationCurve {
 public:
  struct Fields {
    std::vector<double> powers;  // mW
    std::vector<double> rates;   // counts/s
  };

  explicit SaturationCurve(Fields f);

  static std::vector<std::string> violations(const Fields& f);

  const std::vector<double>& powers() const { return f_.powers; }
  const std::vector<double>& rates() const { return f_.rates; }
  std::size_t size() const { return f_.powers.size(); }

  const Fields& fields() const { return f_; }

 private:
  Fields f_;
};

struct CheckedModel {
  RadiativeBudget budget;
  PhotonicEnvironment environment;
};

// Checks both inputs and throws one ValidationError with all violations.
CheckedModel validate_model(const RadiativeBudget::Fields& budget,
                            const PhotonicEnvironment::Fields& env);

// Wraps an angle in degrees into (-90, 90].
double canonical_axis_angle(double degrees);

}  // namespace cqed
