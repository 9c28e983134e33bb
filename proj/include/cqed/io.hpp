// io.hpp - CSV and JSON readers/writers for the domain types, plus SHA-256
// digests for report provenance.
//
// CSV files may carry "# key=value" comment lines before the column header.
// Malformed input raises ParseError with the 1-based line number.
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cqed/dynamics.hpp"
#include "cqed/fitting.hpp"
#include "cqed/model.hpp"
#include "cqed/montecarlo.hpp"
#include "cqed/purcell.hpp"
#include "cqed/spectra.hpp"

namespace cqed::io {

using nlohmann::json;

std::string read_text(const std::string& path);
void write_text(const std::string& path, std::string_view content);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

struct CsvTable {
  std::string file;
  std::map<std::string, std::string> meta;  // from "# key=value" lines
  std::vector<std::string> columns;
  std::size_t header_line = 0;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;

  // Index of a named column; ParseError naming the header line when missing.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const;
  double meta_number(const std::string& key) const;
};

// `has_header` false treats every non-comment line as data.
CsvTable parse_csv(std::string_view text, const std::string& name, bool has_header = true);
CsvTable read_csv(const std::string& path, bool has_header = true);

// FieldMap: headerless grid rows (y) of comma-separated values (x), with
// "# spacing_nm=", "# origin=x,y" and optional "# normalization=".
FieldMap parse_fieldmap_csv(std::string_view text, const std::string& name);
FieldMap read_fieldmap_csv(const std::string& path);
std::string fieldmap_csv(const FieldMap& map);

// power_mW, tau1_ns, tau2_ns, a[, rate_cps]
dynamics::PowerSweep read_power_sweep_csv(const std::string& path);
std::string power_sweep_csv(const dynamics::PowerSweep& sweep);

// timestamp_s, channel; header carries seed, rates_hz, duration_s, rng.
montecarlo::PhotonStream read_stream_csv(const std::string& path);
std::string stream_csv(const montecarlo::PhotonStream& stream);

// tau_s, g2, sigma
std::string histogram_csv(const montecarlo::HbtHistogram& h);
// tau_s, g2[, sigma]
G2Curve read_g2_csv(const std::string& path);
std::string g2_curve_csv(const G2Curve& curve);

// wavelength_nm, counts
PLSpectrum read_spectrum_csv(const std::string& path);
std::string spectrum_csv(const PLSpectrum& spectrum);

// angle_deg, intensity
PolarizationScan read_polarization_csv(const std::string& path);
std::string polarization_csv(const PolarizationScan& scan);

// Tuning manifest:
// {"units": "nm",
//  "steps": [{"index": 0, "file": "s0.csv"}, ...],
//  "seeds": [{"label": "o1", "center": 769.0, "fwhm": 2.3}],
//  "line": {"lambda_i": 739.9, "linewidth": 0.5}}     (line optional)
// Relative file names resolve against the manifest's directory.
struct TuningManifest {
  std::vector<spectra::TuningStep> steps;
  std::vector<spectra::SeedPeak> seeds;
  std::optional<EmitterLine> line;
  std::vector<std::string> files;  // resolved paths, step order
};

TuningManifest read_tuning_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// JSON. Documents use the internal units and say so in a "units" member.

json to_json(const RadiativeBudget& b);
RadiativeBudget budget_from_json(const json& j);
RadiativeBudget read_budget_json(const std::string& path);

json to_json(const ThreeLevelRates& r);
ThreeLevelRates rates_from_json(const json& j);

json to_json(const G2Params& p);
G2Params g2_params_from_json(const json& j);

json to_json(const CavityMode& m);
CavityMode cavity_from_json(const json& j);

json to_json(const EmitterLine& l);
EmitterLine emitter_from_json(const json& j);

json to_json(const PhotonicEnvironment& e);
PhotonicEnvironment environment_from_json(const json& j);

json to_json(const purcell::ModifiedRates& m);
json to_json(const fitting::FitResult& f);
json to_json(const spectra::TrackedMode& m);

json vec_to_json(const Vec3& v);
Vec3 vec3_from_json(const json& j);

}  // namespace cqed::io
