#include "cqed/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cqed/errors.hpp"

namespace cqed::io {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  if (*b == '+') ++b;
  const auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e;
}

std::size_t json_error_line(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

json parse_json_file(const std::string& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path, json_error_line(text, e.byte), "invalid JSON");
  }
}

// Collects missing/mistyped members instead of stopping at the first one.
struct Reader {
  Reader(const json& j_, std::string where_) : j(j_), where(std::move(where_)) {}

  const json& j;
  std::string where;
  std::vector<std::string> problems;

  double number(const std::string& key) {
    if (!j.contains(key)) {
      problems.push_back(where + "missing '" + key + "'");
      return 0.0;
    }
    if (!j[key].is_number()) {
      problems.push_back(where + "'" + key + "' is not a number");
      return 0.0;
    }
    return j[key].get<double>();
  }
  double number_or(const std::string& key, double dflt) { return j.contains(key) ? number(key) : dflt; }
  std::string text_or(const std::string& key, const std::string& dflt) {
    if (!j.contains(key)) return dflt;
    if (!j[key].is_string()) {
      problems.push_back(where + "'" + key + "' is not a string");
      return dflt;
    }
    return j[key].get<std::string>();
  }
  void done() {
    if (!problems.empty()) throw ValidationError(problems);
  }
};

void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw ValidationError({what + " must be a JSON object"});
}

std::filesystem::path resolve(const std::string& base_file, const std::string& rel) {
  std::filesystem::path p(rel);
  if (p.is_absolute()) return p;
  return std::filesystem::path(base_file).parent_path() / p;
}

}  // namespace

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed for " + path);
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_text(path)); }

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------------------
// CSV

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ParseError(file, header_line, "missing column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  double v;
  const auto& cell = rows.at(row).at(col);
  if (!parse_double(cell, v) || !std::isfinite(v))
    throw ParseError(file, row_lines.at(row), "'" + cell + "' is not a finite number");
  return v;
}

double CsvTable::meta_number(const std::string& key) const {
  const auto it = meta.find(key);
  if (it == meta.end()) throw ParseError(file, 0, "missing header entry '" + key + "'");
  double v;
  if (!parse_double(it->second, v) || !std::isfinite(v))
    throw ParseError(file, 0, "header entry '" + key + "' is not a finite number");
  return v;
}

CsvTable parse_csv(std::string_view text, const std::string& name, bool has_header) {
  CsvTable t;
  t.file = name;
  std::size_t lineno = 0, pos = 0;
  bool header_seen = !has_header;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(std::string_view(line).substr(1));
      const auto eq = body.find('=');
      if (eq != std::string::npos) t.meta[trim(body.substr(0, eq))] = trim(body.substr(eq + 1));
      continue;
    }
    auto cells = split(line, ',');
    if (!header_seen) {
      double probe;
      if (parse_double(cells.front(), probe)) throw ParseError(name, lineno, "missing column header");
      t.columns = std::move(cells);
      t.header_line = lineno;
      header_seen = true;
      continue;
    }
    if (has_header && cells.size() != t.columns.size())
      throw ParseError(name, lineno,
                       "expected " + std::to_string(t.columns.size()) + " fields, found " +
                           std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.row_lines.push_back(lineno);
  }
  if (!header_seen) throw ParseError(name, 0, "no column header");
  return t;
}

CsvTable read_csv(const std::string& path, bool has_header) {
  return parse_csv(read_text(path), path, has_header);
}

FieldMap parse_fieldmap_csv(std::string_view text, const std::string& name) {
  const CsvTable t = parse_csv(text, name, false);
  if (t.rows.empty()) throw ParseError(name, 0, "empty field map");
  const std::size_t nx = t.rows.front().size();
  Eigen::MatrixXd grid(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(nx));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != nx)
      throw ParseError(name, t.row_lines[r], "ragged grid row (" + std::to_string(t.rows[r].size()) +
                                                  " values, expected " + std::to_string(nx) + ")");
    for (std::size_t c = 0; c < nx; ++c)
      grid(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t.number(r, c);
  }
  FieldMap::Fields f;
  f.grid = std::move(grid);
  f.spacing_nm = t.meta_number("spacing_nm");
  if (const auto it = t.meta.find("origin"); it != t.meta.end()) {
    const auto xy = split(it->second, ',');
    if (xy.size() != 2 || !parse_double(xy[0], f.origin[0]) || !parse_double(xy[1], f.origin[1]))
      throw ParseError(name, 0, "header entry 'origin' must be 'x,y'");
  }
  if (t.meta.count("normalization")) f.normalization = t.meta_number("normalization");
  return FieldMap(std::move(f));
}

FieldMap read_fieldmap_csv(const std::string& path) { return parse_fieldmap_csv(read_text(path), path); }

std::string fieldmap_csv(const FieldMap& map) {
  const auto& f = map.fields();
  std::string out = "# spacing_nm=" + format_double(f.spacing_nm) + "\n# origin=" +
                    format_double(f.origin[0]) + "," + format_double(f.origin[1]) +
                    "\n# normalization=" + format_double(f.normalization) + "\n";
  for (Eigen::Index r = 0; r < f.grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < f.grid.cols(); ++c) {
      if (c) out += ',';
      out += format_double(f.grid(r, c));
    }
    out += '\n';
  }
  return out;
}

dynamics::PowerSweep read_power_sweep_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto cp = t.column("power_mW"), c1 = t.column("tau1_ns"), c2 = t.column("tau2_ns"),
             ca = t.column("a");
  const bool has_rate = t.has_column("rate_cps");
  std::vector<double> powers, counts;
  std::vector<G2Params> params;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    powers.push_back(t.number(r, cp));
    try {
      params.emplace_back(t.number(r, c1) * 1e-9, t.number(r, c2) * 1e-9, t.number(r, ca));
    } catch (const ValidationError& e) {
      throw ParseError(path, t.row_lines[r], e.what());
    }
    if (has_rate) counts.push_back(t.number(r, t.column("rate_cps")));
  }
  try {
    return dynamics::PowerSweep(std::move(powers), std::move(params), std::move(counts));
  } catch (const ValidationError& e) {
    throw ParseError(path, 0, e.what());
  }
}

std::string power_sweep_csv(const dynamics::PowerSweep& s) {
  const bool rate = !s.counts().empty();
  std::string out = rate ? "power_mW,tau1_ns,tau2_ns,a,rate_cps\n" : "power_mW,tau1_ns,tau2_ns,a\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& p = s.params()[i];
    out += format_double(s.powers()[i]) + "," + format_double(p.tau1() * 1e9) + "," +
           format_double(p.tau2() * 1e9) + "," + format_double(p.a());
    if (rate) out += "," + format_double(s.counts()[i]);
    out += '\n';
  }
  return out;
}

montecarlo::PhotonStream read_stream_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto ct = t.column("timestamp_s"), cc = t.column("channel");
  montecarlo::PhotonStream::Fields f;
  f.duration = t.meta_number("duration_s");
  if (const auto it = t.meta.find("seed"); it != t.meta.end()) {
    const auto& s = it->second;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), f.seed);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ParseError(path, 0, "bad seed");
  }
  if (const auto it = t.meta.find("rng"); it != t.meta.end()) f.rng = it->second;
  if (const auto it = t.meta.find("rates_hz"); it != t.meta.end()) {
    const auto parts = split(it->second, ',');
    ThreeLevelRates::Fields rf;
    if (parts.size() != 4 || !parse_double(parts[0], rf.k12) || !parse_double(parts[1], rf.k21) ||
        !parse_double(parts[2], rf.k23) || !parse_double(parts[3], rf.k31))
      throw ParseError(path, 0, "header entry 'rates_hz' must be k12,k21,k23,k31");
    f.rates = rf;
  }
  f.timestamps.reserve(t.rows.size());
  f.channels.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    f.timestamps.push_back(t.number(r, ct));
    try {
      f.channels.push_back(montecarlo::channel_from_string(t.rows[r][cc]));
    } catch (const ValidationError& e) {
      throw ParseError(path, t.row_lines[r], e.what());
    }
  }
  try {
    return montecarlo::PhotonStream(std::move(f));
  } catch (const ValidationError& e) {
    throw ParseError(path, 0, e.what());
  }
}

std::string stream_csv(const montecarlo::PhotonStream& s) {
  const auto& f = s.fields();
  std::string out = "# seed=" + std::to_string(f.seed) + "\n";
  if (f.rates)
    out += "# rates_hz=" + format_double(f.rates->k12) + "," + format_double(f.rates->k21) + "," +
           format_double(f.rates->k23) + "," + format_double(f.rates->k31) + "\n";
  out += "# duration_s=" + format_double(f.duration) + "\n# rng=" + f.rng + "\ntimestamp_s,channel\n";
  char buf[64];
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,", f.timestamps[i]);
    out += buf;
    out += montecarlo::to_string(f.channels[i]);
    out += '\n';
  }
  return out;
}

std::string histogram_csv(const montecarlo::HbtHistogram& h) {
  const auto c = h.bin_centers();
  const auto g = h.g2();
  const auto s = h.sigma();
  std::string out = "# normalization=" + format_double(h.normalization()) + "\ntau_s,g2,sigma\n";
  for (std::size_t i = 0; i < c.size(); ++i)
    out += format_double(c[i]) + "," + format_double(g[i]) + "," + format_double(s[i]) + "\n";
  return out;
}

G2Curve read_g2_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto ct = t.column("tau_s"), cg = t.column("g2");
  const bool has_sigma = t.has_column("sigma");
  G2Curve::Fields f;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    f.delays.push_back(t.number(r, ct));
    f.values.push_back(t.number(r, cg));
    if (has_sigma) f.sigmas.push_back(t.number(r, t.column("sigma")));
  }
  try {
    return G2Curve(std::move(f));
  } catch (const ValidationError& e) {
    throw ParseError(path, 0, e.what());
  }
}

std::string g2_curve_csv(const G2Curve& c) {
  std::string out = c.has_sigmas() ? "tau_s,g2,sigma\n" : "tau_s,g2\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    out += format_double(c.delays()[i]) + "," + format_double(c.values()[i]);
    if (c.has_sigmas()) out += "," + format_double(c.sigmas()[i]);
    out += '\n';
  }
  return out;
}

PLSpectrum read_spectrum_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto cw = t.column("wavelength_nm"), cc = t.column("counts");
  PLSpectrum::Fields f;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    f.wavelengths.push_back(t.number(r, cw));
    f.intensities.push_back(t.number(r, cc));
  }
  f.meta = path;
  try {
    return PLSpectrum(std::move(f));
  } catch (const ValidationError& e) {
    throw ParseError(path, 0, e.what());
  }
}

std::string spectrum_csv(const PLSpectrum& s) {
  std::string out = "wavelength_nm,counts\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out += format_double(s.wavelengths()[i]) + "," + format_double(s.intensities()[i]) + "\n";
  return out;
}

PolarizationScan read_polarization_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto ca = t.column("angle_deg"), ci = t.column("intensity");
  PolarizationScan::Fields f;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    f.angles.push_back(t.number(r, ca));
    f.intensities.push_back(t.number(r, ci));
  }
  try {
    return PolarizationScan(std::move(f));
  } catch (const ValidationError& e) {
    throw ParseError(path, 0, e.what());
  }
}

std::string polarization_csv(const PolarizationScan& s) {
  std::string out = "angle_deg,intensity\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out += format_double(s.angles()[i]) + "," + format_double(s.intensities()[i]) + "\n";
  return out;
}

TuningManifest read_tuning_manifest(const std::string& path) {
  const json j = parse_json_file(path);
  require_object(j, "tuning manifest");
  if (!j.contains("steps") || !j["steps"].is_array() || j["steps"].empty())
    throw ValidationError({"tuning manifest needs a non-empty 'steps' array"});
  TuningManifest m;
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < j["steps"].size(); ++i) {
    const auto& s = j["steps"][i];
    if (!s.is_object() || !s.contains("index") || !s["index"].is_number_integer() || !s.contains("file") ||
        !s["file"].is_string()) {
      problems.push_back("steps[" + std::to_string(i) + "] needs integer 'index' and string 'file'");
      continue;
    }
    const auto file = resolve(path, s["file"].get<std::string>()).string();
    m.files.push_back(file);
    m.steps.push_back({s["index"].get<int>(), read_spectrum_csv(file)});
  }
  if (j.contains("seeds")) {
    if (!j["seeds"].is_array()) problems.push_back("'seeds' must be an array");
    else
      for (std::size_t i = 0; i < j["seeds"].size(); ++i) {
        const auto& s = j["seeds"][i];
        if (!s.is_object()) {
          problems.push_back("seeds[" + std::to_string(i) + "] must be an object");
          continue;
        }
        Reader r{s, "seeds[" + std::to_string(i) + "]: "};
        spectra::SeedPeak p;
        p.label = r.text_or("label", "mode" + std::to_string(i));
        p.center = r.number("center");
        p.fwhm = r.number("fwhm");
        problems.insert(problems.end(), r.problems.begin(), r.problems.end());
        m.seeds.push_back(p);
      }
  }
  if (!problems.empty()) throw ValidationError(problems);
  if (j.contains("line")) m.line = emitter_from_json(j["line"]);
  return m;
}

// ---------------------------------------------------------------------------
// JSON

json vec_to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
    throw ValidationError({"expected a 3-vector of numbers"});
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const RadiativeBudget& b) {
  return {{"units", "Hz"}, {"gamma_zpl", b.gamma_zpl()}, {"gamma_psb", b.gamma_psb()}, {"gamma_nr", b.gamma_nr()}};
}

RadiativeBudget budget_from_json(const json& j) {
  require_object(j, "budget");
  Reader r{j, "budget: "};
  RadiativeBudget::Fields f{r.number("gamma_zpl"), r.number("gamma_psb"), r.number("gamma_nr")};
  r.done();
  return RadiativeBudget(f);
}

RadiativeBudget read_budget_json(const std::string& path) { return budget_from_json(parse_json_file(path)); }

json to_json(const ThreeLevelRates& x) {
  return {{"units", "Hz"}, {"k12", x.k12()}, {"k21", x.k21()}, {"k23", x.k23()}, {"k31", x.k31()}};
}

ThreeLevelRates rates_from_json(const json& j) {
  require_object(j, "rates");
  Reader r{j, "rates: "};
  ThreeLevelRates::Fields f{r.number("k12"), r.number("k21"), r.number("k23"), r.number("k31")};
  r.done();
  return ThreeLevelRates(f);
}

json to_json(const G2Params& p) {
  return {{"units", "s"}, {"tau1", p.tau1()}, {"tau2", p.tau2()}, {"a", p.a()}};
}

G2Params g2_params_from_json(const json& j) {
  require_object(j, "g2 parameters");
  Reader r{j, "g2: "};
  G2Params::Fields f{r.number("tau1"), r.number("tau2"), r.number("a")};
  r.done();
  return G2Params(f);
}

json to_json(const CavityMode& m) {
  json j = {{"units", "nm, (lambda/n)^3, deg"},
            {"lambda_c", m.lambda_c()},
            {"q_factor", m.q_factor()},
            {"mode_volume", m.mode_volume()},
            {"pol_angle", m.pol_angle()},
            {"label", m.label()}};
  return j;
}

CavityMode cavity_from_json(const json& j) {
  require_object(j, "cavity");
  Reader r{j, "cavity: "};
  CavityMode::Fields f;
  f.lambda_c = r.number("lambda_c");
  f.q_factor = r.number("q_factor");
  f.mode_volume = r.number("mode_volume");
  f.pol_angle = r.number_or("pol_angle", 0.0);
  f.label = r.text_or("label", "");
  r.done();
  return CavityMode(std::move(f));
}

json to_json(const EmitterLine& l) {
  return {{"units", "nm"},
          {"lambda_i", l.lambda_i()},
          {"linewidth", l.linewidth()},
          {"dipole_axis", vec_to_json(l.dipole_axis())},
          {"position", vec_to_json(l.position())},
          {"label", l.label()}};
}

EmitterLine emitter_from_json(const json& j) {
  require_object(j, "emitter");
  Reader r{j, "emitter: "};
  EmitterLine::Fields f;
  f.lambda_i = r.number("lambda_i");
  f.linewidth = r.number_or("linewidth", 0.0);
  f.label = r.text_or("label", "");
  r.done();
  if (j.contains("dipole_axis")) f.dipole_axis = vec3_from_json(j["dipole_axis"]);
  if (j.contains("position")) f.position = vec3_from_json(j["position"]);
  return EmitterLine(std::move(f));
}

json to_json(const PhotonicEnvironment& e) {
  json j = {{"kind", to_string(e.kind())}, {"f_phc", e.f_phc()}};
  if (e.kind() == EnvironmentKind::CavityCoupled) j["f_cav"] = e.f_cav();
  return j;
}

PhotonicEnvironment environment_from_json(const json& j) {
  require_object(j, "environment");
  Reader r{j, "environment: "};
  PhotonicEnvironment::Fields f;
  f.kind = environment_kind_from_string(r.text_or("kind", "Bulk"));
  f.f_phc = r.number_or("f_phc", 1.0);
  if (j.contains("f_cav")) f.f_cav = r.number("f_cav");
  r.done();
  return PhotonicEnvironment(f);
}

json to_json(const purcell::ModifiedRates& m) {
  return {{"units", "Hz"},
          {"kind", to_string(m.kind)},
          {"gamma_total", m.gamma_total},
          {"channel_zpl", m.channel_zpl},
          {"channel_psb", m.channel_psb},
          {"channel_nr", m.channel_nr},
          {"eta_qe", m.eta_qe}};
}

json to_json(const fitting::FitResult& f) {
  json params = json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    const double s = f.sigma(f.names[i]);
    params[f.names[i]] = {{"value", f.values[static_cast<Eigen::Index>(i)]},
                          {"sigma", std::isfinite(s) ? json(s) : json(nullptr)}};
  }
  json cov = json::array();
  for (Eigen::Index r = 0; r < f.covariance.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < f.covariance.cols(); ++c) {
      const double v = f.covariance(r, c);
      row.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    }
    cov.push_back(row);
  }
  return {{"parameters", params},
          {"names", f.names},
          {"covariance", cov},
          {"residual_norm", f.residual_norm},
          {"reduced_chi2", f.reduced_chi2},
          {"iterations", f.iterations},
          {"converged", f.converged},
          {"warnings", f.warnings}};
}

json to_json(const spectra::TrackedMode& m) {
  json pts = json::array();
  for (const auto& p : m.points)
    pts.push_back({{"step", p.step}, {"center", p.center}, {"fwhm", p.fwhm}, {"amplitude", p.amplitude}});
  json j = {{"units", "nm"},
            {"label", m.label},
            {"points", pts},
            {"monotonic", m.monotonic},
            {"monotonic_violations", m.monotonic_violations},
            {"mean_rate_nm_per_step", m.mean_rate},
            {"mean_rate_sigma", m.mean_rate_sigma}};
  j["terminated_at"] = m.terminated_at ? json(*m.terminated_at) : json(nullptr);
  return j;
}

}  // namespace cqed::io
