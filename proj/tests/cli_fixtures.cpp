// Writes the synthetic inputs used by the command line smoke test into argv[1].
#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "cqed/dynamics.hpp"
#include "cqed/fitting.hpp"
#include "cqed/io.hpp"
#include "cqed/montecarlo.hpp"

using namespace cqed;
namespace fs = std::filesystem;

namespace {

struct Line {
  double center, fwhm, amplitude;
};

PLSpectrum spectrum(const std::vector<Line>& lines, double baseline, std::uint64_t seed) {
  montecarlo::Rng rng(seed);
  PLSpectrum::Fields f;
  for (double x = 725; x <= 775 + 1e-9; x += 0.05) {
    double y = baseline;
    for (const auto& l : lines) {
      const double hw = 0.5 * l.fwhm, d = x - l.center;
      y += l.amplitude * hw * hw / (d * d + hw * hw);
    }
    f.wavelengths.push_back(x);
    f.intensities.push_back(std::max(0.0, y + std::sqrt(y) * rng.normal()));
  }
  return PLSpectrum(f);
}

void write_series(const fs::path& dir, const std::vector<PLSpectrum>& steps, const std::string& seeds,
                  const std::string& line) {
  fs::create_directories(dir);
  std::string manifest = "{\"units\": \"nm\",\n \"steps\": [";
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const auto name = "s" + std::to_string(s) + ".csv";
    io::write_text((dir / name).string(), io::spectrum_csv(steps[s]));
    manifest += std::string(s ? ", " : "") + "{\"index\": " + std::to_string(s) + ", \"file\": \"" + name + "\"}";
  }
  manifest += "],\n \"seeds\": " + seeds;
  if (!line.empty()) manifest += ",\n \"line\": " + line;
  manifest += "}\n";
  io::write_text((dir / "manifest.json").string(), manifest);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: cli_fixtures DIR\n";
    return 2;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);

  io::write_text((dir / "poisson.csv").string(), io::stream_csv(montecarlo::poisson_stream(1e5, 1.0, 5)));

  // Power series of a bandgap-inhibited emitter with a 2.6 ns zero-power lifetime, 1% scatter.
  {
    const ThreeLevelRates base(0, 1 / 2.6e-9 - 3e7, 3e7, 5e6);
    const dynamics::PumpModel pump(2e8);
    const std::vector<double> powers = {0.1, 0.2, 0.5, 1.0, 2.0, 4.0};
    const auto clean = dynamics::power_sweep(base, pump, powers);
    montecarlo::Rng rng(17);
    std::vector<G2Params> noisy;
    for (const auto& p : clean.params())
      noisy.emplace_back(p.tau1() * (1 + 0.01 * rng.normal()), p.tau2() * (1 + 0.01 * rng.normal()),
                         p.a() * (1 + 0.01 * rng.normal()));
    io::write_text((dir / "sweep.csv").string(), io::power_sweep_csv(dynamics::PowerSweep(powers, noisy)));
  }

  {
    std::vector<PLSpectrum> steps;
    for (int s = 0; s < 10; ++s) steps.push_back(spectrum({{769.0 - 1.6 * s, 2.3, 100}}, 10, 300 + s));
    write_series(dir / "track", steps, R"([{"label": "o1", "center": 769.0, "fwhm": 2.3}])",
                 R"({"lambda_i": 739.9, "linewidth": 0.5})");
  }
  {
    // on resonance at step 6, ZPL area x19
    std::vector<PLSpectrum> steps;
    for (int s = 0; s <= 12; ++s)
      steps.push_back(spectrum({{749.5 - 1.6 * s, 2.3, 25}, {739.9, 0.5, (s == 6 ? 19.0 : 1.0) * 200}}, 10, 800 + s));
    write_series(dir / "enhance", steps, R"([{"label": "o1", "center": 749.5, "fwhm": 2.3}])",
                 R"({"lambda_i": 739.9, "linewidth": 0.5})");
  }
  {
    montecarlo::Rng rng(23);
    std::string text = "angle_deg,intensity\n";
    for (int k = 0; k < 24; ++k) {
      const double a = 15.0 * k;
      text += io::format_double(a) + "," +
              io::format_double(std::max(0.0, fitting::cos2_model(a, 0.0, 100, 20) + 10 * rng.normal())) + "\n";
    }
    io::write_text((dir / "pol.csv").string(), text);
  }
  io::write_text((dir / "bad_spectrum.csv").string(), "wavelength_nm,counts\n739,1\n739.5,x\n");
  return 0;
}
