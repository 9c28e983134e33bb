#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cqed/errors.hpp"
#include "cqed/montecarlo.hpp"
#include "cqed/purcell.hpp"
#include "cqed/spectra.hpp"

using namespace cqed;
using namespace cqed::spectra;

namespace {

struct Line {
  double center, fwhm, amplitude;
};

double lorentz(double x, const Line& l) {
  const double hw = 0.5 * l.fwhm, d = x - l.center;
  return l.amplitude * hw * hw / (d * d + hw * hw);
}

// Shot-noise-like spectrum on a 0.05 nm grid.
PLSpectrum spectrum(const std::vector<Line>& lines, double baseline, std::uint64_t seed,
                    double lo = 725, double hi = 775, double noise_scale = 1.0) {
  montecarlo::Rng rng(seed);
  PLSpectrum::Fields f;
  for (double x = lo; x <= hi + 1e-9; x += 0.05) {
    double y = baseline;
    for (const auto& l : lines) y += lorentz(x, l);
    f.wavelengths.push_back(x);
    f.intensities.push_back(std::max(0.0, y + noise_scale * std::sqrt(y) * rng.normal()));
  }
  return PLSpectrum(f);
}

EmitterLine zpl_line(double lambda = 739.9, double lw = 0.5) {
  EmitterLine::Fields f;
  f.lambda_i = lambda;
  f.linewidth = lw;
  return EmitterLine(f);
}

CavityMode mode(double lambda_c, double q, double angle, const std::string& label = "") {
  return CavityMode(CavityMode::Fields{lambda_c, q, 1.0, angle, nullptr, label});
}

TrackedMode exact_track(double start, double rate, int steps, double fwhm) {
  TrackedMode m;
  m.label = "m";
  for (int s = 0; s < steps; ++s) m.points.push_back({s, start + rate * s, 0.0, fwhm, 0.0, 1.0, 0.0});
  return m;
}

// Brute-force argmax of the mixed polar pattern.
double argmax_angle(const PolarizedChannel& e, const std::vector<ModeChannel>& modes, double lambda_i,
                    double detuning) {
  double best = 0, best_i = -1;
  for (int k = 0; k < 180000; ++k) {
    const double phi = -90 + k * 0.001 + 0.001;
    auto c2 = [](double d) { return std::pow(std::cos(d * M_PI / 180), 2); };
    double i = e.weight * c2(phi - e.angle);
    for (const auto& m : modes) {
      const double r = purcell::spectral_overlap(lambda_i, m.mode.lambda_c() + detuning, m.mode.q_factor());
      i += m.channel.weight * r * c2(phi - m.channel.angle);
    }
    if (i > best_i) {
      best_i = i;
      best = phi;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("mode tracking") {
  SUBCASE("steady blue shift") {
    std::vector<TuningStep> steps;
    for (int s = 0; s <= 10; ++s) steps.push_back({s, spectrum({{765 - 1.6 * s, 2.3, 200}}, 30, 100 + s)});
    const std::vector<SeedPeak> seeds{{"o1", 765, 2.3}};
    const auto t = track_modes(steps, seeds);
    const auto& m = t.mode("o1");
    CHECK(m.points.size() == 11);
    CHECK_FALSE(m.terminated_at);
    CHECK(m.monotonic);
    CHECK(m.mean_rate == doctest::Approx(-1.6).epsilon(0.05 / 1.6));
    for (const auto& p : m.points) CHECK(p.center == doctest::Approx(765 - 1.6 * p.step).epsilon(1e-4));
  }
  SUBCASE("stationary peak") {
    std::vector<TuningStep> steps;
    for (int s = 0; s < 8; ++s) steps.push_back({s, spectrum({{750, 1.7, 150}}, 20, 200 + s)});
    const std::vector<SeedPeak> seeds{{"e1", 750, 1.7}};
    const auto t = track_modes(steps, seeds);
    const auto& m = t.mode("e1");
    CHECK(std::abs(m.mean_rate) < 3 * m.mean_rate_sigma + 1e-3);
    CHECK(std::abs(m.mean_rate) < 0.01);
  }
  SUBCASE("crossing peaks keep their identity") {
    std::vector<TuningStep> steps;
    auto a = [](int s) { return 752.3 - 1.6 * s; };
    auto b = [](int s) { return 741.8 - 0.2 * s; };  // closest approach 0.7 nm
    for (int s = 0; s <= 12; ++s)
      steps.push_back({s, spectrum({{a(s), 1.0, 300}, {b(s), 0.4, 150}}, 20, 300 + s)});
    const std::vector<SeedPeak> seeds{{"A", a(0), 1.0}, {"B", b(0), 0.4}};
    const auto t = track_modes(steps, seeds);
    const auto& ma = t.mode("A");
    const auto& mb = t.mode("B");
    CHECK(ma.points.size() == 13);
    CHECK(mb.points.size() == 13);
    for (const auto& p : ma.points) {
      if (std::abs(a(p.step) - b(p.step)) > 1.0) CHECK(p.center == doctest::Approx(a(p.step)).epsilon(2e-4));
    }
    for (const auto& p : mb.points) {
      if (std::abs(a(p.step) - b(p.step)) > 1.0) CHECK(p.center == doctest::Approx(b(p.step)).epsilon(2e-4));
    }
    CHECK(ma.mean_rate == doctest::Approx(-1.6).epsilon(0.05));
    CHECK(mb.mean_rate == doctest::Approx(-0.2).epsilon(0.25));
  }
  SUBCASE("permutation invariance") {
    std::vector<TuningStep> steps;
    for (int s = 0; s <= 6; ++s)
      steps.push_back({s, spectrum({{760 - 1.6 * s, 2.0, 200}, {745 - 1.2 * s, 1.5, 120}}, 20, 400 + s)});
    const std::vector<SeedPeak> fwd{{"p", 760, 2.0}, {"q", 745, 1.5}};
    const std::vector<SeedPeak> rev{{"q", 745, 1.5}, {"p", 760, 2.0}};
    const auto t1 = track_modes(steps, fwd);
    const auto t2 = track_modes(steps, rev);
    for (const char* l : {"p", "q"}) {
      const auto& m1 = t1.mode(l);
      const auto& m2 = t2.mode(l);
      REQUIRE(m1.points.size() == m2.points.size());
      for (std::size_t i = 0; i < m1.points.size(); ++i) CHECK(m1.points[i].center == m2.points[i].center);
    }
  }
  SUBCASE("lost track terminates the mode") {
    std::vector<TuningStep> steps;
    for (int s = 0; s < 8; ++s) {
      std::vector<Line> lines{{748, 1.5, 100}};
      if (s < 5) lines.push_back({760 - 1.6 * s, 2.0, 200});
      steps.push_back({2 * s, spectrum(lines, 20, 500 + s)});  // indices 0, 2, 4, ...
    }
    const std::vector<SeedPeak> seeds{{"gone", 760, 2.0}, {"stay", 748, 1.5}};
    const auto t = track_modes(steps, seeds);
    REQUIRE(t.mode("gone").terminated_at);
    CHECK(*t.mode("gone").terminated_at == 10);
    CHECK(t.mode("gone").points.size() == 5);
    CHECK_FALSE(t.mode("stay").terminated_at);
    CHECK(t.mode("stay").points.size() == 8);
    CHECK(t.mode("gone").mean_rate == doctest::Approx(-0.8).epsilon(0.05));  // per index unit
  }
  SUBCASE("red-shift is flagged, not rejected") {
    std::vector<TuningStep> steps;
    const std::vector<double> c{760, 758.4, 756.8, 758.0, 755.2};
    for (int s = 0; s < 5; ++s) steps.push_back({s, spectrum({{c[static_cast<std::size_t>(s)], 2.0, 300}}, 20, 600 + s)});
    const std::vector<SeedPeak> seeds{{"m", 760, 2.0}};
    const auto t = track_modes(steps, seeds);
    const auto& m = t.mode("m");
    CHECK(m.points.size() == 5);
    CHECK_FALSE(m.monotonic);
    REQUIRE(m.monotonic_violations.size() == 1);
    CHECK(m.monotonic_violations[0] == 3);
  }
  SUBCASE("series invariants") {
    std::vector<TuningStep> steps{{0, spectrum({}, 10, 1)}, {0, spectrum({}, 10, 2)}};
    CHECK_THROWS_AS(TuningSeries{steps}, ValidationError);
    const TuningSeries ok({{0, spectrum({}, 10, 1)}});
    CHECK_THROWS_AS(ok.mode("nope"), DomainError);
  }
}

TEST_CASE("resonance search") {
  const auto line = zpl_line();
  SUBCASE("designed crossing at step 7") {
    const auto r = find_resonance(exact_track(739.9 + 7 * 1.6, -1.6, 12, 2.3), line);
    CHECK(r.found);
    CHECK(r.step == 7);
    CHECK(r.overlaps[7].r_lambda == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& o : r.overlaps)
      CHECK(o.r_lambda == purcell::spectral_overlap(739.9, o.center, o.center / o.fwhm));
  }
  SUBCASE("never within five linewidths") {
    const auto r = find_resonance(exact_track(739.9 + 40, -1.0, 18, 2.3), line);  // stops 23 nm away
    CHECK_FALSE(r.found);
    CHECK(r.detuning_linewidths == doctest::Approx(10).epsilon(1e-9));
  }
  SUBCASE("start 769 nm at -1.6 nm per step") {
    const auto r = find_resonance(exact_track(769.0, -1.6, 25, 2.3), line);
    CHECK(r.found);
    CHECK(r.step == 18);
    CHECK(r.detuning == doctest::Approx(769.0 - 1.6 * 18 - 739.9));
  }
  SUBCASE("through a tracked series") {
    std::vector<TuningStep> steps;
    for (int s = 0; s <= 10; ++s) steps.push_back({s, spectrum({{747.9 - 1.6 * s, 2.3, 300}}, 20, 700 + s)});
    const std::vector<SeedPeak> seeds{{"o1", 747.9, 2.3}};
    const auto t = track_modes(steps, seeds);
    const auto r = find_resonance(t, "o1", line);
    CHECK(r.step == 5);
    CHECK_THROWS_AS(find_resonance(t, "o2", line), DomainError);
  }
}

TEST_CASE("ZPL enhancement") {
  // mode sweeps across a 0.5 nm ZPL at 739.9 nm; the ZPL area jumps on resonance
  auto series = [](double ratio, double scale, int on) {
    std::vector<TuningStep> steps;
    for (int s = 0; s <= 12; ++s) {
      const double amp = (s == on ? ratio : 1.0) * 200 * scale;
      steps.push_back({s, spectrum({{749.5 - 1.6 * s, 2.3, 25 * scale}, {739.9, 0.5, amp}}, 10 * scale, 800 + s, 725,
                                   775, std::sqrt(scale))});
    }
    const std::vector<SeedPeak> seeds{{"o1", 749.5, 2.3}};
    return track_modes(steps, seeds);
  };
  const auto line = zpl_line();
  for (double ratio : {19.0, 3.8}) {
    CAPTURE(ratio);
    const auto t = series(ratio, 1.0, 6);
    const auto e = enhancement_ratio(t, line);
    CHECK(e.on_step == 6);
    CHECK((e.off_step == 0 || e.off_step == 12));  // both ends equally detuned
    CHECK(e.ratio == doctest::Approx(ratio).epsilon(0.05));
    CHECK(e.ratio_sigma > 0);
    // same noise realization scaled: counting noise scaled along with it
    const auto e10 = enhancement_ratio(series(ratio, 10.0, 6), line);
    CHECK(e10.ratio == doctest::Approx(e.ratio).epsilon(1e-6));
  }
  SUBCASE("identical spectra") {
    const auto s = spectrum({{739.9, 0.5, 100}}, 20, 42);
    const TuningSeries t({{0, s}, {1, s}});
    const auto e = enhancement_ratio(t, line, 0, 1);
    CHECK(e.ratio == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("unresolvable ZPL names the step") {
    const TuningSeries t({{0, spectrum({{739.9, 0.5, 100}}, 20, 1)}, {3, spectrum({}, 20, 2)}});
    try {
      (void)enhancement_ratio(t, line, 0, 3);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("step 3") != std::string::npos);
    }
  }
}

TEST_CASE("polarization mixing") {
  const PolarizedChannel emitter{60.0, 1.0};
  const double li = 739.9;
  SUBCASE("far detuning restores the emitter axis") {
    const std::vector<ModeChannel> modes{{{0.0, 1.0}, mode(739.9, 320, 0)}, {{-45.0, 2.0}, mode(741.0, 430, -45)}};
    const auto p = effective_angle(emitter, modes, li, 400.0);
    CHECK(p.angle == doctest::Approx(60).epsilon(1e-3));
  }
  SUBCASE("mode dominance") {
    const std::vector<ModeChannel> modes{{{-45.0, 1e6}, mode(739.9, 320, -45)}};
    CHECK(effective_angle(emitter, modes, li, 0.0).angle == doctest::Approx(-45).epsilon(1e-4));
  }
  SUBCASE("equal weights average the Stokes vectors") {
    const std::vector<ModeChannel> modes{{{0.0, 1.0}, mode(739.9, 320, 0)}};
    const auto p = effective_angle(emitter, modes, li, 0.0);
    CHECK(p.angle == doctest::Approx(30).epsilon(1e-9));
    CHECK(p.angle == doctest::Approx(argmax_angle(emitter, modes, li, 0.0)).epsilon(1e-4));
  }
  SUBCASE("brute-force argmax agrees off resonance") {
    const std::vector<ModeChannel> modes{{{0.0, 3.0}, mode(739.9, 320, 0)}, {{-45.0, 5.0}, mode(742.0, 430, -45)}};
    for (double d : {-4.0, -1.3, 0.0, 0.7, 2.2}) {
      CAPTURE(d);
      CHECK(std::abs(effective_angle(emitter, modes, li, d).angle - argmax_angle(emitter, modes, li, d)) < 2e-3);
    }
  }
  SUBCASE("continuous in detuning and scale invariant") {
    const std::vector<ModeChannel> modes{{{-45.0, 20.0}, mode(739.9, 320, -45)}};
    const double step = mode(739.9, 320, -45).linewidth() / 100;
    std::vector<double> d;
    for (double x = -15; x <= 15; x += step) d.push_back(x);
    const auto sweep = polarization_mixture(emitter, modes, li, d);
    std::vector<double> angles;
    for (const auto& p : sweep) angles.push_back(p.angle);
    const auto u = unwrap_axis_angles(angles);
    for (std::size_t i = 1; i < u.size(); ++i) CHECK(std::abs(u[i] - u[i - 1]) < 1.0);
    CHECK(std::abs(u.front() - argmax_angle(emitter, modes, li, d.front())) < 2e-3);

    PolarizedChannel e2 = emitter;
    e2.weight *= 7.5;
    std::vector<ModeChannel> m2 = modes;
    m2[0].channel.weight *= 7.5;
    for (double x : {-2.0, 0.0, 0.4, 3.0})
      CHECK(effective_angle(e2, m2, li, x).angle == doctest::Approx(effective_angle(emitter, modes, li, x).angle));
  }
  SUBCASE("degenerate patterns") {
    const std::vector<ModeChannel> none;
    CHECK_THROWS_AS(effective_angle(emitter, none, li, 0.0), DomainError);
    const std::vector<ModeChannel> zero{{{0.0, 0.0}, mode(739.9, 320, 0)}};
    CHECK_THROWS_AS(effective_angle({60, 0.0}, zero, li, 0.0), DomainError);
    const std::vector<ModeChannel> crossed{{{-30.0, 1.0}, mode(739.9, 320, -30)}};
    CHECK_THROWS_AS(effective_angle(emitter, crossed, li, 0.0), DomainError);  // 60 and -30 cancel
    CHECK_FALSE(PolarizedChannel::violations({0, -1}).empty());
  }
  SUBCASE("axis unwrapping") {
    const std::vector<double> a{80, 89, -88, -80, 85};
    const auto u = unwrap_axis_angles(a);
    CHECK(u[2] == doctest::Approx(92));
    CHECK(u[3] == doctest::Approx(100));
    CHECK(u[4] == doctest::Approx(85));
  }
}
