#include <gtest/gtest.h>

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "phyto/fra.hpp"
#include "phyto/tissue_sim.hpp"
#include "test_support.hpp"

using namespace phyto;
using namespace phyto::fra;
using phyto::testing::dft_bin;
using phyto::testing::sine;

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

ResponseBuffer response_of(const ExcitationWaveform& w, std::vector<double> samples) {
  return {w.frequency_hz, w.sample_rate_hz, std::move(samples)};
}

}  // namespace

TEST(Excitation, OneCycle) {
  const auto w = synthesize_excitation(100, 0.1, 1000, 100000);
  ASSERT_EQ(w.samples.size(), 1000u);
  EXPECT_EQ(w.samples[0], 0.0);
  EXPECT_DOUBLE_EQ(w.samples[250], 0.1);
  EXPECT_DOUBLE_EQ(*std::max_element(w.samples.begin(), w.samples.end()), 0.1);
  EXPECT_EQ(period_stable_cycles(w.frequency_hz, 1000, w.sample_rate_hz), 1u);
}

TEST(Excitation, NotPeriodStable) { EXPECT_THROW(synthesize_excitation(100.5, 0.1, 1000, 100000), InputError); }

TEST(Excitation, LowestFrequencyBoundary) {
  const auto w = synthesize_excitation(8, 1.0, 4000, 32000);
  EXPECT_EQ(w.samples.size(), 4000u);
  EXPECT_NEAR(*std::max_element(w.samples.begin(), w.samples.end()), 1.0, 1e-15);
}

TEST(Excitation, RejectsOutOfRange) {
  EXPECT_THROW(synthesize_excitation(7.9, 0.1, 4000, 32000), InputError);
  EXPECT_THROW(synthesize_excitation(100, 1.5, 1000, 100000), InputError);
  EXPECT_THROW(synthesize_excitation(100, 0.005, 1000, 100000), InputError);
  EXPECT_THROW(synthesize_excitation(50000, 0.1, 1000, 100000), InputError);  // Nyquist
}

TEST(ExcitationProperty, PeakNeverExceedsAmplitude) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const std::size_t c = 1 + rng() % 100;
    const double amp = 0.01 + 0.99 * std::uniform_real_distribution<double>()(rng);
    const auto w = synthesize_excitation(double(c) * 1000.0, amp, 1024, 1024000.0);
    double peak = 0.0;
    for (double s : w.samples) peak = std::max(peak, std::abs(s));
    ASSERT_LE(peak, amp * (1 + 1e-15));
    if (1024 % (4 * c) == 0) ASSERT_NEAR(peak, amp, 1e-15);
  }
}

TEST(FraSinglePoint, ConstantIsOrthogonal) {
  const std::vector<double> x(64, 1.0);
  const auto r = fra_single_point(x, 1);
  EXPECT_NEAR(r.re, 0.0, 1e-15);
  EXPECT_NEAR(r.im, 0.0, 1e-15);
}

TEST(FraSinglePoint, CosineAndSine) {
  const std::size_t n = 64;
  std::vector<double> c(n), s(n);
  for (std::size_t k = 0; k < n; ++k) {
    c[k] = 2.0 * std::cos(2 * std::numbers::pi * double(k) / double(n));
    s[k] = 2.0 * std::sin(2 * std::numbers::pi * double(k) / double(n));
  }
  auto rc = fra_single_point(c, 1);
  auto oc = dft_bin(c, 1);
  EXPECT_NEAR(rc.re, 1.0, 1e-14);
  EXPECT_NEAR(rc.im, 0.0, 1e-14);
  EXPECT_NEAR(rc.re, double(oc.real()), 1e-15);
  auto rs = fra_single_point(s, 1);
  auto os = dft_bin(s, 1);
  EXPECT_NEAR(rs.re, 0.0, 1e-14);
  EXPECT_NEAR(rs.im, -1.0, 1e-14);
  EXPECT_NEAR(rs.im, double(os.imag()), 1e-15);
}

TEST(FraSinglePoint, RejectsBadBins) {
  const std::vector<double> x(16, 0.0);
  EXPECT_THROW(fra_single_point(x, 0), InputError);
  EXPECT_THROW(fra_single_point(x, 8), InputError);
  EXPECT_THROW(fra_single_point(std::vector<double>{}, 1), InputError);
}

TEST(FraSinglePointProperty, MatchesFftwBin) {
  const int n = 1024;
  std::vector<double> in(n);
  std::vector<fftw_complex> out(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t c = 1 + rng() % (n / 2 - 1);
    const auto x = sine(n, c, 0.01 + u(rng), 2 * std::numbers::pi * u(rng));
    std::copy(x.begin(), x.end(), in.begin());
    fftw_execute(plan);
    const std::complex<double> ref(out[c][0] / n, out[c][1] / n);
    const auto got = fra_single_point(x, c).value();
    ASSERT_LE(std::abs(got - ref) / std::abs(ref), 1e-12) << "c=" << c;
  }
  fftw_destroy_plan(plan);
}

TEST(FraSinglePointProperty, ParsevalBound) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(256);
    for (auto& v : x) v = g(rng);
    const std::size_t c = 1 + rng() % 127;
    const auto mp = magnitude_phase(fra_single_point(x, c));
    ASSERT_LE(mp.magnitude, rms(x) * std::sqrt(2.0));
  }
}

TEST(MagnitudePhase, Examples) {
  auto a = magnitude_phase({3, 4});
  EXPECT_DOUBLE_EQ(a.magnitude, 5.0);
  EXPECT_NEAR(*a.phase_deg, 53.13010235415598, 1e-12);
  auto b = magnitude_phase({1, 0});
  EXPECT_EQ(b.magnitude, 1.0);
  EXPECT_EQ(*b.phase_deg, 0.0);
  auto c = magnitude_phase({0, -1});
  EXPECT_EQ(*c.phase_deg, -90.0);
  EXPECT_FALSE(magnitude_phase({0, 0}).phase_deg);
  EXPECT_EQ(*magnitude_phase({-1, 0}).phase_deg, 180.0);
  EXPECT_EQ(*magnitude_phase({-1, -0.0}).phase_deg, 180.0);
}

TEST(Rms, Examples) {
  EXPECT_DOUBLE_EQ(rms(std::vector<double>(10, -3.0)), 3.0);
  EXPECT_NEAR(rms(sine(1024, 7, 2.0)), 2.0 / std::sqrt(2.0), 1e-14);
  EXPECT_EQ(rms(std::vector<double>(8, 0.0)), 0.0);
  EXPECT_THROW(rms(std::vector<double>{}), InputError);
}

TEST(RmsResistivity, Examples) {
  EXPECT_EQ(rms_resistivity(1.0, 0.5), 2.0);
  EXPECT_EQ(rms_resistivity(0.0, 1.0), 0.0);
  EXPECT_THROW(rms_resistivity(1.0, 0.0), OpenCircuitError);
}

TEST(RmsResistivity, PureResistorSimulation) {
  const auto w = synthesize_excitation(1000, 0.1, 1024, 1024000);
  const auto vi = sim::tissue_response(sim::TissueModel::resistor(10000), w, 1);
  EXPECT_NEAR(rms_resistivity(rms(w.samples), rms(vi.samples)), 10000.0, 1e-8);
}

TEST(LockinCorrelation, Examples) {
  const double a = std::sqrt(2.0);  // unit RMS
  const auto x = sine(1024, 5, a);
  EXPECT_NEAR(lockin_correlation(x, x), 1.0, 1e-14);
  EXPECT_NEAR(lockin_correlation(x, sine(1024, 5, a, std::numbers::pi / 2)), 0.0, 1e-14);
  EXPECT_NEAR(lockin_correlation(x, sine(1024, 5, a, std::numbers::pi)), -1.0, 1e-14);
  EXPECT_THROW(lockin_correlation(x, std::vector<double>(3)), InputError);
}

TEST(LockinCorrelationProperty, SymmetricAndBilinear) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(128), y(128), ax(128);
    const double a = 1.0 + std::abs(g(rng)) * 3;
    for (int k = 0; k < 128; ++k) {
      x[k] = g(rng);
      y[k] = g(rng);
      ax[k] = a * x[k];
    }
    ASSERT_DOUBLE_EQ(lockin_correlation(x, y), lockin_correlation(y, x));
    ASSERT_NEAR(lockin_correlation(ax, y), a * lockin_correlation(x, y), 1e-12);
  }
}

TEST(LockinPhase, Examples) {
  const double a = std::sqrt(2.0);
  const auto x = sine(1024, 5, a);
  auto in_phase = lockin_phase(lockin_correlation(x, x), rms(x), rms(x));
  EXPECT_NEAR(in_phase.p_c_deg, 0.0, 1e-5);
  const auto q = sine(1024, 5, a, std::numbers::pi / 2);
  EXPECT_NEAR(lockin_phase(lockin_correlation(x, q), rms(x), rms(q)).p_c_deg, 90.0, 1e-10);
}

TEST(LockinPhase, ThirtyDegreeOffsetAnyAmplitude) {
  for (double ax : {0.01, 0.5, 3.0}) {
    for (double ay : {0.02, 1.0, 7.0}) {
      const auto x = sine(1024, 9, ax);
      const auto y = sine(1024, 9, ay, 30.0 / kDeg);
      // Brute-force evaluation of the estimator definition.
      long double c = 0, sx = 0, sy = 0;
      for (int k = 0; k < 1024; ++k) {
        c += (long double)x[k] * y[k];
        sx += (long double)x[k] * x[k];
        sy += (long double)y[k] * y[k];
      }
      const double brute = double(std::acos(c / std::sqrt(sx * sy)) * 180.0L / std::numbers::pi_v<long double>);
      const double got = lockin_phase(lockin_correlation(x, y), rms(x), rms(y)).p_c_deg;
      EXPECT_NEAR(got, 30.0, 0.01);
      EXPECT_NEAR(got, brute, 1e-9);
    }
  }
}

TEST(LockinPhaseProperty, InvariantUnderRescaling) {
  const auto x = sine(512, 3, 0.3);
  const auto y = sine(512, 3, 0.8, 1.1);
  const double base = lockin_phase(lockin_correlation(x, y), rms(x), rms(y)).p_c_deg;
  for (double s : {0.001, 0.5, 2.0, 1000.0}) {
    std::vector<double> ys(y);
    for (auto& v : ys) v *= s;
    ASSERT_NEAR(lockin_phase(lockin_correlation(x, ys), rms(x), rms(ys)).p_c_deg, base, 1e-9);
  }
}

TEST(LockinPhase, ClampWarning) {
  EXPECT_NEAR(lockin_phase(1.0 + 1e-12, 1.0, 1.0).p_c_deg, 0.0, 0.0);
  EXPECT_GT(lockin_phase(1.5, 1.0, 1.0).clamp_excess, kClampWarningExcess);
}

TEST(AnalyzePair, ResistorTissue) {
  const auto w = synthesize_excitation(500, 0.1, 1024, 16000);
  const auto a = analyze_pair(w, sim::tissue_response(sim::TissueModel::resistor(1000), w, 1));
  EXPECT_NEAR(a.phase_deg, 0.0, 1e-9);
  EXPECT_NEAR(a.p_c_deg, 0.0, 1e-4);
  EXPECT_NEAR(a.m_rms, a.magnitude, 1e-9 * a.magnitude);
  EXPECT_NEAR(a.magnitude, 1000.0, 1e-8);
  EXPECT_NEAR(a.re, 1000.0, 1e-8);
  EXPECT_GE(a.p_c_deg, 0.0);
  EXPECT_LE(a.p_c_deg, 180.0);
  EXPECT_TRUE(a.warnings.empty());
}

TEST(AnalyzePair, SeriesRcApproachesMinus90AtLowFrequency) {
  const sim::TissueModel rc{10.0, 1e12, 1e-6, 0.0};
  const auto p = snap_frequency(8.0, 1024, 16e6, 16.0);
  const auto w = synthesize_excitation(p.frequency_hz, 0.1, 1024, p.sample_rate_hz);
  const auto a = analyze_pair(w, sim::tissue_response(rc, w, 1));
  EXPECT_GT(std::abs(a.phase_deg), 89.9);
  EXPECT_NEAR(a.p_c_deg, std::abs(a.phase_deg), 0.01);
}

TEST(AnalyzePair, ZeroResponseIsOpenCircuit) {
  const auto w = synthesize_excitation(500, 0.1, 1024, 16000);
  EXPECT_THROW(analyze_pair(w, response_of(w, std::vector<double>(1024, 0.0))), OpenCircuitError);
}

TEST(AnalyzePair, TransimpedanceGainScalesMagnitude) {
  const auto w = synthesize_excitation(500, 0.1, 1024, 16000);
  const auto vi = sim::tissue_response(sim::TissueModel::resistor(100), w, 1);
  const auto a = analyze_pair(w, vi, 1.0);
  const auto b = analyze_pair(w, vi, 50.0);
  EXPECT_NEAR(b.magnitude, 50.0 * a.magnitude, 1e-9);
  EXPECT_NEAR(b.m_rms, 50.0 * a.m_rms, 1e-9);
  EXPECT_EQ(a.phase_deg, b.phase_deg);
}

TEST(AnalyzePairProperty, DeterministicAndInvariantsHold) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const sim::TissueModel m{10 + 1000 * u(rng), 100 + 1e5 * u(rng), 1e-9 + 1e-5 * u(rng), 1e-4 * u(rng)};
    const auto p = snap_frequency(8 * std::pow(3e5 / 8, u(rng)), 1024, 16e6, 16);
    const auto w = synthesize_excitation(p.frequency_hz, 0.1, 1024, p.sample_rate_hz);
    const auto vi = sim::tissue_response(m, w, t);
    const auto a = analyze_pair(w, vi);
    const auto b = analyze_pair(w, vi);
    ASSERT_EQ(a.re, b.re);
    ASSERT_EQ(a.p_c_deg, b.p_c_deg);
    ASSERT_DOUBLE_EQ(a.magnitude, std::hypot(a.re, a.im));
    ASSERT_GT(a.phase_deg, -180.0);
    ASSERT_LE(a.phase_deg, 180.0);
    ASSERT_GE(a.p_c_deg, 0.0);
    ASSERT_LE(a.p_c_deg, 180.0);
    ASSERT_GE(a.m_rms, 0.0);
  }
}

TEST(AnalyzePairProperty, NoiselessEquivalenceClaims) {
  // Pure harmonic steady state: RMS resistivity equals |Z| and the lock-in
  // phase equals |P|.
  const sim::TissueModel m{1000, 10000, 1e-6, 0.0};
  for (double f : {8.0, 50.0, 500.0, 5000.0, 50000.0, 300000.0}) {
    const auto p = snap_frequency(f, 1024, 16e6, 16);
    const auto w = synthesize_excitation(p.frequency_hz, 0.1, 1024, p.sample_rate_hz);
    const auto a = analyze_pair(w, sim::tissue_response(m, w, 1));
    EXPECT_NEAR(a.m_rms, a.magnitude, 1e-6 * a.magnitude) << f;
    EXPECT_NEAR(a.p_c_deg, std::abs(a.phase_deg), 1e-6) << f;
  }
}

TEST(Sweep, SnapKeepsWholeCycles) {
  for (double f : {8.0, 13.7, 499.9, 1234.5, 299999.0, 650000.0}) {
    const auto p = snap_frequency(f, 1024, 16e6, 16);
    EXPECT_TRUE(period_stable_cycles(p.frequency_hz, 1024, p.sample_rate_hz)) << f;
    EXPECT_LT(2 * p.cycles, 1024u);
    EXPECT_GE(p.frequency_hz, kMinFrequencyHz);
    EXPECT_LE(p.frequency_hz, kMaxFrequencyHz);
    EXPECT_DOUBLE_EQ(p.snap_error, (p.frequency_hz - f) / f);
    const double divider = 16e6 / p.sample_rate_hz;
    EXPECT_NEAR(divider, std::round(divider), 1e-9);
  }
}

TEST(Sweep, LinearTwoPointsAreEndpoints) {
  SweepSpec s;
  s.f_min_hz = 100;
  s.f_max_hz = 1000;
  s.points = 2;
  s.spacing = Spacing::linear;
  const auto plan = plan_sweep(s);
  ASSERT_EQ(plan.size(), 2u);
  EXPECT_EQ(plan[0].requested_hz, 100.0);
  EXPECT_EQ(plan[1].requested_hz, 1000.0);
}

TEST(Sweep, InvertedBoundsRejected) {
  SweepSpec s;
  s.f_min_hz = 1000;
  s.f_max_hz = 100;
  EXPECT_THROW(plan_sweep(s), ConfigError);
  s.f_max_hz = 1000;
  EXPECT_THROW(plan_sweep(s), ConfigError);
}

TEST(Sweep, RecoversAnalyticRandles) {
  const sim::TissueModel m{};
  SweepSpec s;
  s.points = 20;
  const auto r = run_sweep(s, [&](const ExcitationWaveform& w) { return sim::tissue_response(m, w, 1); });
  ASSERT_TRUE(r.complete());
  for (const auto& a : r.points) {
    const auto z = sim::analytic_impedance(m, a.frequency_hz);
    EXPECT_NEAR(a.magnitude, std::abs(z), 1e-3 * std::abs(z)) << a.frequency_hz;
    EXPECT_NEAR(a.phase_deg, std::arg(z) * kDeg, 0.1) << a.frequency_hz;
  }
}

TEST(Sweep, SourceFailureKeepsPartialResults) {
  SweepSpec s;
  s.points = 10;
  int calls = 0;
  const auto r = run_sweep(s, [&](const ExcitationWaveform& w) {
    if (++calls == 4) return ResponseBuffer{w.frequency_hz, w.sample_rate_hz, std::vector<double>(w.samples.size())};
    return sim::tissue_response(sim::TissueModel{}, w, 1);
  });
  EXPECT_FALSE(r.complete());
  EXPECT_EQ(r.points.size(), 3u);
  ASSERT_TRUE(r.error);
}

TEST(Sweep, CsvHasHeaderAndOneLinePerPoint) {
  SweepSpec s;
  s.points = 5;
  const auto r = run_sweep(s, [](const ExcitationWaveform& w) { return sim::tissue_response(sim::TissueModel{}, w, 1); });
  std::ostringstream out;
  write_sweep_csv(out, r.points);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kSweepCsvHeader);
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9);
  }
  EXPECT_EQ(n, 5);
}

TEST(Scope, PureSineHasOnlyFundamental) {
  const auto x = sine(1024, 8, 1.0);
  const auto s = scope_spectrum(x, 8, 10);
  EXPECT_NEAR(s.harmonics[0].magnitude, 1.0, 1e-12);
  for (std::size_t h = 2; h <= 10; ++h) EXPECT_LT(s.ratio(h), 1e-9);
}

TEST(Scope, TenPercentThirdHarmonic) {
  auto x = sine(1024, 8, 1.0);
  const auto h3 = sine(1024, 24, 0.1, 0.4);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] += h3[k];
  const auto s = scope_spectrum(x, 8, 5);
  EXPECT_NEAR(s.ratio(3), 0.1, 1e-6);
  const double oracle = double(std::abs(dft_bin(x, 24)) / std::abs(dft_bin(x, 8)));
  EXPECT_NEAR(s.ratio(3), oracle, 1e-12);
}

TEST(Scope, ClippedSineHasOddHarmonics) {
  auto x = sine(1024, 4, 1.0);
  for (auto& v : x) v = std::clamp(v, -0.7, 0.7);
  const auto s = scope_spectrum(x, 4, 7);
  for (std::size_t h : {3u, 5u, 7u}) {
    EXPECT_GT(s.ratio(h), 1e-3) << h;
    EXPECT_NEAR(s.ratio(h), double(std::abs(dft_bin(x, 4 * h)) / std::abs(dft_bin(x, 4))), 1e-12);
  }
  for (std::size_t h : {2u, 4u, 6u}) EXPECT_LT(s.ratio(h), 1e-12) << h;
  EXPECT_GT(s.thd(), 0.0);
}

TEST(Scope, TruncatesAtNyquist) {
  const auto s = scope_spectrum(sine(64, 10, 1.0), 10, 5);
  EXPECT_TRUE(s.truncated);
  EXPECT_EQ(s.harmonics.size(), 3u);
  EXPECT_FALSE(s.warnings.empty());
}
