#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fiberlab/error.hpp"
#include "fiberlab/fft.hpp"
#include "fiberlab/rng.hpp"
#include "fiberlab/signal_io.hpp"
#include "fiberlab/signals.hpp"

#include <bit>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

using namespace fiberlab;
using namespace std::complex_literals;

namespace {

// Continuous root-raised-cosine impulse response with unit DC gain, times T.
double rrc_time(double x, double beta) {
  const double pi = std::numbers::pi;
  if (std::abs(x) < 1e-12) return 1.0 - beta + 4.0 * beta / pi;
  if (beta > 0.0 && std::abs(std::abs(x) - 1.0 / (4.0 * beta)) < 1e-12) {
    return beta / std::sqrt(2.0) *
           ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
  }
  const double num = std::sin(pi * x * (1.0 - beta)) + 4.0 * beta * x * std::cos(pi * x * (1.0 + beta));
  const double den = pi * x * (1.0 - std::pow(4.0 * beta * x, 2));
  return num / den;
}

// Circular taps: the continuous pulse summed over periods of the window.
Eigen::VectorXd periodic_taps(Eigen::Index n, int sps, double beta) {
  Eigen::VectorXd taps(n);
  const double period = static_cast<double>(n) / sps;  // in symbols
  for (Eigen::Index j = 0; j < n; ++j) {
    const double x = static_cast<double>(j <= n / 2 ? j : j - n) / sps;
    double acc = 0.0;
    for (int m = -4000; m <= 4000; ++m) acc += rrc_time(x + m * period, beta);
    taps[j] = acc;
  }
  return taps;
}

// Direct O(n^2) circular convolution of slot-centre impulses with the taps.
Eigen::VectorXcd direct_shape(const Eigen::VectorXcd& symbols, const TimeGrid& g, const Eigen::VectorXd& taps) {
  const Eigen::Index n = g.sample_count();
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n);
  for (Eigen::Index k = 0; k < symbols.size(); ++k) {
    const Eigen::Index c = symbol_center(g, k);
    for (Eigen::Index j = 0; j < n; ++j) out[j] += symbols[k] * taps[((j - c) % n + n) % n];
  }
  return out;
}

Eigen::VectorXcd random_symbols(Eigen::Index n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Eigen::VectorXcd s(n);
  for (auto& v : s) v = {standard_normal(rng), standard_normal(rng)};
  return s;
}

}  // namespace

TEST_CASE("time grid derived quantities and validation") {
  const TimeGrid g{16, 14e9, 808};
  CHECK(g.sample_count() == 12928);
  CHECK(g.sample_period() == doctest::Approx(1.0 / 224e9).epsilon(1e-15));
  CHECK_NOTHROW(g.validate());
  CHECK_THROWS_AS((TimeGrid{1, 14e9, 8}.validate()), ConfigError);
  CHECK_THROWS_AS((TimeGrid{3, 14e9, 3}.validate()), ConfigError);  // odd sample count
  CHECK_THROWS_AS((TimeGrid{16, 0.0, 8}.validate()), ConfigError);
}

TEST_CASE("signal invariants reject bad lengths and non-finite samples") {
  const TimeGrid g{2, 1e9, 4};
  ComplexSignal s(g);
  CHECK_NOTHROW(s.validate());
  s.samples[3] = {std::nan(""), 0.0};
  CHECK_THROWS_AS(s.validate(), DivergenceError);
  CHECK_THROWS_AS(ComplexSignal(g, Eigen::VectorXcd::Zero(7)), DimensionError);
}

TEST_CASE("map_bits reference points") {
  const double r10 = std::sqrt(10.0);
  const std::uint8_t q0[] = {0, 0, 0, 0};
  CHECK(std::abs(map_bits(q0, ModulationFormat::qam16)[0] - std::complex<double>(-3, -3) / r10) < 1e-15);
  const std::uint8_t q1[] = {1, 0, 0, 1};  // I: 10 -> +3, Q: 01 -> -1
  CHECK(std::abs(map_bits(q1, ModulationFormat::qam16)[0] - std::complex<double>(3, -1) / r10) < 1e-15);
  const std::uint8_t q2[] = {1, 1, 1, 1};
  CHECK(std::abs(map_bits(q2, ModulationFormat::qam16)[0] - std::complex<double>(1, 1) / r10) < 1e-15);

  const std::uint8_t p0[] = {0, 0};
  CHECK(std::abs(map_bits(p0, ModulationFormat::qpsk)[0] - std::complex<double>(1, 1) / std::sqrt(2.0)) < 1e-15);
  const std::uint8_t p1[] = {1, 0};
  CHECK(std::abs(map_bits(p1, ModulationFormat::qpsk)[0] - std::complex<double>(-1, 1) / std::sqrt(2.0)) < 1e-15);

  // on-off keying: 0 is dark; the lit level carries unit mean energy
  const std::uint8_t o[] = {0, 1};
  const auto ook = map_bits(o, ModulationFormat::ook);
  CHECK(ook[0] == std::complex<double>(0.0, 0.0));
  CHECK(ook[1].imag() == 0.0);
  CHECK(ook[1].real() > 0.0);

  const std::uint8_t bad[] = {0, 1, 1};
  CHECK_THROWS_AS(map_bits(bad, ModulationFormat::qam16), DimensionError);
}

TEST_CASE("gray labelling: neighbours differ in one bit") {
  const auto pts = constellation(ModulationFormat::qam16);
  const double step = 2.0 / std::sqrt(10.0);
  int pairs = 0;
  for (int a = 0; a < 16; ++a) {
    for (int b = a + 1; b < 16; ++b) {
      if (std::abs(std::abs(pts[a] - pts[b]) - step) < 1e-12) {
        CHECK(std::popcount(static_cast<unsigned>(a ^ b)) == 1);
        ++pairs;
      }
    }
  }
  CHECK(pairs == 24);
}

TEST_CASE("constellations have unit mean energy") {
  for (auto fmt : {ModulationFormat::ook, ModulationFormat::qpsk, ModulationFormat::qam16}) {
    const auto pts = constellation(fmt);
    CHECK(pts.size() == (1 << bits_per_symbol(fmt)));
    CHECK(std::abs(pts.squaredNorm() / static_cast<double>(pts.size()) - 1.0) < 1e-12);
    CHECK(parse_modulation_format(to_string(fmt)) == fmt);
  }
  CHECK_THROWS_AS(parse_modulation_format("qam64"), ConfigError);
}

TEST_CASE("pulse shaping matches direct circular convolution with the closed-form pulse") {
  const TimeGrid g{16, 14e9, 64};
  const double beta = 0.1;
  const Eigen::VectorXd taps = periodic_taps(g.sample_count(), g.samples_per_symbol, beta);

  SUBCASE("single unit symbol gives the pulse centred on its slot") {
    Eigen::VectorXcd sym = Eigen::VectorXcd::Zero(64);
    sym[10] = 1.0;
    const auto shaped = shape_pulses(sym, g, beta);
    const auto ref = direct_shape(sym, g, taps);
    CHECK((shaped.samples - ref).cwiseAbs().maxCoeff() < 1e-9);
    Eigen::Index peak = 0;
    shaped.samples.cwiseAbs().maxCoeff(&peak);
    CHECK(peak == symbol_center(g, 10));
  }
  SUBCASE("random symbols") {
    const auto sym = random_symbols(64, 4);
    const auto ref = direct_shape(sym, g, taps);
    CHECK((shape_pulses(sym, g, beta).samples - ref).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("constant train: slot centres equal c times the tap sum at symbol spacing") {
    const std::complex<double> c{0.3, -0.7};
    const Eigen::VectorXcd sym = Eigen::VectorXcd::Constant(64, c);
    double tap_sum = 0.0;
    for (Eigen::Index k = 0; k < 64; ++k) tap_sum += taps[k * g.samples_per_symbol];
    const auto shaped = shape_pulses(sym, g, beta);
    for (std::int64_t k = 0; k < 64; ++k) CHECK(std::abs(shaped.samples[symbol_center(g, k)] - c * tap_sum) < 1e-9);
  }
  SUBCASE("all-zero symbols") {
    CHECK(shape_pulses(Eigen::VectorXcd::Zero(64), g, beta).samples.isZero(0.0));
  }
}

TEST_CASE("pulse shaping is linear") {
  const TimeGrid g{8, 14e9, 128};
  const auto x = random_symbols(128, 1), y = random_symbols(128, 2);
  const std::complex<double> a{1.5, -0.25}, b{-0.75, 2.0};
  const auto lhs = shape_pulses(a * x + b * y, g, 0.1).samples;
  const auto rhs = a * shape_pulses(x, g, 0.1).samples + b * shape_pulses(y, g, 0.1).samples;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("matched filtering at slot centres recovers the symbols") {
  const TimeGrid g{16, 14e9, 128};
  const auto sym = random_symbols(128, 9);
  const auto shaped = shape_pulses(sym, g, 0.1);
  // receive filter H_rrc applied in frequency
  const Eigen::VectorXd h = rrc_response(g.sample_count(), g.samples_per_symbol, 0.1);
  Eigen::VectorXcd f, back;
  fft_forward(shaped.samples, f);
  f.array() *= h.array();
  fft_inverse(f, back);
  for (std::int64_t k = 0; k < 128; ++k) CHECK(std::abs(back[symbol_center(g, k)] - sym[k]) < 1e-12);
}

TEST_CASE("rrc response shape") {
  const auto h = rrc_response(1024, 16, 0.1);
  CHECK(h[0] == 1.0);
  // passband (|f| <= 0.45 Rs) is flat, stopband (|f| >= 0.55 Rs) is zero; Rs sits at bin 64
  CHECK(h[28] == 1.0);
  CHECK(h[1024 - 28] == 1.0);
  CHECK(h[36] == 0.0);
  CHECK(h[512] == 0.0);
  // power-complementary about the half-rate point
  CHECK(h[30] * h[30] + h[34] * h[34] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("launch power is exact and idempotent") {
  const TimeGrid g{16, 14e9, 64};
  const auto sig = shape_pulses(random_symbols(64, 3), g, 0.1);
  for (double p : {-3.0, 0.0, 3.0, 10.0}) {
    const auto s = set_launch_power(sig, p);
    CHECK(std::abs(mean_power(s) / dbm_to_watts(p) - 1.0) < 1e-12);
    const auto twice = set_launch_power(s, p);
    CHECK((twice.samples - s.samples).cwiseAbs().maxCoeff() <= 1e-15 * s.samples.cwiseAbs().maxCoeff());
  }
  CHECK(mean_power(set_launch_power(sig, 0.0)) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(mean_power(set_launch_power(sig, 3.0)) == doctest::Approx(std::pow(10.0, 0.3) * 1e-3).epsilon(1e-12));
  CHECK_THROWS_AS(set_launch_power(ComplexSignal(g), 0.0), ConfigError);
  CHECK(watts_to_dbm(dbm_to_watts(-3.0)) == doctest::Approx(-3.0).epsilon(1e-14));
}

TEST_CASE("mean and peak power examples") {
  const TimeGrid g2{2, 1e9, 1};
  CHECK(mean_power(ComplexSignal(g2)) == 0.0);
  CHECK(mean_power(ComplexSignal(g2, Eigen::Vector2cd(1.0, std::sqrt(3.0) * 1i))) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(peak_power(ComplexSignal(g2, Eigen::Vector2cd(1.0, std::sqrt(3.0) * 1i))) == doctest::Approx(3.0).epsilon(1e-15));
  const TimeGrid g{4, 1e9, 8};
  const double a = 0.37;
  CHECK(mean_power(ComplexSignal(g, Eigen::VectorXcd::Constant(32, a * std::exp(0.3i)))) ==
        doctest::Approx(a * a).epsilon(1e-15));
}

TEST_CASE("OSNR noise loading") {
  const TimeGrid g{16, 14e9, 64};
  const auto sig = set_launch_power(shape_pulses(random_symbols(64, 5), g, 0.1), 0.0);

  SUBCASE("disabled sentinel leaves the signal untouched") { CHECK(load_osnr_noise(sig, kNoiseDisabled, 1) == sig); }
  SUBCASE("same seed is bit-identical, different seed differs") {
    CHECK(load_osnr_noise(sig, 20.0, 11) == load_osnr_noise(sig, 20.0, 11));
    CHECK(!(load_osnr_noise(sig, 20.0, 11) == load_osnr_noise(sig, 20.0, 12)));
  }
  SUBCASE("noise power formula") {
    const double p = osnr_noise_power(1e-3, 30.0, 224e9);
    CHECK(p == doctest::Approx(1e-3 / 1000.0 * 224e9 / 12.5e9).epsilon(1e-14));
  }
  SUBCASE("Monte Carlo power within 3% and zero mean over 10^4 realizations") {
    const double target = osnr_noise_power(mean_power(sig), 25.0, g.sample_rate());
    const int trials = 10000;
    double acc = 0.0;
    std::complex<double> mean = 0.0;
    for (int t = 0; t < trials; ++t) {
      const auto noisy = load_osnr_noise(sig, 25.0, static_cast<std::uint64_t>(t));
      const Eigen::VectorXcd n = noisy.samples - sig.samples;
      acc += n.squaredNorm() / static_cast<double>(n.size());
      mean += n.mean();
    }
    const double measured = acc / trials;
    CHECK(std::abs(measured / target - 1.0) < 0.03);
    // 3 sigma bound on the grand mean of trials * n samples
    const double sigma = std::sqrt(target / (static_cast<double>(trials) * g.sample_count()));
    CHECK(std::abs(mean.real() / trials) < 3.0 * sigma);
    CHECK(std::abs(mean.imag() / trials) < 3.0 * sigma);
  }
}

TEST_CASE("random bits are deterministic and balanced") {
  const auto a = random_bits(100000, 42), b = random_bits(100000, 42), c = random_bits(100000, 43);
  CHECK(a == b);
  CHECK(a != c);
  double ones = 0;
  for (auto v : a) {
    CHECK(v <= 1);
    ones += v;
  }
  CHECK(std::abs(ones / 100000.0 - 0.5) < 3.0 * 0.5 / std::sqrt(100000.0));
}

TEST_CASE("FSIG and CSV round trips") {
  const TimeGrid g{4, 14e9, 6};
  const auto sig = ComplexSignal(g, random_symbols(24, 8));
  const auto bytes = encode_fsig(sig);
  CHECK(bytes.size() == 4 + 4 + 8 + 4 + 8 + 24 * 16);
  CHECK(decode_fsig(bytes) == sig);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_fsig(truncated), CorruptionError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_fsig(bad_magic), CorruptionError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_fsig(bad_version), CorruptionError);

  const auto dir = std::filesystem::temp_directory_path() / "fiberlab_test_signals";
  std::filesystem::create_directories(dir);
  write_fsig(dir / "a.fsig", sig);
  CHECK(read_fsig(dir / "a.fsig") == sig);
  CHECK_THROWS_AS(read_fsig(dir / "missing.fsig"), MissingArtifactError);

  const ComplexSignal seq[] = {sig, ComplexSignal(g)};
  write_fsig_sequence(dir / "seq.fsig", seq);
  const auto back = read_fsig_sequence(dir / "seq.fsig");
  REQUIRE(back.size() == 2);
  CHECK(back[0] == seq[0]);
  CHECK(back[1] == seq[1]);

  write_signal_csv(dir / "a.csv", sig);
  std::ifstream in(dir / "a.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "index,re,im");
  int rows = 0;
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    const auto idx = std::stoi(line.substr(0, c1));
    CHECK(idx == rows);
    CHECK(std::stod(line.substr(c1 + 1, c2 - c1 - 1)) == sig.samples[idx].real());
    CHECK(std::stod(line.substr(c2 + 1)) == sig.samples[idx].imag());
    ++rows;
  }
  CHECK(rows == 24);
  std::filesystem::remove_all(dir);
}
