#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fiberlab/error.hpp"
#include "fiberlab/receiver.hpp"
#include "fiberlab/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

using namespace fiberlab;

namespace {

struct Tx {
  std::vector<std::uint8_t> bits;
  Eigen::VectorXcd symbols;
  ComplexSignal signal;
};

Tx qam_tx(std::int64_t n_symbols, std::uint64_t seed, double p_dbm = 0.0, int sps = 16) {
  Tx tx;
  tx.bits = random_bits(static_cast<std::size_t>(n_symbols) * 4, seed);
  tx.symbols = map_bits(tx.bits, ModulationFormat::qam16);
  tx.signal = set_launch_power(shape_pulses(tx.symbols, TimeGrid{sps, 14e9, n_symbols}, 0.1), p_dbm);
  return tx;
}

EdfaSpec noiseless_edfa() {
  EdfaSpec e;
  e.noise_figure_db = kNoiseFigureDisabled;
  return e;
}

double rms(const Eigen::VectorXcd& v) { return std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }

}  // namespace

TEST_CASE("DBP inverts a noiseless four-span link") {
  const auto tx = qam_tx(64, 1, 0.0);
  const auto cfg = LinkConfig::uniform(4, default_fiber(), noiseless_edfa());
  const auto rx = run_link(tx.signal, cfg, false, 1).output;
  const auto back = dbp(rx, cfg);
  const double err = rms(back.samples - tx.signal.samples);
  MESSAGE("RMS error " << err << " (signal RMS " << std::sqrt(mean_power(tx.signal)) << ")");
  CHECK(err < 1e-6);
  CHECK(err / std::sqrt(mean_power(tx.signal)) < 1e-6);
}

TEST_CASE("DBP of a linear link is exact dispersion compensation") {
  FiberParams f = default_fiber();
  f.gamma_per_w_km = 0.0;
  const auto tx = qam_tx(64, 2, 3.0);
  const auto cfg = LinkConfig::uniform(2, f, noiseless_edfa());
  const auto back = dbp(run_link(tx.signal, cfg, false, 1).output, cfg, 1);
  CHECK(rms(back.samples - tx.signal.samples) < 1e-9);
}

TEST_CASE("DBP of an empty link is the identity") {
  const auto tx = qam_tx(16, 3);
  CHECK(dbp(tx.signal, LinkConfig{}) == tx.signal);
  CHECK_THROWS_AS(dbp(tx.signal, LinkConfig::uniform(1, default_fiber(), EdfaSpec{}), 0), ConfigError);
}

TEST_CASE("back-to-back demodulation recovers the symbols") {
  for (auto fmt : {ModulationFormat::qam16, ModulationFormat::qpsk, ModulationFormat::ook}) {
    const auto bits = random_bits(256 * static_cast<std::size_t>(bits_per_symbol(fmt)), 4);
    const auto sym = map_bits(bits, fmt);
    const auto sig = shape_pulses(sym, TimeGrid{16, 14e9, 256}, 0.1);
    const auto d = demodulate(sig, fmt, 0.1);
    CHECK((d.symbols - sym).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((d.decided - sym).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero signal decides the minimum-energy point") {
  const auto pts = constellation(ModulationFormat::qam16);
  Eigen::Index lowest = 0;
  pts.cwiseAbs2().minCoeff(&lowest);
  const auto d = demodulate(ComplexSignal(TimeGrid{16, 14e9, 8}), ModulationFormat::qam16, 0.1);
  for (int label : d.decisions) CHECK(label == lowest);
  CHECK(demodulate(ComplexSignal(TimeGrid{16, 14e9, 8}), ModulationFormat::ook, 0.1).decisions[0] == 0);
}

TEST_CASE("normalized decisions ignore the global power") {
  const auto tx = qam_tx(128, 5, -3.0);
  const auto a = demodulate(tx.signal, ModulationFormat::qam16, 0.1, true);
  ComplexSignal louder = tx.signal;
  louder.samples *= 37.5;
  const auto b = demodulate(louder, ModulationFormat::qam16, 0.1, true);
  CHECK(a.decisions == b.decisions);
}

TEST_CASE("per-symbol MSE closed forms") {
  const auto tx = qam_tx(32, 6);
  const FramingSpec spec;
  const auto& ref = tx.signal;
  CHECK(mse_per_symbol(ref, ref, spec).isZero(0.0));

  ComplexSignal shifted = ref;
  const double c = 0.01;
  shifted.samples.array() += c;
  const auto mse = mse_per_symbol(shifted, ref, spec, 1.0);
  CHECK(mse.size() == 32);
  CHECK((mse.array() - c * c / 2.0).abs().maxCoeff() < 1e-15);
  // default normalization by the reference power
  const auto mse_p = mse_per_symbol(shifted, ref, spec);
  CHECK((mse_p.array() - c * c / 2.0 / mean_power(ref)).abs().maxCoeff() < 1e-12);

  ComplexSignal wrong(TimeGrid{8, 14e9, 64});
  CHECK_THROWS_AS(mse_per_symbol(wrong, ref, spec), DimensionError);
}

TEST_CASE("per-symbol MSE is local: permuting symbols permutes the array") {
  const auto a = qam_tx(16, 7), b = qam_tx(16, 8);
  const FramingSpec spec{4, 2};
  const auto base = mse_per_symbol(a.signal, b.signal, spec, 1e-3);
  const int sps = 16;
  const int perm[16] = {3, 0, 15, 7, 1, 2, 4, 6, 5, 8, 14, 9, 10, 13, 11, 12};
  ComplexSignal pa = a.signal, pb = b.signal;
  for (int k = 0; k < 16; ++k) {
    pa.samples.segment(k * sps, sps) = a.signal.samples.segment(perm[k] * sps, sps);
    pb.samples.segment(k * sps, sps) = b.signal.samples.segment(perm[k] * sps, sps);
  }
  const auto permuted = mse_per_symbol(pa, pb, spec, 1e-3);
  for (int k = 0; k < 16; ++k) CHECK(permuted[k] == base[perm[k]]);
}

TEST_CASE("fraction_below counts strict inequalities") {
  Eigen::VectorXd v(8);
  v << 1e-5, 4e-4, 5e-4, 6e-4, 0.0, 1.0, 4.99e-4, 2e-3;
  CHECK(fraction_below(v, 5e-4) == 4.0 / 8.0);
  CHECK(fraction_below(v, 0.0) == 0.0);
  CHECK(fraction_below(v, 10.0) == 1.0);
  CHECK(fraction_below(Eigen::VectorXd(), 1.0) == 0.0);
  MetricsReport r;
  r.mse_per_symbol = v;
  CHECK(r.fraction_below(5e-4) == 0.5);
}

TEST_CASE("EVM follows the OSNR relation back to back") {
  // matched-filter noise bandwidth is the symbol rate: EVM^2 = Rs / (B_ref OSNR)
  const double rs = 14e9;
  for (double osnr : {20.0, 25.0, 30.0}) {
    double evm2 = 0.0;
    const int runs = 10;
    for (int r = 0; r < runs; ++r) {
      const auto tx = qam_tx(1024, 100 + static_cast<std::uint64_t>(r));
      const auto noisy = load_osnr_noise(tx.signal, osnr, 500 + static_cast<std::uint64_t>(r));
      const auto m = compute_metrics(noisy, tx.bits, ModulationFormat::qam16, 0.1, FramingSpec{});
      evm2 += std::pow(m.evm_percent / 100.0, 2);
      if (osnr >= 25.0) CHECK(m.symbol_errors == 0);
    }
    const double measured_db = 10.0 * std::log10(evm2 / runs);
    const double expected_db = 10.0 * std::log10(rs / (kOsnrReferenceBandwidth * std::pow(10.0, osnr / 10.0)));
    MESSAGE("OSNR " << osnr << " dB: EVM^2 " << measured_db << " dB, expected " << expected_db << " dB");
    CHECK(std::abs(measured_db - expected_db) < 0.5);
  }
}

TEST_CASE("metrics count symbol and bit errors against the transmitted bits") {
  const auto tx = qam_tx(64, 9);
  auto bits = tx.bits;
  auto m = compute_metrics(tx.signal, bits, ModulationFormat::qam16, 0.1, FramingSpec{}, &tx.signal);
  CHECK(m.symbol_errors == 0);
  CHECK(m.bit_errors == 0);
  CHECK(m.evm_percent < 1e-9);
  CHECK(m.mse_per_symbol.isZero(0.0));
  bits[0] ^= 1;  // symbol 0 now disagrees in one bit
  bits[9] ^= 1;  // symbol 2 in one bit
  bits[10] ^= 1;  // and another
  m = compute_metrics(tx.signal, bits, ModulationFormat::qam16, 0.1, FramingSpec{});
  CHECK(m.symbol_errors == 2);
  CHECK(m.bit_errors == 3);
  CHECK_THROWS_AS(compute_metrics(tx.signal, std::vector<std::uint8_t>(8), ModulationFormat::qam16, 0.1, FramingSpec{}),
                  DimensionError);
}

TEST_CASE("constellation export") {
  const auto tx = qam_tx(8192, 10, 0.0, 4);
  const auto d = demodulate(tx.signal, ModulationFormat::qam16, 0.1, true);
  const auto path = std::filesystem::temp_directory_path() / "fiberlab_test_receiver" / "const.csv";
  constellation_export(d.symbols, d.decided, tx.symbols, path);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "re,im,decided_re,decided_im,true_re,true_im");
  std::set<std::pair<double, double>> clusters;
  Eigen::Index rows = 0, errors = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    double v[6];
    for (double& x : v) {
      std::getline(ss, cell, ',');
      x = std::stod(cell);
    }
    CHECK(v[0] == d.symbols[rows].real());
    CHECK(v[1] == d.symbols[rows].imag());
    clusters.insert({v[2], v[3]});
    if (v[2] != v[4] || v[3] != v[5]) ++errors;
    ++rows;
  }
  CHECK(rows == 8192);
  CHECK(clusters.size() == 16);
  CHECK(errors == 0);
  std::filesystem::remove_all(path.parent_path());
}
