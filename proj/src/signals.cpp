#include "fiberlab/signals.hpp"

#include "fiberlab/error.hpp"
#include "fiberlab/fft.hpp"
#include "fiberlab/rng.hpp"

#include <numbers>
#include <string>

namespace fiberlab {

void TimeGrid::validate() const {
  if (samples_per_symbol < 2) {
    throw ConfigError("samples_per_symbol must be >= 2, got " + std::to_string(samples_per_symbol));
  }
  if (!(symbol_rate > 0.0) || !std::isfinite(symbol_rate)) {
    throw ConfigError("symbol_rate must be positive and finite");
  }
  if (n_symbols < 0) throw ConfigError("n_symbols must be non-negative");
  if (sample_count() % 2 != 0) {
    throw ConfigError("sample count must be even, got " + std::to_string(sample_count()));
  }
}

ComplexSignal::ComplexSignal(const TimeGrid& g, Eigen::VectorXcd s) : grid(g), samples(std::move(s)) {
  if (samples.size() != grid.sample_count()) {
    throw DimensionError("signal has " + std::to_string(samples.size()) + " samples, grid expects " +
                         std::to_string(grid.sample_count()));
  }
}

ComplexSignal::ComplexSignal(const TimeGrid& g)
    : grid(g), samples(Eigen::VectorXcd::Zero(g.sample_count())) {}

void ComplexSignal::validate() const {
  grid.validate();
  if (samples.size() != grid.sample_count()) {
    throw DimensionError("signal length does not match its grid");
  }
  if (!samples.allFinite()) throw DivergenceError("signal contains non-finite samples");
}

int bits_per_symbol(ModulationFormat fmt) noexcept {
  switch (fmt) {
    case ModulationFormat::ook: return 1;
    case ModulationFormat::qpsk: return 2;
    case ModulationFormat::qam16: return 4;
  }
  return 0;
}

std::string_view to_string(ModulationFormat fmt) noexcept {
  switch (fmt) {
    case ModulationFormat::ook: return "ook";
    case ModulationFormat::qpsk: return "qpsk";
    case ModulationFormat::qam16: return "qam16";
  }
  return "?";
}

ModulationFormat parse_modulation_format(std::string_view name) {
  if (name == "ook" || name == "OOK") return ModulationFormat::ook;
  if (name == "qpsk" || name == "QPSK") return ModulationFormat::qpsk;
  if (name == "qam16" || name == "16qam" || name == "QAM16" || name == "16QAM") {
    return ModulationFormat::qam16;
  }
  throw ConfigError("unknown modulation format '" + std::string(name) + "'");
}

namespace {

// Per-axis Gray code for 4-PAM: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
constexpr double kPam4Gray[4] = {-3.0, -1.0, 3.0, 1.0};

}  // namespace

Eigen::VectorXcd constellation(ModulationFormat fmt) {
  using C = std::complex<double>;
  switch (fmt) {
    case ModulationFormat::ook: {
      Eigen::VectorXcd pts(2);
      pts << C(0.0, 0.0), C(std::numbers::sqrt2, 0.0);
      return pts;
    }
    case ModulationFormat::qpsk: {
      Eigen::VectorXcd pts(4);
      const double a = 1.0 / std::numbers::sqrt2;
      for (int label = 0; label < 4; ++label) {
        const double i = (label & 2) ? -a : a;
        const double q = (label & 1) ? -a : a;
        pts[label] = C(i, q);
      }
      return pts;
    }
    case ModulationFormat::qam16: {
      Eigen::VectorXcd pts(16);
      const double scale = 1.0 / std::sqrt(10.0);
      for (int label = 0; label < 16; ++label) {
        pts[label] = C(kPam4Gray[label >> 2] * scale, kPam4Gray[label & 3] * scale);
      }
      return pts;
    }
  }
  return {};
}

Eigen::VectorXcd map_bits(std::span<const std::uint8_t> bits, ModulationFormat fmt) {
  const auto k = static_cast<std::size_t>(bits_per_symbol(fmt));
  if (bits.size() % k != 0) {
    throw DimensionError("bit count " + std::to_string(bits.size()) + " is not a multiple of " +
                         std::to_string(k) + " for " + std::string(to_string(fmt)));
  }
  const Eigen::VectorXcd points = constellation(fmt);
  Eigen::VectorXcd symbols(static_cast<Eigen::Index>(bits.size() / k));
  for (Eigen::Index s = 0; s < symbols.size(); ++s) {
    int label = 0;
    for (std::size_t b = 0; b < k; ++b) {
      label = (label << 1) | (bits[static_cast<std::size_t>(s) * k + b] ? 1 : 0);
    }
    symbols[s] = points[label];
  }
  return symbols;
}

Eigen::VectorXd rrc_response(Eigen::Index n, int samples_per_symbol, double rolloff) {
  if (!(rolloff >= 0.0 && rolloff <= 1.0)) throw ConfigError("rolloff must lie in [0, 1]");
  Eigen::VectorXd h(n);
  const double f_pass = 0.5 * (1.0 - rolloff);
  const double f_stop = 0.5 * (1.0 + rolloff);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index signed_k = (k <= (n - 1) / 2) ? k : k - n;
    // frequency in units of the symbol rate
    const double f = std::abs(static_cast<double>(signed_k) * samples_per_symbol / static_cast<double>(n));
    if (rolloff == 0.0) {
      h[k] = f < 0.5 ? 1.0 : (f == 0.5 ? std::sqrt(0.5) : 0.0);
    } else if (f <= f_pass) {
      h[k] = 1.0;
    } else if (f <= f_stop) {
      h[k] = std::sqrt(0.5 * (1.0 + std::cos(std::numbers::pi / rolloff * (f - f_pass))));
    } else {
      h[k] = 0.0;
    }
  }
  return h;
}

ComplexSignal shape_pulses(const Eigen::VectorXcd& symbols, const TimeGrid& grid, double rolloff) {
  if (symbols.size() != grid.n_symbols) {
    throw DimensionError("shape_pulses: " + std::to_string(symbols.size()) +
                         " symbols for a grid of " + std::to_string(grid.n_symbols));
  }
  grid.validate();
  const Eigen::Index n = grid.sample_count();
  Eigen::VectorXcd up = Eigen::VectorXcd::Zero(n);
  for (Eigen::Index k = 0; k < symbols.size(); ++k) up[symbol_center(grid, k)] = symbols[k];

  Eigen::VectorXcd spectrum;
  fft_forward(up, spectrum);
  spectrum.array() *= rrc_response(n, grid.samples_per_symbol, rolloff).array() *
                      static_cast<double>(grid.samples_per_symbol);
  ComplexSignal out(grid);
  fft_inverse(spectrum, out.samples);
  return out;
}

double mean_power(const ComplexSignal& sig) {
  if (sig.size() == 0) return 0.0;
  return sig.samples.squaredNorm() / static_cast<double>(sig.size());
}

double peak_power(const ComplexSignal& sig) {
  if (sig.size() == 0) return 0.0;
  return sig.samples.cwiseAbs2().maxCoeff();
}

ComplexSignal set_launch_power(const ComplexSignal& sig, double p_dbm) {
  const double p = mean_power(sig);
  if (!(p > 0.0)) throw ConfigError("set_launch_power: signal is identically zero");
  ComplexSignal out = sig;
  out.samples *= std::sqrt(dbm_to_watts(p_dbm) / p);
  return out;
}

double osnr_noise_power(double p_signal, double osnr_db, double sim_bandwidth) {
  if (std::isinf(osnr_db) && osnr_db > 0) return 0.0;
  return p_signal / std::pow(10.0, osnr_db / 10.0) * (sim_bandwidth / kOsnrReferenceBandwidth);
}

void add_complex_gaussian_noise(Eigen::VectorXcd& samples, double noise_power, std::uint64_t seed) {
  if (noise_power <= 0.0) return;
  Rng rng = make_rng(seed);
  const double sigma = std::sqrt(noise_power / 2.0);
  for (Eigen::Index k = 0; k < samples.size(); ++k) {
    const double re = standard_normal(rng);
    const double im = standard_normal(rng);
    samples[k] += std::complex<double>(sigma * re, sigma * im);
  }
}

ComplexSignal load_osnr_noise(const ComplexSignal& sig, double osnr_db, std::uint64_t seed) {
  if (std::isnan(osnr_db)) throw ConfigError("osnr_db must not be NaN");
  ComplexSignal out = sig;
  if (std::isinf(osnr_db) && osnr_db > 0) return out;
  const double pn = osnr_noise_power(mean_power(sig), osnr_db, sig.grid.sample_rate());
  add_complex_gaussian_noise(out.samples, pn, seed);
  return out;
}

std::vector<std::uint8_t> random_bits(std::size_t count, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<std::uint8_t> bits(count);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if (i % 64 == 0) word = rng();
    bits[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1U);
  }
  return bits;
}

}  // namespace fiberlab
