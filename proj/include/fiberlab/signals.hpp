#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace fiberlab {

/// Uniform sampling grid of a symbol sequence.
struct TimeGrid {
  int samples_per_symbol = 16;
  double symbol_rate = 14e9;  // Hz
  std::int64_t n_symbols = 0;

  Eigen::Index sample_count() const noexcept {
    return static_cast<Eigen::Index>(n_symbols) * samples_per_symbol;
  }
  double sample_rate() const noexcept { return symbol_rate * samples_per_symbol; }
  double sample_period() const noexcept { return 1.0 / sample_rate(); }
  double symbol_period() const noexcept { return 1.0 / symbol_rate; }
  double duration() const noexcept { return static_cast<double>(n_symbols) / symbol_rate; }

  /// Throws ConfigError unless sps >= 2, rate > 0 and the sample count is even.
  void validate() const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// Sampled complex baseband field, in units of sqrt(W).
struct ComplexSignal {
  TimeGrid grid;
  Eigen::VectorXcd samples;

  ComplexSignal() = default;
  ComplexSignal(const TimeGrid& g, Eigen::VectorXcd s);
  explicit ComplexSignal(const TimeGrid& g);  // all zeros

  Eigen::Index size() const noexcept { return samples.size(); }
  Eigen::VectorXd re() const { return samples.real(); }
  Eigen::VectorXd im() const { return samples.imag(); }

  /// Throws DimensionError / DivergenceError if the invariants are broken.
  void validate() const;

  friend bool operator==(const ComplexSignal& a, const ComplexSignal& b) {
    return a.grid == b.grid && a.samples.size() == b.samples.size() &&
           (a.samples.array() == b.samples.array()).all();
  }
};

enum class ModulationFormat { ook, qpsk, qam16 };

int bits_per_symbol(ModulationFormat fmt) noexcept;
std::string_view to_string(ModulationFormat fmt) noexcept;
ModulationFormat parse_modulation_format(std::string_view name);

/// Constellation points indexed by the bit label read MSB first, scaled to
/// unit mean energy.
Eigen::VectorXcd constellation(ModulationFormat fmt);

/// Gray-coded symbol mapping. Throws DimensionError when the bit count is not
/// a multiple of bits_per_symbol(fmt).
Eigen::VectorXcd map_bits(std::span<const std::uint8_t> bits, ModulationFormat fmt);

/// Root-raised-cosine frequency response on the n-point DFT grid of a signal
/// sampled at sps samples/symbol. Unit gain at DC.
Eigen::VectorXd rrc_response(Eigen::Index n, int samples_per_symbol, double rolloff);

/// Sample index of the centre of symbol slot k.
inline Eigen::Index symbol_center(const TimeGrid& grid, std::int64_t k) {
  return static_cast<Eigen::Index>(k) * grid.samples_per_symbol + grid.samples_per_symbol / 2;
}

/// Upsamples onto `grid` (one impulse per slot centre) and applies a circular
/// RRC filter scaled so that RRC x RRC sampled at slot centres returns the
/// symbols.
ComplexSignal shape_pulses(const Eigen::VectorXcd& symbols, const TimeGrid& grid,
                           double rolloff);

double mean_power(const ComplexSignal& sig);
double peak_power(const ComplexSignal& sig);

inline double dbm_to_watts(double p_dbm) { return std::pow(10.0, p_dbm / 10.0) * 1e-3; }
inline double watts_to_dbm(double p_w) { return 10.0 * std::log10(p_w / 1e-3); }

/// Rescales to mean power 10^(p_dbm/10) mW. Throws ConfigError on a zero signal.
ComplexSignal set_launch_power(const ComplexSignal& sig, double p_dbm);

/// OSNR reference bandwidth, 0.1 nm at 1550 nm.
inline constexpr double kOsnrReferenceBandwidth = 12.5e9;

/// Sentinel that disables noise loading.
inline constexpr double kNoiseDisabled = std::numeric_limits<double>::infinity();

/// Noise power that load_osnr_noise adds for a signal of power p_signal.
double osnr_noise_power(double p_signal, double osnr_db, double sim_bandwidth);

/// Adds circular white Gaussian noise for the requested OSNR, referenced to
/// kOsnrReferenceBandwidth. osnr_db = +inf returns the input unchanged.
ComplexSignal load_osnr_noise(const ComplexSignal& sig, double osnr_db, std::uint64_t seed);

/// Adds circular complex Gaussian noise with E|n|^2 = noise_power per sample.
void add_complex_gaussian_noise(Eigen::VectorXcd& samples, double noise_power,
                                std::uint64_t seed);

/// Uniform random bits from a seed.
std::vector<std::uint8_t> random_bits(std::size_t count, std::uint64_t seed);

}  // namespace fiberlab
