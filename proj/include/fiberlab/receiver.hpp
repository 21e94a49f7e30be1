#pragma once

#include "fiberlab/framing.hpp"
#include "fiberlab/link.hpp"
#include "fiberlab/signals.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace fiberlab {

/// Digital backpropagation: spans in reverse order, each undoing its
/// amplifier gain and then integrating the fiber backwards with the link's
/// step plan, or with `steps_per_span` uniform steps when given.
ComplexSignal dbp(const ComplexSignal& sig, const LinkConfig& cfg, std::optional<int> steps_per_span = {});

struct Demodulated {
  Eigen::VectorXcd symbols;            // matched-filter samples at slot centres
  std::vector<int> decisions;          // constellation labels
  Eigen::VectorXcd decided;            // decided constellation points
};

/// Matched RRC filter, slot-centre sampling and nearest-point decisions.
/// With `normalize`, samples are rescaled to unit mean power before deciding.
Demodulated demodulate(const ComplexSignal& sig, ModulationFormat fmt, double rolloff, bool normalize = false);

/// Rescales to unit mean |x|^2 (zero vectors are returned unchanged).
Eigen::VectorXcd normalize_power(const Eigen::VectorXcd& x);

/// Per symbol: mean over its samples of (d_re^2 + d_im^2) / 2 after dividing
/// both fields by sqrt(power_w), the launch power (default: the reference's
/// mean power, which equals it after an auto-gain amplifier). Every symbol of
/// the sequence is the core of exactly one frame, so the array is in symbol
/// order.
Eigen::VectorXd mse_per_symbol(const ComplexSignal& pred, const ComplexSignal& ref, const FramingSpec& spec,
                               std::optional<double> power_w = {});

/// Count of entries strictly below `threshold` over the length (0 for empty).
double fraction_below(const Eigen::VectorXd& values, double threshold);

/// RMS error vector over RMS reference, in percent.
double evm_percent(const Eigen::VectorXcd& received, const Eigen::VectorXcd& reference);

struct MetricsReport {
  Eigen::VectorXd mse_per_symbol;
  double evm_percent = 0.0;
  std::vector<int> decisions;
  std::int64_t symbol_errors = 0;
  std::int64_t bit_errors = 0;

  double fraction_below(double threshold) const { return fiberlab::fraction_below(mse_per_symbol, threshold); }
};

/// Demodulates `received` (power-normalized) against the transmitted bits;
/// `reference` (optional) supplies the field for the per-symbol MSE.
MetricsReport compute_metrics(const ComplexSignal& received, std::span<const std::uint8_t> bits,
                              ModulationFormat fmt, double rolloff, const FramingSpec& spec,
                              const ComplexSignal* reference = nullptr, std::optional<double> power_w = {});

/// CSV "re,im,decided_re,decided_im,true_re,true_im", 17 significant digits.
void constellation_export(const Eigen::VectorXcd& symbols, const Eigen::VectorXcd& decided,
                          const Eigen::VectorXcd& truth, const std::filesystem::path& path);

/// Label of the nearest constellation point (lowest label on ties).
int nearest_point(std::complex<double> x, const Eigen::VectorXcd& points);

}  // namespace fiberlab
