#include "fiberlab/receiver.hpp"

#include "fiberlab/error.hpp"
#include "fiberlab/fft.hpp"
#include "fiberlab/physics.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace fiberlab {

ComplexSignal dbp(const ComplexSignal& sig, const LinkConfig& cfg, std::optional<int> steps_per_span) {
  LinkConfig checked = cfg;
  checked.propagator = PropagatorKind::ssfm;
  checked.validate();
  if (steps_per_span && *steps_per_span <= 0) throw ConfigError("dbp: steps_per_span must be > 0");
  ComplexSignal field = sig;
  for (std::size_t k = cfg.spans.size(); k-- > 0;) {
    field.samples *= std::pow(10.0, -cfg.span_gain_db(k) / 20.0);
    const FiberParams& fiber = cfg.spans[k].fiber;
    StepPlan plan = cfg.step_plan;
    plan.store_every_km.reset();
    if (steps_per_span) plan = StepPlan::fixed(fiber.length_km / *steps_per_span);
    field = propagate(field, fiber, plan, Direction::backward).output;
  }
  return field;
}

Eigen::VectorXcd normalize_power(const Eigen::VectorXcd& x) {
  const double p = x.size() ? x.squaredNorm() / static_cast<double>(x.size()) : 0.0;
  return p > 0.0 ? Eigen::VectorXcd(x / std::sqrt(p)) : x;
}

int nearest_point(std::complex<double> x, const Eigen::VectorXcd& points) {
  int best = 0;
  double best_d = std::norm(x - points[0]);
  for (Eigen::Index k = 1; k < points.size(); ++k) {
    const double d = std::norm(x - points[k]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

Demodulated demodulate(const ComplexSignal& sig, ModulationFormat fmt, double rolloff, bool normalize) {
  sig.grid.validate();
  Eigen::VectorXcd spec;
  fft_forward(sig.samples, spec);
  spec.array() *= rrc_response(sig.size(), sig.grid.samples_per_symbol, rolloff).array();
  Eigen::VectorXcd filtered;
  fft_inverse(spec, filtered);

  Demodulated out;
  out.symbols.resize(static_cast<Eigen::Index>(sig.grid.n_symbols));
  for (std::int64_t k = 0; k < sig.grid.n_symbols; ++k) {
    out.symbols[static_cast<Eigen::Index>(k)] = filtered[symbol_center(sig.grid, k)];
  }
  if (normalize) out.symbols = normalize_power(out.symbols);

  const Eigen::VectorXcd points = constellation(fmt);
  out.decisions.resize(static_cast<std::size_t>(out.symbols.size()));
  out.decided.resize(out.symbols.size());
  for (Eigen::Index k = 0; k < out.symbols.size(); ++k) {
    const int label = nearest_point(out.symbols[k], points);
    out.decisions[static_cast<std::size_t>(k)] = label;
    out.decided[k] = points[label];
  }
  return out;
}

Eigen::VectorXd mse_per_symbol(const ComplexSignal& pred, const ComplexSignal& ref, const FramingSpec& spec,
                               std::optional<double> power_w) {
  spec.validate();
  if (!(pred.grid == ref.grid) || pred.size() != ref.size()) {
    throw DimensionError("mse_per_symbol: prediction and reference grids differ");
  }
  if (ref.grid.n_symbols % spec.core_m != 0) {
    throw DimensionError("mse_per_symbol: sequence is not a whole number of frame cores");
  }
  const double p = power_w ? *power_w : mean_power(ref);
  if (!(p > 0.0)) throw ConfigError("mse_per_symbol: normalization power must be > 0");
  return per_symbol_mse(pred.samples, ref.samples, ref.grid.samples_per_symbol, p);
}

double fraction_below(const Eigen::VectorXd& values, double threshold) {
  if (values.size() == 0) return 0.0;
  return static_cast<double>((values.array() < threshold).count()) / static_cast<double>(values.size());
}

double evm_percent(const Eigen::VectorXcd& received, const Eigen::VectorXcd& reference) {
  if (received.size() != reference.size() || reference.size() == 0) {
    throw DimensionError("evm_percent: length mismatch or empty input");
  }
  const double ref = reference.squaredNorm();
  if (!(ref > 0.0)) throw ConfigError("evm_percent: zero reference");
  return 100.0 * std::sqrt((received - reference).squaredNorm() / ref);
}

MetricsReport compute_metrics(const ComplexSignal& received, std::span<const std::uint8_t> bits,
                              ModulationFormat fmt, double rolloff, const FramingSpec& spec,
                              const ComplexSignal* reference, std::optional<double> power_w) {
  const Eigen::VectorXcd truth = map_bits(bits, fmt);
  if (truth.size() != received.grid.n_symbols) {
    throw DimensionError("compute_metrics: " + std::to_string(truth.size()) + " transmitted symbols for " +
                         std::to_string(received.grid.n_symbols) + " received");
  }
  const Demodulated d = demodulate(received, fmt, rolloff, true);
  MetricsReport r;
  r.evm_percent = evm_percent(d.symbols, normalize_power(truth));
  r.decisions = d.decisions;
  const int k = bits_per_symbol(fmt);
  for (std::size_t s = 0; s < d.decisions.size(); ++s) {
    int label = 0;
    for (int b = 0; b < k; ++b) label = (label << 1) | (bits[s * static_cast<std::size_t>(k) + b] ? 1 : 0);
    if (label != d.decisions[s]) {
      ++r.symbol_errors;
      r.bit_errors += std::popcount(static_cast<unsigned>(label ^ d.decisions[s]));
    }
  }
  if (reference) r.mse_per_symbol = mse_per_symbol(received, *reference, spec, power_w);
  return r;
}

void constellation_export(const Eigen::VectorXcd& symbols, const Eigen::VectorXcd& decided,
                          const Eigen::VectorXcd& truth, const std::filesystem::path& path) {
  if (symbols.size() != decided.size() || symbols.size() != truth.size()) {
    throw DimensionError("constellation_export: column lengths differ");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "re,im,decided_re,decided_im,true_re,true_im\n" << std::setprecision(17);
  for (Eigen::Index k = 0; k < symbols.size(); ++k) {
    out << symbols[k].real() << ',' << symbols[k].imag() << ',' << decided[k].real() << ',' << decided[k].imag()
        << ',' << truth[k].real() << ',' << truth[k].imag() << '\n';
  }
}

}  // namespace fiberlab
