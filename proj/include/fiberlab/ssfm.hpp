#pragma once

#include "fiberlab/signals.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

namespace fiberlab {

/// Physical constants of one fiber span.
struct FiberParams {
  double alpha_db_per_km = 0.2;
  double beta2_ps2_per_km = -21.68;
  double gamma_per_w_km = 1.3;
  double length_km = 80.0;

  /// Power attenuation coefficient in 1/km.
  double alpha_linear() const noexcept;
  static double alpha_db_from_linear(double alpha_per_km) noexcept;
  double beta2_s2_per_km() const noexcept { return beta2_ps2_per_km * 1e-24; }
  /// Total span loss in dB.
  double loss_db() const noexcept { return alpha_db_per_km * length_km; }

  void validate() const;

  friend bool operator==(const FiberParams&, const FiberParams&) = default;
};

/// Standard single-mode fiber defaults (80 km span).
inline FiberParams default_fiber() { return {}; }

/// Step-size policy for the split-step integrator.
struct StepPlan {
  enum class Mode { fixed, adaptive };

  Mode mode = Mode::fixed;
  double dz_km = 0.1;
  double max_nonlinear_phase_rad = 0.003;
  /// Record a snapshot every this many km (and the span end if aligned).
  std::optional<double> store_every_km;

  static StepPlan fixed(double dz_km) { return {Mode::fixed, dz_km, 0.003, std::nullopt}; }
  static StepPlan adaptive(double max_phase_rad) {
    return {Mode::adaptive, 0.1, max_phase_rad, std::nullopt};
  }

  void validate() const;
};

struct Snapshot {
  double z_km = 0.0;
  ComplexSignal field;
};

struct PropagationResult {
  ComplexSignal output;
  std::vector<Snapshot> snapshots;
  std::int64_t steps = 0;
};

/// Frequency-domain multipliers exp((-alpha/2 + i beta2/2 w^2) dz) on the
/// grid's DFT bins.
Eigen::VectorXcd dispersion_operator(const TimeGrid& grid, const FiberParams& fiber, double dz_km);

/// Symmetric split-step integration of
///   ds/dz + alpha/2 s + i beta2/2 d2s/dt2 - i gamma |s|^2 s = 0
/// over fiber.length_km. Throws DivergenceError naming the step index when
/// the field becomes non-finite.
enum class Direction { forward, backward };

/// Direction::backward negates alpha, beta2 and gamma, undoing a forward run
/// with the same plan up to rounding.
PropagationResult propagate(const ComplexSignal& sig, const FiberParams& fiber, const StepPlan& plan,
                            Direction direction = Direction::forward);

/// Fraction of the Nyquist frequency below which `energy_fraction` of the
/// signal energy lies. The default tolerates a white noise floor at OSNR 30 dB.
double spectral_occupancy(const ComplexSignal& sig, double energy_fraction = 0.99);

/// Sample times centred on the window: t_j = (j - n/2) dt.
Eigen::VectorXd centered_time_axis(const TimeGrid& grid);

/// amplitude * exp(-t^2 / (2 t0^2)) on the centred time axis.
ComplexSignal gaussian_pulse(const TimeGrid& grid, double t0_s, double amplitude = 1.0);

/// Closed-form lossless linear propagation of gaussian_pulse over z_km.
ComplexSignal analytic_gaussian_dispersion(double t0_s, double beta2_ps2_per_km, double z_km,
                                           const TimeGrid& grid, double amplitude = 1.0);

/// A sech(t/t0) with A^2 = |beta2| / (gamma t0^2). Requires beta2 < 0 and
/// alpha == 0 (ConfigError otherwise).
ComplexSignal fundamental_soliton(const TimeGrid& grid, const FiberParams& fiber, double t0_s);

/// Dispersion length t0^2 / |beta2| in km.
double dispersion_length_km(double t0_s, const FiberParams& fiber);

}  // namespace fiberlab
