#include "fiberlab/ssfm.hpp"

#include "fiberlab/error.hpp"
#include "fiberlab/fft.hpp"
#include "fiberlab/log.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

namespace fiberlab {

using namespace std::complex_literals;

double FiberParams::alpha_linear() const noexcept { return alpha_db_per_km * std::numbers::ln10 / 10.0; }

double FiberParams::alpha_db_from_linear(double alpha_per_km) noexcept {
  return alpha_per_km * 10.0 / std::numbers::ln10;
}

void FiberParams::validate() const {
  if (!std::isfinite(alpha_db_per_km) || alpha_db_per_km < 0.0) {
    throw ConfigError("fiber alpha_db_per_km must be finite and >= 0");
  }
  if (!std::isfinite(beta2_ps2_per_km)) throw ConfigError("fiber beta2_ps2_per_km must be finite");
  if (!std::isfinite(gamma_per_w_km) || gamma_per_w_km < 0.0) {
    throw ConfigError("fiber gamma_per_w_km must be finite and >= 0");
  }
  if (!std::isfinite(length_km) || !(length_km > 0.0)) {
    throw ConfigError("fiber length_km must be finite and > 0");
  }
}

void StepPlan::validate() const {
  if (mode == Mode::fixed && !(dz_km > 0.0 && std::isfinite(dz_km))) {
    throw ConfigError("step plan dz_km must be > 0");
  }
  if (mode == Mode::adaptive && !(max_nonlinear_phase_rad > 0.0 && max_nonlinear_phase_rad <= 0.1)) {
    throw ConfigError("step plan max_nonlinear_phase_rad must lie in (0, 0.1]");
  }
  if (store_every_km && !(*store_every_km > 0.0 && std::isfinite(*store_every_km))) {
    throw ConfigError("step plan store_every_km must be > 0");
  }
}

namespace {

Eigen::VectorXd squared_frequencies(const TimeGrid& grid) {
  return fft_angular_frequencies(grid.sample_count(), grid.sample_period()).array().square();
}

Eigen::VectorXcd linear_multiplier(const Eigen::VectorXd& w2, double half_alpha, double half_beta2,
                                   double dz) {
  Eigen::VectorXcd m(w2.size());
  for (Eigen::Index k = 0; k < w2.size(); ++k) {
    m[k] = std::exp(std::complex<double>(-half_alpha * dz, half_beta2 * w2[k] * dz));
  }
  return m;
}

class SplitStepper {
public:
  // sign = -1 integrates the same equation from z = L back to z = 0
  SplitStepper(const TimeGrid& grid, const FiberParams& fiber, double sign)
      : w2_(squared_frequencies(grid)),
        half_alpha_(sign * 0.5 * fiber.alpha_linear()),
        half_beta2_(sign * 0.5 * fiber.beta2_s2_per_km()),
        gamma_(sign * fiber.gamma_per_w_km) {}

  // Fixed-size steps over one segment, with adjacent half linear steps merged.
  void fixed_segment(Eigen::VectorXcd& field, double length, double dz, std::int64_t& step) {
    const auto n = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(length / dz - 1e-9)));
    const double h = length / static_cast<double>(n);
    if (h != cached_h_) {
      half_ = linear_multiplier(w2_, half_alpha_, half_beta2_, 0.5 * h);
      full_ = linear_multiplier(w2_, half_alpha_, half_beta2_, h);
      cached_h_ = h;
    }
    fft_forward(field, spectrum_);
    spectrum_.array() *= half_.array();
    for (std::int64_t i = 0; i < n; ++i) {
      fft_inverse(spectrum_, field);
      nonlinear(field, h, step);
      fft_forward(field, spectrum_);
      spectrum_.array() *= (i + 1 == n ? half_ : full_).array();
    }
    fft_inverse(spectrum_, field);
  }

  // Steps sized so gamma * max|s|^2 * h stays below max_phase.
  void adaptive_segment(Eigen::VectorXcd& field, double length, double max_phase, std::int64_t& step) {
    double remaining = length;
    while (remaining > 1e-12 * length) {
      const double peak = field.cwiseAbs2().maxCoeff();
      double h = remaining;
      if (std::abs(gamma_) * peak > 0.0) h = std::min(remaining, max_phase / (std::abs(gamma_) * peak));
      if (remaining - h < 1e-9 * length) h = remaining;
      const Eigen::VectorXcd half = linear_multiplier(w2_, half_alpha_, half_beta2_, 0.5 * h);
      fft_forward(field, spectrum_);
      spectrum_.array() *= half.array();
      fft_inverse(spectrum_, field);
      nonlinear(field, h, step);
      fft_forward(field, spectrum_);
      spectrum_.array() *= half.array();
      fft_inverse(spectrum_, field);
      remaining -= h;
    }
  }

private:
  void nonlinear(Eigen::VectorXcd& field, double h, std::int64_t& step) {
    const double g = gamma_ * h;
    if (g != 0.0) {
      for (Eigen::Index k = 0; k < field.size(); ++k) {
        const double phase = g * std::norm(field[k]);
        field[k] *= std::complex<double>(std::cos(phase), std::sin(phase));
      }
    }
    if (!field.allFinite()) {
      throw DivergenceError("split-step propagation diverged at step " + std::to_string(step), step);
    }
    ++step;
  }

  Eigen::VectorXd w2_;
  double half_alpha_;
  double half_beta2_;
  double gamma_;
  double cached_h_ = -1.0;
  Eigen::VectorXcd half_, full_, spectrum_;
};

}  // namespace

Eigen::VectorXcd dispersion_operator(const TimeGrid& grid, const FiberParams& fiber, double dz_km) {
  if (!(dz_km > 0.0)) throw ConfigError("dispersion_operator: dz must be > 0");
  return linear_multiplier(squared_frequencies(grid), 0.5 * fiber.alpha_linear(),
                           0.5 * fiber.beta2_s2_per_km(), dz_km);
}

double spectral_occupancy(const ComplexSignal& sig, double energy_fraction) {
  const Eigen::Index n = sig.size();
  if (n == 0) return 0.0;
  Eigen::VectorXcd spec;
  fft_forward(sig.samples, spec);
  // accumulate energy by increasing |frequency|
  const Eigen::Index half = n / 2;
  const double total = spec.squaredNorm();
  if (total == 0.0) return 0.0;
  double acc = std::norm(spec[0]);
  for (Eigen::Index k = 1; k <= half; ++k) {
    acc += std::norm(spec[k]);
    if (n - k != k) acc += std::norm(spec[n - k]);
    if (acc >= energy_fraction * total) return static_cast<double>(k) / static_cast<double>(half);
  }
  return 1.0;
}

PropagationResult propagate(const ComplexSignal& sig, const FiberParams& fiber, const StepPlan& plan,
                            Direction direction) {
  fiber.validate();
  plan.validate();
  if (sig.size() == 0) throw DimensionError("propagate: empty signal");

  if (const double occ = spectral_occupancy(sig); occ > 0.8) {
    log_warning("propagate: signal occupies " + std::to_string(occ * 100.0) +
                "% of the Nyquist band; increase samples_per_symbol");
  }

  const double length = fiber.length_km;
  const double tol = 1e-9 * length;
  std::vector<double> bounds;
  std::vector<bool> record;
  if (plan.store_every_km) {
    const double every = *plan.store_every_km;
    for (std::int64_t k = 1;; ++k) {
      const double z = static_cast<double>(k) * every;
      if (z >= length - tol) break;
      bounds.push_back(z);
      record.push_back(true);
    }
  }
  bounds.push_back(length);
  record.push_back(plan.store_every_km.has_value() &&
                   std::abs(std::round(length / *plan.store_every_km) * *plan.store_every_km - length) <= tol);

  PropagationResult result;
  result.output = sig;
  Eigen::VectorXcd& field = result.output.samples;
  SplitStepper stepper(sig.grid, fiber, direction == Direction::forward ? 1.0 : -1.0);
  double z = 0.0;
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const double seg = bounds[i] - z;
    if (plan.mode == StepPlan::Mode::fixed) {
      stepper.fixed_segment(field, seg, plan.dz_km, result.steps);
    } else {
      stepper.adaptive_segment(field, seg, plan.max_nonlinear_phase_rad, result.steps);
    }
    z = bounds[i];
    if (record[i]) result.snapshots.push_back({z, result.output});
  }
  return result;
}

Eigen::VectorXd centered_time_axis(const TimeGrid& grid) {
  const Eigen::Index n = grid.sample_count();
  Eigen::VectorXd t(n);
  for (Eigen::Index j = 0; j < n; ++j) t[j] = static_cast<double>(j - n / 2) * grid.sample_period();
  return t;
}

ComplexSignal gaussian_pulse(const TimeGrid& grid, double t0_s, double amplitude) {
  return analytic_gaussian_dispersion(t0_s, 0.0, 0.0, grid, amplitude);
}

ComplexSignal analytic_gaussian_dispersion(double t0_s, double beta2_ps2_per_km, double z_km,
                                           const TimeGrid& grid, double amplitude) {
  if (!(t0_s > 0.0)) throw ConfigError("gaussian width t0 must be > 0");
  const Eigen::VectorXd t = centered_time_axis(grid);
  // s(z,t) = A t0 / sqrt(t0^2 - i b2 z) exp(-t^2 / (2 (t0^2 - i b2 z)))
  const std::complex<double> q(t0_s * t0_s, -beta2_ps2_per_km * 1e-24 * z_km);
  const std::complex<double> prefactor = amplitude * t0_s / std::sqrt(q);
  ComplexSignal out(grid);
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    out.samples[j] = prefactor * std::exp(-t[j] * t[j] / (2.0 * q));
  }
  return out;
}

double dispersion_length_km(double t0_s, const FiberParams& fiber) {
  return t0_s * t0_s / std::abs(fiber.beta2_s2_per_km());
}

ComplexSignal fundamental_soliton(const TimeGrid& grid, const FiberParams& fiber, double t0_s) {
  if (!(fiber.beta2_ps2_per_km < 0.0)) {
    throw ConfigError("fundamental_soliton requires anomalous dispersion (beta2 < 0)");
  }
  if (fiber.alpha_db_per_km != 0.0) throw ConfigError("fundamental_soliton requires alpha == 0");
  if (!(fiber.gamma_per_w_km > 0.0)) throw ConfigError("fundamental_soliton requires gamma > 0");
  if (!(t0_s > 0.0)) throw ConfigError("soliton width t0 must be > 0");
  const double amplitude =
      std::sqrt(std::abs(fiber.beta2_s2_per_km()) / (fiber.gamma_per_w_km * t0_s * t0_s));
  const Eigen::VectorXd t = centered_time_axis(grid);
  ComplexSignal out(grid);
  for (Eigen::Index j = 0; j < t.size(); ++j) out.samples[j] = amplitude / std::cosh(t[j] / t0_s);
  return out;
}

}  // namespace fiberlab
