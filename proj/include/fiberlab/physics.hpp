#pragma once

#include "fiberlab/deeponet.hpp"
#include "fiberlab/ssfm.hpp"

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fiberlab {

/// Dimensionless NLSE coefficients for z' = z / z_scale, tau = t / t_scale,
/// s' = s / amp_scale:
///   ds'/dz' + c_alpha s' + i c_beta d2s'/dtau2 - i c_gamma |s'|^2 s' = 0
struct NlseCoeffs {
  double c_alpha = 0.0;  // alpha_lin z_scale / 2
  double c_beta = 0.0;   // beta2 z_scale / (2 t_scale^2)
  double c_gamma = 0.0;  // gamma amp_scale^2 z_scale

  static NlseCoeffs from_fiber(const FiberParams& fiber, const CoordScales& scales);
  /// Inverse of from_fiber for alpha, beta2 and gamma (length is taken from
  /// scales.z_scale_km).
  FiberParams to_fiber(const CoordScales& scales) const;

  void validate() const;
};

/// Collocation points in the unit (z', tau) square, stored as a 2 x P matrix.
struct CollocationSet {
  enum class Sampler { uniform_random, grid };

  Eigen::Matrix2Xd points;
  Sampler sampler = Sampler::uniform_random;
  std::uint64_t seed = 0;

  static CollocationSet uniform(Eigen::Index count, std::uint64_t seed);
  /// nz x nt tensor grid including both ends of each axis.
  static CollocationSet grid(Eigen::Index nz, Eigen::Index nt);
};

/// Field value and derivatives at one point (nondimensional).
struct FieldJet {
  std::complex<double> s, s_z, s_t, s_tt;
};

/// r = ds/dz' + c_alpha s + i c_beta d2s/dtau2 - i c_gamma |s|^2 s.
std::complex<double> nlse_residual(const FieldJet& jet, const NlseCoeffs& coeffs);

/// Mean over frames and points of |r|^2.
double pde_loss(const OperatorParams& params, std::span<const Frame> frames,
                const CollocationSet& colloc, const NlseCoeffs& coeffs);

/// pde_loss and its gradient with respect to every weight; `grad` is
/// overwritten with the shapes of `params`.
double pde_loss_gradient(const OperatorParams& params, std::span<const Frame> frames,
                         const CollocationSet& colloc, const NlseCoeffs& coeffs, OperatorParams& grad);

/// Sample indices of a frame used by the initial-condition loss.
std::vector<Eigen::Index> all_sample_indices(const Frame& frame);

/// Mean over frames and sample indices of |G(u)(0, t_j) - u(t_j)|^2 with
/// both sides divided by amp_scale (sum of the I and Q squared errors).
double ic_loss(const OperatorParams& params, std::span<const Frame> frames,
               std::span<const Eigen::Index> t_samples);
double ic_loss(const FieldOperator& op, std::span<const Frame> frames,
               std::span<const Eigen::Index> t_samples, double amp_scale);
double ic_loss_gradient(const OperatorParams& params, std::span<const Frame> frames,
                        std::span<const Eigen::Index> t_samples, OperatorParams& grad);

struct LossReport {
  double pde = 0.0;
  double ic = 0.0;
  double total = 0.0;
  double w_pde = 1.0;
  double w_ic = 10.0;
  std::optional<double> validation_mse;
};

LossReport make_loss_report(double pde, double ic, double w_pde, double w_ic);

/// Per symbol, mean over its samples of (d_re^2 + d_im^2) / 2 after dividing
/// both fields by sqrt(power_w). Both vectors must have the same length, a
/// multiple of samples_per_symbol.
Eigen::VectorXd per_symbol_mse(const Eigen::VectorXcd& pred, const Eigen::VectorXcd& ref,
                               int samples_per_symbol, double power_w);

/// Per-core-symbol MSE of the operator's prediction at z_km against
/// `reference` (the true field framed identically to `inputs`).
Eigen::VectorXd validation_mse(const FieldOperator& op, std::span<const Frame> inputs,
                               std::span<const Frame> reference, double z_km, const FramingSpec& spec,
                               double launch_power_w);

}  // namespace fiberlab
