#pragma once

#include <Eigen/Core>

namespace fiberlab {

/// Forward DFT, unscaled: X_k = sum_n x_n exp(-2 pi i k n / N).
void fft_forward(const Eigen::VectorXcd& in, Eigen::VectorXcd& out);

/// Inverse DFT, scaled by 1/N so that fft_inverse(fft_forward(x)) == x.
void fft_inverse(const Eigen::VectorXcd& in, Eigen::VectorXcd& out);

/// Angular frequencies (rad/s) of the DFT bins for n samples spaced dt apart,
/// in standard FFT order (0, +, ..., -).
Eigen::VectorXd fft_angular_frequencies(Eigen::Index n, double dt);

}  // namespace fiberlab
