#pragma once

#include "fiberlab/framing.hpp"
#include "fiberlab/mlp.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fiberlab {

/// Constants that map physical coordinates onto the unit domain seen by the
/// networks: z' = z / z_scale_km, tau = t / t_scale_s, amplitudes / amp_scale.
struct CoordScales {
  double z_scale_km = 80.0;
  double t_scale_s = 16.0 / 14e9;
  double amp_scale = 0.031622776601683791;  // sqrt(1 mW)

  void validate() const;
  friend bool operator==(const CoordScales&, const CoordScales&) = default;
};

/// A location in a span: distance from the span input and time from the
/// first sample of the frame window.
struct EvalPoint {
  double z_km = 0.0;
  double t_s = 0.0;
};

/// All trainable weights of the operator: two branch nets (I and Q) that read
/// the sampled input frame and one trunk net that reads (z, t).
struct OperatorParams {
  Mlp<double> branch_i;
  Mlp<double> branch_q;
  Mlp<double> trunk;
  int q_embed = 0;
  int input_dim_m = 0;  // complex samples per input frame
  CoordScales scales;
  nlohmann::json provenance = nlohmann::json::object();

  Eigen::Index parameter_count() const {
    return branch_i.parameter_count() + branch_q.parameter_count() + trunk.parameter_count();
  }

  /// Enforces the width contract: trunk 2 -> q, branches 2m -> q.
  void validate() const;

  /// Weight-wise equality (provenance is ignored).
  friend bool operator==(const OperatorParams& a, const OperatorParams& b) {
    return a.q_embed == b.q_embed && a.input_dim_m == b.input_dim_m && a.scales == b.scales &&
           a.branch_i == b.branch_i && a.branch_q == b.branch_q && a.trunk == b.trunk;
  }
};

/// Architecture and initialisation of a fresh operator.
struct OperatorArchitecture {
  std::vector<int> trunk_hidden{64, 64, 64};
  std::vector<int> branch_hidden{64, 64};
  int q_embed = 64;
  int input_dim_m = 256;
  /// Multiplier on the Glorot scale of the trunk's first-layer time weights;
  /// values > 1 let the trunk resolve symbol-rate structure from the start.
  double trunk_time_init_scale = 1.0;
  /// Multiplier on the branch first-layer weights; small values start the
  /// branches near their linear regime.
  double branch_input_init_scale = 1.0;

  friend bool operator==(const OperatorArchitecture&, const OperatorArchitecture&) = default;
};

/// Glorot-normal weights, zero biases except the trunk's first layer, whose
/// tanh transitions are centred at random points of the unit domain.
OperatorParams init_operator(const OperatorArchitecture& arch, const CoordScales& scales,
                             std::uint64_t seed);

/// Same shapes as `params`, all weights zero.
OperatorParams zeros_like(const OperatorParams& params);

/// Branch input of one frame: interleaved (re0, im0, re1, im1, ...) / amp_scale.
Eigen::VectorXd branch_input(const Frame& frame, const CoordScales& scales);
/// Column f is branch_input(frames[f]).
Eigen::MatrixXd branch_inputs(std::span<const Frame> frames, const CoordScales& scales);

/// Nondimensional (z', tau) coordinates of the given points as a 2 x P matrix.
Eigen::Matrix2Xd nondimensional_points(std::span<const EvalPoint> pts, const CoordScales& scales);

/// Points at distance z_km at every sample time of a frame of `grid`.
std::vector<EvalPoint> frame_sample_points(const TimeGrid& frame_grid, double z_km);

/// Field predictions: row f, column p is s(z_p, t_p) for frames[f], in sqrt(W).
struct FieldBatch {
  Eigen::MatrixXd s_i;
  Eigen::MatrixXd s_q;

  Eigen::MatrixXcd complex() const;
};

/// Output of forward for one frame.
struct OperatorOutput {
  Eigen::VectorXd s_i;
  Eigen::VectorXd s_q;
};

/// s^{I,Q}(z,t) = sum_k b_k^{I,Q}(u) k_k(z,t), in physical units.
OperatorOutput forward(const OperatorParams& params, const Frame& u, std::span<const EvalPoint> pts);
FieldBatch forward_batch(const OperatorParams& params, std::span<const Frame> frames,
                         std::span<const EvalPoint> pts);

/// Precomputed trunk embeddings for a fixed point set; reusable across frames.
Eigen::MatrixXd trunk_embeddings(const OperatorParams& params, const Eigen::Matrix2Xd& nondim_points);

/// Value and derivatives of one output channel at each point.
struct ChannelJet {
  Eigen::VectorXd value, d_z, d_t, d_tt;
};

/// forward plus exact derivatives with respect to z (per km), t (per s) and
/// t twice (per s^2), in physical amplitude units.
struct OperatorJet {
  ChannelJet i, q;
};

OperatorJet forward_jet(const OperatorParams& params, const Frame& u, std::span<const EvalPoint> pts);

/// Same derivatives in nondimensional units (amplitude / amp_scale, per z',
/// per tau) for a 2 x P matrix of nondimensional points.
OperatorJet forward_jet_nondimensional(const OperatorParams& params, const Frame& u,
                                       const Eigen::Matrix2Xd& nondim_points);

/// Abstract field model evaluated on batches of frames; implemented by the
/// learned operator and by test doubles.
class FieldOperator {
public:
  virtual ~FieldOperator() = default;
  virtual FieldBatch evaluate(std::span<const Frame> frames, std::span<const EvalPoint> pts) const = 0;
};

class DeepOnet final : public FieldOperator {
public:
  explicit DeepOnet(OperatorParams params);

  FieldBatch evaluate(std::span<const Frame> frames, std::span<const EvalPoint> pts) const override;
  const OperatorParams& params() const noexcept { return params_; }

private:
  OperatorParams params_;
};

// Model files ---------------------------------------------------------------

inline constexpr std::uint32_t kModelVersion = 1;

/// "PINO" magic, u32 version, u64 metadata length, JSON metadata, u64 weight
/// count, little-endian f64 weights (branch_i, branch_q, trunk; per layer the
/// column-major weight matrix followed by the bias).
std::vector<std::uint8_t> serialize(const OperatorParams& params);
/// Throws CorruptionError on truncation, bad magic, unknown version or
/// inconsistent weight count.
OperatorParams deserialize(std::span<const std::uint8_t> bytes);

/// Bytes preceding the weight blob in serialize(params).
std::size_t serialized_header_size(const OperatorParams& params);

void save_model(const std::filesystem::path& path, const OperatorParams& params);
OperatorParams load_model(const std::filesystem::path& path);

/// Weights in serialization order.
Eigen::VectorXd flatten(const OperatorParams& params);
/// Inverse of flatten; `params` provides the shapes.
void unflatten(const Eigen::VectorXd& flat, OperatorParams& params);

/// FNV-1a over the serialized weight blob, as 16 hex digits.
std::string params_digest(const OperatorParams& params);

}  // namespace fiberlab
