#pragma once

#include "fiberlab/deeponet.hpp"
#include "fiberlab/framing.hpp"
#include "fiberlab/physics.hpp"
#include "fiberlab/signals.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fiberlab {

struct TrainConfig {
  std::int64_t steps = 20000;
  int batch_frames = 16;
  double learning_rate = 1e-3;
  double lr_decay_factor = 0.5;
  /// Steps between decays; 0 means every 20% of `steps`.
  std::int64_t lr_decay_interval = 0;
  double w_pde = 1.0;
  double w_ic = 10.0;
  Eigen::Index collocation_count = 4096;
  std::uint64_t seed = 1;
  /// Validate every this many steps (and at the last step); 0 disables.
  std::int64_t validation_every = 0;

  std::int64_t decay_interval() const noexcept;
  double learning_rate_at(std::int64_t step) const noexcept;
  void validate() const;
};

/// Adaptive moment estimation over a flat parameter vector.
class AdamOptimizer {
public:
  explicit AdamOptimizer(Eigen::Index size, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double learning_rate);
  std::int64_t iterations() const noexcept { return t_; }

private:
  double beta1_, beta2_, epsilon_;
  Eigen::VectorXd m_, v_;
  std::int64_t t_ = 0;
};

struct TrainRecord {
  std::vector<LossReport> history;   // one entry per completed step
  std::vector<double> step_seconds;  // wall clock per step
  std::string final_digest;
  bool diverged = false;
  std::int64_t best_step = -1;
};

struct TrainResult {
  OperatorParams params;
  TrainRecord record;
};

/// Returns the validation MSE of a parameter snapshot.
using Validator = std::function<double(const OperatorParams&)>;

/// Minimises w_pde * pde + w_ic * ic with Adam. Frames are drawn from
/// `inputs` in seeded shuffled epochs; collocation points are redrawn every
/// step from a counter-derived seed. On a non-finite loss training stops and
/// the lowest-loss parameters seen so far are returned with diverged = true.
TrainResult train(const OperatorParams& init, std::span<const Frame> inputs, const NlseCoeffs& coeffs,
                  const TrainConfig& cfg, const Validator& validator = {});

/// Warm start for the next span: an exact copy of the previous span's operator.
OperatorParams transfer_init(const OperatorParams& prev);

/// Transmitter chain settings.
struct TransmitterConfig {
  ModulationFormat format = ModulationFormat::qam16;
  double symbol_rate = 14e9;
  int samples_per_symbol = 16;
  double rolloff = 0.1;
  double osnr_db = 30.0;
};

/// One launched sequence: bits -> symbols -> RRC -> launch power -> OSNR noise.
struct LaunchedSignal {
  std::vector<std::uint8_t> bits;
  Eigen::VectorXcd symbols;
  ComplexSignal clean;  // before noise loading
  ComplexSignal signal;
  double launch_power_dbm = 0.0;
};

LaunchedSignal make_launched_signal(const TransmitterConfig& tx, double power_dbm, std::int64_t n_symbols,
                                    std::uint64_t seed);

/// Training inputs pooled across launch powers (seed stream i for power i).
std::vector<Frame> make_training_inputs(std::span<const double> powers_dbm, std::int64_t t_symbols,
                                        const TransmitterConfig& tx, const FramingSpec& spec,
                                        std::uint64_t seed);

/// CSV "step,pde,ic,total,validation_mse" (empty field when not validated).
void write_loss_csv(const std::filesystem::path& path, const TrainRecord& record);

}  // namespace fiberlab
