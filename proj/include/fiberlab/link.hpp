#pragma once

#include "fiberlab/deeponet.hpp"
#include "fiberlab/framing.hpp"
#include "fiberlab/signals.hpp"
#include "fiberlab/ssfm.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace fiberlab {

/// Planck constant, J s.
inline constexpr double kPlanck = 6.62607015e-34;

/// Sentinel noise figure that turns the amplifier noiseless.
inline constexpr double kNoiseFigureDisabled = -std::numeric_limits<double>::infinity();

/// Lumped erbium amplifier.
struct EdfaSpec {
  double gain_db = 16.0;
  double noise_figure_db = 5.0;
  double center_frequency_hz = 193.41e12;

  double gain_linear() const noexcept;
  bool noiseless() const noexcept { return noise_figure_db == kNoiseFigureDisabled; }
  /// Rejects negative gain or a non-positive frequency; warns for NF < 3 dB.
  void validate() const;
};

/// Added ASE power (W) over the simulation bandwidth:
/// (10^(NF/10) / 2) h nu (G - 1) B_sim.
double ase_noise_power(const EdfaSpec& spec, double sim_bandwidth_hz);

/// Scales the field by 10^(gain_db/20), then adds white circular Gaussian ASE.
ComplexSignal edfa_amplify(const ComplexSignal& sig, const EdfaSpec& spec, double sim_bandwidth_hz,
                           std::uint64_t seed);

struct SpanConfig {
  FiberParams fiber;
  EdfaSpec edfa;
  /// When set, edfa.gain_db is replaced by the span loss alpha * L.
  bool auto_gain = true;
};

enum class PropagatorKind { ssfm, pino };

struct LinkConfig {
  std::vector<SpanConfig> spans;
  PropagatorKind propagator = PropagatorKind::ssfm;
  StepPlan step_plan;
  /// pino only: one model file per span.
  std::vector<std::filesystem::path> models;
  FramingSpec framing;

  /// `count` identical spans.
  static LinkConfig uniform(int count, const FiberParams& fiber, const EdfaSpec& edfa);

  /// Gain actually applied by span i (auto-filled from the span loss).
  double span_gain_db(std::size_t i) const;
  void validate() const;
};

struct LinkResult {
  std::vector<ComplexSignal> per_span;  // after each EDFA, when recorded
  ComplexSignal output;
};

/// Seed of the amplifier noise realization of span i.
std::uint64_t span_noise_seed(std::uint64_t seed, std::size_t span);

/// Alternates propagation and amplification span by span. The pino
/// propagator loads cfg.models (MissingArtifactError names the span).
LinkResult run_link(const ComplexSignal& sig, const LinkConfig& cfg, bool record_per_span, std::uint64_t seed);

/// As run_link with caller-supplied span operators: each span is split into
/// frames, evaluated at z = span length, and stitched back.
LinkResult run_link(const ComplexSignal& sig, const LinkConfig& cfg, std::span<const FieldOperator* const> ops,
                    bool record_per_span, std::uint64_t seed);

/// Evaluates one operator span: split -> evaluate at z_km -> stitch.
ComplexSignal operator_span(const ComplexSignal& sig, const FieldOperator& op, const FramingSpec& spec,
                            double z_km);

/// A perfect surrogate: reassembles the frames, runs the split-step solver to
/// the requested z and hands back each frame's window. Used to check cascade
/// plumbing independently of model quality.
class SsfmOperator final : public FieldOperator {
public:
  SsfmOperator(FiberParams fiber, StepPlan plan, FramingSpec spec);

  FieldBatch evaluate(std::span<const Frame> frames, std::span<const EvalPoint> pts) const override;

private:
  FiberParams fiber_;
  StepPlan plan_;
  FramingSpec spec_;
};

}  // namespace fiberlab
