#include "fiberlab/link.hpp"

#include "fiberlab/error.hpp"
#include "fiberlab/log.hpp"
#include "fiberlab/rng.hpp"

#include <cmath>
#include <string>

namespace fiberlab {

double EdfaSpec::gain_linear() const noexcept { return std::pow(10.0, gain_db / 10.0); }

void EdfaSpec::validate() const {
  if (!std::isfinite(gain_db) || gain_db < 0.0) throw ConfigError("EDFA gain_db must be finite and >= 0");
  if (!(center_frequency_hz > 0.0) || !std::isfinite(center_frequency_hz)) {
    throw ConfigError("EDFA center_frequency_hz must be > 0");
  }
  if (std::isnan(noise_figure_db) || noise_figure_db == std::numeric_limits<double>::infinity()) {
    throw ConfigError("EDFA noise_figure_db must be finite or the disabled sentinel");
  }
  if (!noiseless() && noise_figure_db < 3.0) {
    log_warning("EDFA noise figure " + std::to_string(noise_figure_db) +
                " dB is below the 3 dB high-gain quantum limit");
  }
}

double ase_noise_power(const EdfaSpec& spec, double sim_bandwidth_hz) {
  if (spec.noiseless()) return 0.0;
  const double nf = std::pow(10.0, spec.noise_figure_db / 10.0);
  return nf / 2.0 * kPlanck * spec.center_frequency_hz * (spec.gain_linear() - 1.0) * sim_bandwidth_hz;
}

ComplexSignal edfa_amplify(const ComplexSignal& sig, const EdfaSpec& spec, double sim_bandwidth_hz,
                           std::uint64_t seed) {
  spec.validate();
  ComplexSignal out = sig;
  out.samples *= std::pow(10.0, spec.gain_db / 20.0);
  if (const double p = ase_noise_power(spec, sim_bandwidth_hz); p > 0.0) {
    add_complex_gaussian_noise(out.samples, p, seed);
  }
  return out;
}

LinkConfig LinkConfig::uniform(int count, const FiberParams& fiber, const EdfaSpec& edfa) {
  if (count < 0) throw ConfigError("link span count must be >= 0");
  LinkConfig cfg;
  cfg.spans.assign(static_cast<std::size_t>(count), SpanConfig{fiber, edfa, true});
  return cfg;
}

double LinkConfig::span_gain_db(std::size_t i) const {
  const SpanConfig& s = spans.at(i);
  return s.auto_gain ? s.fiber.loss_db() : s.edfa.gain_db;
}

void LinkConfig::validate() const {
  step_plan.validate();
  framing.validate();
  for (std::size_t i = 0; i < spans.size(); ++i) {
    try {
      spans[i].fiber.validate();
      EdfaSpec e = spans[i].edfa;
      e.gain_db = span_gain_db(i);
      e.validate();
    } catch (const ConfigError& err) {
      throw ConfigError("span " + std::to_string(i) + ": " + err.what());
    }
  }
  if (propagator == PropagatorKind::pino && models.size() != spans.size()) {
    throw ConfigError("pino propagator needs one model per span (" + std::to_string(spans.size()) +
                      " spans, " + std::to_string(models.size()) + " models)");
  }
}

std::uint64_t span_noise_seed(std::uint64_t seed, std::size_t span) { return mix_seed(seed, 0xed0000 + span); }

namespace {

// One span of any propagator, followed by its amplifier.
template <typename Propagate>
LinkResult cascade(const ComplexSignal& sig, const LinkConfig& cfg, bool record, std::uint64_t seed,
                   Propagate&& propagate_span) {
  LinkResult res;
  ComplexSignal field = sig;
  for (std::size_t i = 0; i < cfg.spans.size(); ++i) {
    field = propagate_span(i, field);
    EdfaSpec amp = cfg.spans[i].edfa;
    amp.gain_db = cfg.span_gain_db(i);
    field = edfa_amplify(field, amp, field.grid.sample_rate(), span_noise_seed(seed, i));
    if (record) res.per_span.push_back(field);
  }
  res.output = std::move(field);
  return res;
}

}  // namespace

LinkResult run_link(const ComplexSignal& sig, const LinkConfig& cfg, bool record_per_span, std::uint64_t seed) {
  cfg.validate();
  if (cfg.propagator == PropagatorKind::ssfm) {
    return cascade(sig, cfg, record_per_span, seed, [&](std::size_t i, const ComplexSignal& in) {
      return propagate(in, cfg.spans[i].fiber, cfg.step_plan).output;
    });
  }
  std::vector<DeepOnet> nets;
  nets.reserve(cfg.models.size());
  for (std::size_t i = 0; i < cfg.models.size(); ++i) {
    if (!std::filesystem::exists(cfg.models[i])) {
      throw MissingArtifactError("span " + std::to_string(i) + ": model file '" + cfg.models[i].string() +
                                 "' not found");
    }
    nets.emplace_back(load_model(cfg.models[i]));
  }
  std::vector<const FieldOperator*> ops;
  for (const auto& n : nets) ops.push_back(&n);
  return run_link(sig, cfg, ops, record_per_span, seed);
}

LinkResult run_link(const ComplexSignal& sig, const LinkConfig& cfg, std::span<const FieldOperator* const> ops,
                    bool record_per_span, std::uint64_t seed) {
  LinkConfig checked = cfg;
  checked.models.assign(cfg.spans.size(), {});
  checked.propagator = PropagatorKind::ssfm;
  checked.validate();
  if (ops.size() != cfg.spans.size()) {
    throw ConfigError("run_link: " + std::to_string(ops.size()) + " operators for " +
                      std::to_string(cfg.spans.size()) + " spans");
  }
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i] == nullptr) throw MissingArtifactError("span " + std::to_string(i) + ": no operator");
  }
  return cascade(sig, cfg, record_per_span, seed, [&](std::size_t i, const ComplexSignal& in) {
    return operator_span(in, *ops[i], cfg.framing, cfg.spans[i].fiber.length_km);
  });
}

ComplexSignal operator_span(const ComplexSignal& sig, const FieldOperator& op, const FramingSpec& spec,
                            double z_km) {
  std::vector<Frame> frames = split(sig, spec);
  const auto pts = frame_sample_points(frames.front().samples.grid, z_km);
  const FieldBatch out = op.evaluate(frames, pts);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto r = static_cast<Eigen::Index>(f);
    frames[f].samples.samples.real() = out.s_i.row(r).transpose();
    frames[f].samples.samples.imag() = out.s_q.row(r).transpose();
  }
  return stitch(frames, spec);
}

SsfmOperator::SsfmOperator(FiberParams fiber, StepPlan plan, FramingSpec spec)
    : fiber_(fiber), plan_(std::move(plan)), spec_(spec) {}

FieldBatch SsfmOperator::evaluate(std::span<const Frame> frames, std::span<const EvalPoint> pts) const {
  if (frames.empty() || pts.empty()) throw DimensionError("SsfmOperator: empty frames or points");
  const TimeGrid& g = frames.front().samples.grid;
  const double z = pts.front().z_km;
  std::vector<Eigen::Index> idx(pts.size());
  for (std::size_t p = 0; p < pts.size(); ++p) {
    if (pts[p].z_km != z) throw DimensionError("SsfmOperator: all points must share one z");
    const double j = pts[p].t_s / g.sample_period();
    idx[p] = static_cast<Eigen::Index>(std::llround(j));
    if (std::abs(j - static_cast<double>(idx[p])) > 1e-6 || idx[p] < 0 || idx[p] >= g.sample_count()) {
      throw DimensionError("SsfmOperator: point " + std::to_string(p) + " is not on the frame sample grid");
    }
  }

  ComplexSignal field = stitch(frames, spec_);
  if (z > 0.0) {
    FiberParams f = fiber_;
    f.length_km = z;
    field = propagate(field, f, plan_).output;
  }
  const std::vector<Frame> out = split(field, spec_);

  FieldBatch batch;
  batch.s_i.resize(static_cast<Eigen::Index>(frames.size()), static_cast<Eigen::Index>(pts.size()));
  batch.s_q.resizeLike(batch.s_i);
  for (std::size_t f = 0; f < out.size(); ++f) {
    for (std::size_t p = 0; p < pts.size(); ++p) {
      const auto v = out[f].samples.samples[idx[p]];
      batch.s_i(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(p)) = v.real();
      batch.s_q(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(p)) = v.imag();
    }
  }
  return batch;
}

}  // namespace fiberlab
