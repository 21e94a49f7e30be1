#include "fiberlab/training.hpp"

#include "fiberlab/error.hpp"
#include "fiberlab/rng.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace fiberlab {

std::int64_t TrainConfig::decay_interval() const noexcept {
  if (lr_decay_interval > 0) return lr_decay_interval;
  return std::max<std::int64_t>(1, steps / 5);
}

double TrainConfig::learning_rate_at(std::int64_t step) const noexcept {
  return learning_rate * std::pow(lr_decay_factor, static_cast<double>(step / decay_interval()));
}

void TrainConfig::validate() const {
  if (steps <= 0) throw ConfigError("training steps must be > 0");
  if (batch_frames <= 0) throw ConfigError("batch_frames must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw ConfigError("lr_decay_factor must lie in (0, 1]");
  }
  if (lr_decay_interval < 0) throw ConfigError("lr_decay_interval must be >= 0");
  if (w_pde < 0.0 || w_ic < 0.0) throw ConfigError("loss weights must be >= 0");
  if (collocation_count <= 0) throw ConfigError("collocation_count must be > 0");
  if (validation_every < 0) throw ConfigError("validation_every must be >= 0");
}

AdamOptimizer::AdamOptimizer(Eigen::Index size, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(Eigen::VectorXd::Zero(size)),
      v_(Eigen::VectorXd::Zero(size)) {}

void AdamOptimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double learning_rate) {
  if (grad.size() != m_.size() || params.size() != m_.size()) {
    throw DimensionError("Adam: parameter vector size changed");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + epsilon_);
}

namespace {

class FrameSchedule {
public:
  FrameSchedule(std::size_t n, std::uint64_t seed) : order_(n), seed_(seed) { reshuffle(); }

  std::vector<Frame> next_batch(std::span<const Frame> inputs, int batch) {
    std::vector<Frame> out;
    out.reserve(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      if (pos_ == order_.size()) {
        ++epoch_;
        reshuffle();
      }
      out.push_back(inputs[order_[pos_++]]);
    }
    return out;
  }

private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng = make_rng(seed_, 0x5b00 + epoch_);
    for (std::size_t i = order_.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng() % i);
      std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t pos_ = 0;
};

}  // namespace

TrainResult train(const OperatorParams& init, std::span<const Frame> inputs, const NlseCoeffs& coeffs,
                  const TrainConfig& cfg, const Validator& validator) {
  cfg.validate();
  coeffs.validate();
  init.validate();
  if (inputs.empty()) throw ConfigError("train: no input frames");

  TrainResult result{init, {}};
  TrainRecord& rec = result.record;
  rec.history.reserve(static_cast<std::size_t>(cfg.steps));

  OperatorParams params = init;
  Eigen::VectorXd flat = flatten(params);
  AdamOptimizer adam(flat.size());
  FrameSchedule schedule(inputs.size(), cfg.seed);
  const auto ic_idx = all_sample_indices(inputs.front());
  double best_total = std::numeric_limits<double>::infinity();
  OperatorParams g_pde, g_ic;

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<Frame> batch = schedule.next_batch(inputs, cfg.batch_frames);
    const CollocationSet colloc =
        CollocationSet::uniform(cfg.collocation_count, mix_seed(cfg.seed, static_cast<std::uint64_t>(step)));

    double pde = 0.0, ic = 0.0;
    Eigen::VectorXd grad;
    try {
      pde = pde_loss_gradient(params, batch, colloc, coeffs, g_pde);
      ic = ic_loss_gradient(params, batch, ic_idx, g_ic);
      grad = cfg.w_pde * flatten(g_pde) + cfg.w_ic * flatten(g_ic);
    } catch (const DivergenceError&) {
      rec.diverged = true;
      break;
    }
    LossReport report = make_loss_report(pde, ic, cfg.w_pde, cfg.w_ic);
    if (!std::isfinite(report.total) || !grad.allFinite()) {
      rec.diverged = true;
      break;
    }
    // loss is evaluated before the update, so it belongs to the current params
    if (report.total < best_total) {
      best_total = report.total;
      result.params = params;
      rec.best_step = step;
    }

    adam.step(flat, grad, cfg.learning_rate_at(step));
    unflatten(flat, params);

    const bool last = step + 1 == cfg.steps;
    if (validator && cfg.validation_every > 0 && ((step + 1) % cfg.validation_every == 0 || last)) {
      report.validation_mse = validator(params);
    }
    rec.history.push_back(report);
    rec.step_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }

  if (!rec.diverged) {
    result.params = params;
  }
  rec.final_digest = params_digest(result.params);
  return result;
}

OperatorParams transfer_init(const OperatorParams& prev) {
  prev.validate();
  return prev;
}

LaunchedSignal make_launched_signal(const TransmitterConfig& tx, double power_dbm, std::int64_t n_symbols,
                                    std::uint64_t seed) {
  LaunchedSignal out;
  out.launch_power_dbm = power_dbm;
  const TimeGrid grid{tx.samples_per_symbol, tx.symbol_rate, n_symbols};
  grid.validate();
  out.bits = random_bits(static_cast<std::size_t>(n_symbols) * static_cast<std::size_t>(bits_per_symbol(tx.format)),
                         mix_seed(seed, 1));
  out.symbols = map_bits(out.bits, tx.format);
  out.clean = set_launch_power(shape_pulses(out.symbols, grid, tx.rolloff), power_dbm);
  out.signal = load_osnr_noise(out.clean, tx.osnr_db, mix_seed(seed, 2));
  return out;
}

std::vector<Frame> make_training_inputs(std::span<const double> powers_dbm, std::int64_t t_symbols,
                                        const TransmitterConfig& tx, const FramingSpec& spec,
                                        std::uint64_t seed) {
  std::vector<Frame> pooled;
  for (std::size_t i = 0; i < powers_dbm.size(); ++i) {
    const LaunchedSignal s = make_launched_signal(tx, powers_dbm[i], t_symbols, mix_seed(seed, 100 + i));
    auto frames = split(s.signal, spec);
    pooled.insert(pooled.end(), std::make_move_iterator(frames.begin()), std::make_move_iterator(frames.end()));
  }
  return pooled;
}

void write_loss_csv(const std::filesystem::path& path, const TrainRecord& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "step,pde,ic,total,validation_mse\n" << std::setprecision(17);
  for (std::size_t s = 0; s < record.history.size(); ++s) {
    const auto& r = record.history[s];
    out << s << ',' << r.pde << ',' << r.ic << ',' << r.total << ',';
    if (r.validation_mse) out << *r.validation_mse;
    out << '\n';
  }
}

}  // namespace fiberlab
