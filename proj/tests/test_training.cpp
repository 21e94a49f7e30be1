#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fiberlab/error.hpp"
#include "fiberlab/rng.hpp"
#include "fiberlab/ssfm.hpp"
#include "fiberlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

using namespace fiberlab;

namespace {

// 2 samples per symbol and 8-symbol frames keep the networks tiny.
struct SmallProblem {
  TransmitterConfig tx;
  FramingSpec spec{4, 2};
  CoordScales scales;
  OperatorArchitecture arch;

  SmallProblem() {
    tx.samples_per_symbol = 2;
    scales.t_scale_s = spec.frame_symbols() / tx.symbol_rate;
    arch.trunk_hidden = {32, 32};
    arch.branch_hidden = {32};
    arch.q_embed = 32;
    arch.input_dim_m = static_cast<int>(spec.frame_symbols()) * tx.samples_per_symbol;
    arch.trunk_time_init_scale = 150.0;
    arch.branch_input_init_scale = 0.03;
  }

  std::vector<Frame> inputs(std::int64_t t_symbols, std::uint64_t seed) const {
    const double powers[] = {-3.0, 0.0, 3.0};
    return make_training_inputs(powers, t_symbols, tx, spec, seed);
  }
};

TrainConfig quick_config(std::int64_t steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_frames = 8;
  cfg.learning_rate = 1e-2;
  cfg.collocation_count = 64;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("Adam steps match a hand-computed update") {
  AdamOptimizer adam(2);
  Eigen::VectorXd p(2), g(2);
  p << 1.0, -2.0;
  g << 0.5, 3.0;
  adam.step(p, g, 0.1);
  // first bias-corrected step moves each weight by lr * g / (|g| + eps)
  CHECK(std::abs(p[0] - 0.900000002) < 1e-12);
  CHECK(std::abs(p[1] - -2.0999999996666667) < 1e-12);
  g << -1.0, 0.25;
  adam.step(p, g, 0.05);
  CHECK(std::abs(p[0] - 0.9183051781202827) < 1e-12);
  CHECK(std::abs(p[1] - -2.1364784651977367) < 1e-12);
  CHECK(adam.iterations() == 2);
  Eigen::VectorXd wrong(3);
  CHECK_THROWS_AS(adam.step(wrong, wrong, 0.1), DimensionError);
}

TEST_CASE("learning rate halves every fifth of the run") {
  TrainConfig cfg;
  cfg.steps = 100;
  cfg.learning_rate = 1e-3;
  CHECK(cfg.decay_interval() == 20);
  CHECK(cfg.learning_rate_at(0) == 1e-3);
  CHECK(cfg.learning_rate_at(19) == 1e-3);
  CHECK(cfg.learning_rate_at(20) == 5e-4);
  CHECK(cfg.learning_rate_at(99) == 1e-3 / 16.0);
  cfg.lr_decay_interval = 7;
  CHECK(cfg.learning_rate_at(14) == 2.5e-4);
  for (std::int64_t s = 1; s < 100; ++s) CHECK(cfg.learning_rate_at(s) <= cfg.learning_rate_at(s - 1));
}

TEST_CASE("training config validation") {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.steps = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.batch_frames = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.learning_rate = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.lr_decay_factor = 1.5; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.w_ic = -1.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](TrainConfig& c) { c.collocation_count = 0; }).validate(), ConfigError);
  CHECK_NOTHROW(TrainConfig{}.validate());

  SmallProblem sp;
  const auto init = init_operator(sp.arch, sp.scales, 1);
  CHECK_THROWS_AS(train(init, {}, NlseCoeffs{}, quick_config(1)), ConfigError);
}

TEST_CASE("paper-sized training inputs") {
  TransmitterConfig tx;
  const double powers[] = {-3.0, 0.0, 3.0};
  const auto frames = make_training_inputs(powers, 808, tx, FramingSpec{}, 4);
  CHECK(frames.size() == 303);
  CHECK(make_training_inputs({}, 808, tx, FramingSpec{}, 4).empty());
  const auto again = make_training_inputs(powers, 808, tx, FramingSpec{}, 4);
  for (std::size_t f = 0; f < frames.size(); f += 50) CHECK(frames[f].samples == again[f].samples);

  // each power block is framed from a signal at that launch power
  for (int i = 0; i < 3; ++i) {
    double p = 0.0;
    for (int f = 0; f < 101; ++f) p += mean_power(frames[static_cast<std::size_t>(i * 101 + f)].samples);
    CHECK(std::abs(watts_to_dbm(p / 101.0) - powers[i]) < 0.2);
  }
}

TEST_CASE("launched signal chain") {
  TransmitterConfig tx;
  const auto s = make_launched_signal(tx, 3.0, 64, 9);
  CHECK(s.bits.size() == 256);
  CHECK(s.symbols.size() == 64);
  CHECK(watts_to_dbm(mean_power(s.clean)) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(!(s.clean == s.signal));
  tx.osnr_db = std::numeric_limits<double>::infinity();
  CHECK(make_launched_signal(tx, 3.0, 64, 9).signal == make_launched_signal(tx, 3.0, 64, 9).clean);
}

TEST_CASE("same seed and config give a bit-identical record") {
  SmallProblem sp;
  const auto inputs = sp.inputs(32, 2);
  const auto coeffs = NlseCoeffs::from_fiber(default_fiber(), sp.scales);
  const auto init = init_operator(sp.arch, sp.scales, 5);
  const auto cfg = quick_config(30);
  const auto a = train(init, inputs, coeffs, cfg);
  const auto b = train(init, inputs, coeffs, cfg);
  REQUIRE(a.record.history.size() == 30);
  REQUIRE(a.record.step_seconds.size() == 30);
  for (std::size_t s = 0; s < 30; ++s) {
    CHECK(a.record.history[s].pde == b.record.history[s].pde);
    CHECK(a.record.history[s].ic == b.record.history[s].ic);
    CHECK(a.record.history[s].total == b.record.history[s].total);
  }
  CHECK(a.record.final_digest == b.record.final_digest);
  CHECK(a.params == b.params);
  CHECK(a.record.final_digest == params_digest(a.params));

  auto other = cfg;
  other.seed = 12;
  CHECK(train(init, inputs, coeffs, other).record.final_digest != a.record.final_digest);
}

TEST_CASE("validation is recorded on schedule and at the last step") {
  SmallProblem sp;
  const auto inputs = sp.inputs(16, 3);
  auto cfg = quick_config(10);
  cfg.validation_every = 4;
  int calls = 0;
  const auto r = train(init_operator(sp.arch, sp.scales, 1), inputs, NlseCoeffs{}, cfg,
                       [&](const OperatorParams&) { return static_cast<double>(++calls); });
  CHECK(calls == 3);
  for (std::size_t s = 0; s < 10; ++s) CHECK(r.record.history[s].validation_mse.has_value() == (s == 3 || s == 7 || s == 9));
  CHECK(*r.record.history[9].validation_mse == 3.0);
}

TEST_CASE("a blow-up returns the best parameters seen") {
  SmallProblem sp;
  const auto inputs = sp.inputs(16, 3);
  const auto init = init_operator(sp.arch, sp.scales, 1);
  auto cfg = quick_config(10);
  cfg.learning_rate = 1e30;
  const auto coeffs = NlseCoeffs::from_fiber(default_fiber(), sp.scales);
  const auto r = train(init, inputs, coeffs, cfg);
  CHECK(r.record.diverged);
  CHECK(r.record.best_step == 0);
  CHECK(r.record.history.size() < 10);
  CHECK(r.params == init);
  CHECK(r.record.final_digest == params_digest(init));
}

TEST_CASE("zero coefficients: the operator learns the identity in z") {
  SmallProblem sp;
  const auto inputs = sp.inputs(1024, 7);
  std::vector<Frame> held;
  for (int i = 0; i < 3; ++i) {
    const auto s = make_launched_signal(sp.tx, -3.0 + 3.0 * i, 64, mix_seed(999, static_cast<std::uint64_t>(i)));
    const auto f = split(s.signal, sp.spec);
    held.insert(held.end(), f.begin(), f.end());
  }
  auto cfg = quick_config(3000);
  cfg.batch_frames = 32;
  cfg.collocation_count = 256;
  const auto r = train(init_operator(sp.arch, sp.scales, 3), inputs, NlseCoeffs{}, cfg);
  REQUIRE(!r.record.diverged);
  const DeepOnet op(r.params);
  const double p0 = sp.scales.amp_scale * sp.scales.amp_scale;
  for (double z : {0.0, 40.0, 80.0}) {
    const double v = validation_mse(op, held, held, z, sp.spec, p0).mean();
    MESSAGE("z = " << z << " km: validation MSE " << v);
    CHECK(v < 1e-2);
  }
  const auto& h = r.record.history;
  MESSAGE("total loss step 100 / final: " << h[100].total / h.back().total);
  CHECK(h[100].total / h.back().total > 10.0);
}

TEST_CASE("warm start from the previous span speeds up the next one") {
  SmallProblem sp;
  const FiberParams fiber = default_fiber();
  const auto coeffs = NlseCoeffs::from_fiber(fiber, sp.scales);
  const double powers[] = {-3.0, 0.0, 3.0};
  auto span1 = make_training_inputs(powers, 256, sp.tx, sp.spec, 21);

  // span 2 sees span-1 outputs after a loss-compensating amplifier
  std::vector<Frame> span2;
  std::vector<Frame> held_in, held_ref;
  const double gain = std::pow(10.0, fiber.loss_db() / 20.0);
  for (int i = 0; i < 3; ++i) {
    for (int which = 0; which < 2; ++which) {
      const auto s = make_launched_signal(sp.tx, powers[i], which ? 64 : 256, mix_seed(300 + which, static_cast<std::uint64_t>(i)));
      ComplexSignal after = propagate(s.signal, fiber, StepPlan{}).output;
      after.samples *= gain;
      const auto frames = split(after, sp.spec);
      if (which == 0) {
        span2.insert(span2.end(), frames.begin(), frames.end());
      } else {
        held_in.insert(held_in.end(), frames.begin(), frames.end());
        ComplexSignal ref = propagate(after, fiber, StepPlan{}).output;
        const auto rf = split(ref, sp.spec);
        held_ref.insert(held_ref.end(), rf.begin(), rf.end());
      }
    }
  }

  const auto cfg = quick_config(800);
  const auto first = train(init_operator(sp.arch, sp.scales, 4), span1, coeffs, cfg);
  const double target = first.record.history.back().total;

  const auto warm = train(transfer_init(first.params), span2, coeffs, cfg);
  const auto cold = train(init_operator(sp.arch, sp.scales, 4), span2, coeffs, cfg);
  const auto& wh = warm.record.history;
  const auto reached = std::find_if(wh.begin(), wh.end(), [&](const LossReport& r) { return r.total <= target; });
  const auto steps_needed = std::distance(wh.begin(), reached);
  MESSAGE("warm start reached span-1 final loss after " << steps_needed << " of " << cfg.steps << " steps");
  CHECK(steps_needed <= cfg.steps / 2);

  const double p0 = dbm_to_watts(0.0);
  const double v_warm = validation_mse(DeepOnet(warm.params), held_in, held_ref, fiber.length_km, sp.spec, p0).mean();
  const double v_cold = validation_mse(DeepOnet(cold.params), held_in, held_ref, fiber.length_km, sp.spec, p0).mean();
  MESSAGE("validation MSE warm " << v_warm << ", cold " << v_cold);
  CHECK(v_warm <= v_cold);

  CHECK(serialize(transfer_init(first.params)) == serialize(first.params));
}

TEST_CASE("loss CSV") {
  TrainRecord rec;
  rec.history.push_back(make_loss_report(0.5, 0.25, 1.0, 10.0));
  rec.history.push_back(make_loss_report(0.125, 0.0625, 1.0, 10.0));
  rec.history.back().validation_mse = 1e-3;
  const auto path = std::filesystem::temp_directory_path() / "fiberlab_test_training" / "loss.csv";
  write_loss_csv(path, rec);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,pde,ic,total,validation_mse");
  std::getline(in, line);
  CHECK(line == "0,0.5,0.25,3,");
  std::getline(in, line);
  CHECK(line == "1,0.125,0.0625,0.75,0.001");
  CHECK(!std::getline(in, line));
  std::filesystem::remove_all(path.parent_path());
}
