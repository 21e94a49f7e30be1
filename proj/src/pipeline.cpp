#include "fiberlab/pipeline.hpp"

#include "fiberlab/error.hpp"
#include "fiberlab/log.hpp"
#include "fiberlab/receiver.hpp"
#include "fiberlab/rng.hpp"
#include "fiberlab/signal_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace fiberlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string rel(const fs::path& p, const fs::path& base) { return fs::proximate(p, base).generic_string(); }

std::string indexed(std::string_view stem, std::size_t i, std::string_view ext) {
  return std::string(stem) + "_" + std::to_string(i) + std::string(ext);
}

void write_csv_column(const fs::path& path, std::string_view header, const Eigen::VectorXd& v) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "symbol," << header << '\n' << std::setprecision(17);
  for (Eigen::Index k = 0; k < v.size(); ++k) out << k << ',' << v[k] << '\n';
}

// Linear interpolation between order statistics.
double quantile(std::vector<double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

json mse_summary(const Eigen::VectorXd& mse) {
  std::vector<double> v(mse.data(), mse.data() + mse.size());
  const double mean = v.empty() ? 0.0 : mse.mean();
  return {{"symbols", mse.size()},
          {"mean", mean},
          {"fraction_below_5e-3", fraction_below(mse, 5e-3)},
          {"fraction_below_5e-4", fraction_below(mse, 5e-4)},
          {"quantiles", {{"p50", quantile(v, 0.5)}, {"p90", quantile(v, 0.9)}, {"p99", quantile(v, 0.99)},
                         {"max", v.empty() ? 0.0 : *std::max_element(v.begin(), v.end())}}}};
}

json metrics_json(const MetricsReport& m) {
  return {{"evm_percent", m.evm_percent}, {"symbol_errors", m.symbol_errors}, {"bit_errors", m.bit_errors}};
}

LaunchedSignal launch(const ExperimentConfig& cfg, std::size_t power_index, std::int64_t n, std::uint64_t seed) {
  return make_launched_signal(cfg.transmitter_config(), cfg.transmitter.powers_dbm.at(power_index), n,
                              mix_seed(seed, power_index));
}

// The first `count` spans of the configured link, always split-step.
LinkConfig leading_spans(const ExperimentConfig& cfg, int count) {
  LinkConfig lc = cfg.link_config();
  lc.propagator = PropagatorKind::ssfm;
  lc.models.clear();
  lc.spans.resize(static_cast<std::size_t>(std::min<int>(count, static_cast<int>(lc.spans.size()))));
  return lc;
}

ComplexSignal cross_spans(const ComplexSignal& sig, const ExperimentConfig& cfg, int count, std::uint64_t seed) {
  if (count <= 0) return sig;
  return run_link(sig, leading_spans(cfg, count), false, seed).output;
}

std::vector<Frame> training_frames(const ExperimentConfig& cfg, int preceding_spans) {
  const auto tx = cfg.transmitter_config();
  if (preceding_spans == 0) {
    return make_training_inputs(cfg.transmitter.powers_dbm, cfg.transmitter.train_symbols, tx, cfg.framing,
                                cfg.seeds.data);
  }
  std::vector<Frame> pooled;
  for (std::size_t i = 0; i < cfg.transmitter.powers_dbm.size(); ++i) {
    // same launches as the first span, carried across the earlier spans
    const auto s = make_launched_signal(tx, cfg.transmitter.powers_dbm[i], cfg.transmitter.train_symbols,
                                        mix_seed(cfg.seeds.data, 100 + i));
    auto frames = split(cross_spans(s.signal, cfg, preceding_spans, mix_seed(cfg.seeds.data, 200 + i)), cfg.framing);
    pooled.insert(pooled.end(), std::make_move_iterator(frames.begin()), std::make_move_iterator(frames.end()));
  }
  return pooled;
}

// Held-out sequences at every power with split-step references one span on.
struct HeldOut {
  std::vector<double> powers_dbm;
  std::vector<std::vector<Frame>> inputs, references;
};

HeldOut held_out(const ExperimentConfig& cfg, int preceding_spans) {
  HeldOut h;
  for (std::size_t i = 0; i < cfg.transmitter.powers_dbm.size(); ++i) {
    const auto s = launch(cfg, i, cfg.transmitter.validation_symbols, cfg.seeds.validation);
    const ComplexSignal in = cross_spans(s.signal, cfg, preceding_spans, mix_seed(cfg.seeds.validation, 100 + i));
    const ComplexSignal ref = propagate(in, cfg.fiber, cfg.plan()).output;
    h.powers_dbm.push_back(cfg.transmitter.powers_dbm[i]);
    h.inputs.push_back(split(in, cfg.framing));
    h.references.push_back(split(ref, cfg.framing));
  }
  return h;
}

std::vector<Eigen::VectorXd> held_out_mse(const FieldOperator& op, const HeldOut& h, const ExperimentConfig& cfg) {
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < h.inputs.size(); ++i) {
    out.push_back(validation_mse(op, h.inputs[i], h.references[i], cfg.fiber.length_km, cfg.framing,
                                 dbm_to_watts(h.powers_dbm[i])));
  }
  return out;
}

// Input frames passed through with the span's power loss only.
class AttenuatedInput final : public FieldOperator {
public:
  explicit AttenuatedInput(double field_gain) : gain_(field_gain) {}
  FieldBatch evaluate(std::span<const Frame> frames, std::span<const EvalPoint> pts) const override {
    FieldBatch b;
    const auto rows = static_cast<Eigen::Index>(frames.size());
    b.s_i.resize(rows, static_cast<Eigen::Index>(pts.size()));
    b.s_q.resize(rows, static_cast<Eigen::Index>(pts.size()));
    for (Eigen::Index f = 0; f < rows; ++f) {
      const auto& x = frames[static_cast<std::size_t>(f)].samples.samples;
      b.s_i.row(f) = gain_ * x.real().transpose();
      b.s_q.row(f) = gain_ * x.imag().transpose();
    }
    return b;
  }

private:
  double gain_;
};

json validation_report(const FieldOperator& op, const HeldOut& h, const ExperimentConfig& cfg) {
  const auto mse = held_out_mse(op, h, cfg);
  const AttenuatedInput baseline(std::pow(10.0, -cfg.fiber.loss_db() / 20.0));
  const auto base = held_out_mse(baseline, h, cfg);
  json per_power = json::array();
  for (std::size_t i = 0; i < mse.size(); ++i) {
    json p = mse_summary(mse[i]);
    p["power_dbm"] = h.powers_dbm[i];
    p["attenuated_input_fraction_below_5e-3"] = fraction_below(base[i], 5e-3);
    per_power.push_back(std::move(p));
  }
  return per_power;
}

struct SpanTraining {
  TrainResult result;
  json validation;
};

SpanTraining train_span(const ExperimentConfig& cfg, int preceding_spans, const OperatorParams& init,
                        const TrainConfig& tc, std::span<const Frame> inputs) {
  check_guard_adequacy(cfg.framing, cfg.fiber, cfg.transmitter.symbol_rate_baud, cfg.transmitter.rolloff);
  const HeldOut h = held_out(cfg, preceding_spans);
  const Validator validator = [&](const OperatorParams& p) {
    const DeepOnet op(p);
    double sum = 0.0;
    Eigen::Index n = 0;
    for (const auto& m : held_out_mse(op, h, cfg)) {
      sum += m.sum();
      n += m.size();
    }
    return n ? sum / static_cast<double>(n) : 0.0;
  };
  const NlseCoeffs coeffs = NlseCoeffs::from_fiber(cfg.fiber, cfg.coord_scales());
  SpanTraining out{train(init, inputs, coeffs, tc, validator), {}};
  out.result.params.provenance = {{"version", version_string()},
                                  {"span", preceding_spans + 1},
                                  {"steps", tc.steps},
                                  {"learning_rate", tc.learning_rate},
                                  {"config", to_json(cfg)}};
  out.validation = validation_report(DeepOnet(out.result.params), h, cfg);
  return out;
}

json train_summary(const TrainRecord& rec) {
  json j{{"steps_completed", rec.history.size()},
         {"diverged", rec.diverged},
         {"best_step", rec.best_step},
         {"digest", rec.final_digest}};
  if (!rec.history.empty()) {
    j["final_loss"] = rec.history.back().total;
    if (rec.history.size() > 100) j["loss_at_step_100"] = rec.history[100].total;
  }
  return j;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
double time_median(int warmup, int iterations, F&& run) {
  for (int i = 0; i < warmup; ++i) run();
  std::vector<double> t;
  for (int i = 0; i < iterations; ++i) {
    const auto t0 = Clock::now();
    run();
    t.push_back(seconds_since(t0));
  }
  return median(std::move(t));
}

}  // namespace

json make_manifest(std::string_view command, const ExperimentConfig& cfg) {
  return {{"command", command}, {"version", version_string()}, {"config", to_json(cfg)}, {"artifacts", json::object()}};
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CorruptionError("'" + path.string() + "': " + e.what());
  }
}

fs::path manifest_path_for(const fs::path& out, bool is_directory) {
  if (is_directory) return out / "manifest.json";
  fs::path p = out;
  p += ".manifest.json";
  return p;
}

// gen -------------------------------------------------------------------------

json cmd_gen(const ExperimentConfig& cfg, const GenOptions& opt) {
  const std::int64_t n = opt.n_symbols > 0 ? opt.n_symbols : cfg.transmitter.test_symbols;
  const std::uint64_t seed = opt.seed.value_or(cfg.seeds.test);
  fs::create_directories(opt.out_dir);
  json m = make_manifest("gen", cfg);
  m["n_symbols"] = n;
  m["seed"] = seed;
  json signals = json::array();
  for (std::size_t i = 0; i < cfg.transmitter.powers_dbm.size(); ++i) {
    const auto s = launch(cfg, i, n, seed);
    const fs::path sig = opt.out_dir / indexed("tx", i, ".fsig");
    const fs::path bits = opt.out_dir / indexed("bits", i, ".bits");
    write_fsig(sig, s.signal);
    write_bits(bits, s.bits);
    signals.push_back({{"power_dbm", s.launch_power_dbm},
                       {"signal", rel(sig, opt.out_dir)},
                       {"bits", rel(bits, opt.out_dir)},
                       {"measured_power_dbm", watts_to_dbm(mean_power(s.signal))}});
  }
  m["artifacts"]["signals"] = signals;
  write_json(manifest_path_for(opt.out_dir, true), m);
  return m;
}

// propagate -------------------------------------------------------------------

json cmd_propagate(const ExperimentConfig& cfg, const PropagateOptions& opt) {
  const ComplexSignal in = read_fsig(opt.input);
  StepPlan plan = cfg.plan();
  if (opt.snapshot_dir) plan.store_every_km = opt.store_every_km.value_or(cfg.fiber.length_km / 8.0);
  const PropagationResult r = propagate(in, cfg.fiber, plan);
  write_fsig(opt.output, r.output);

  const fs::path base = opt.output.has_parent_path() ? opt.output.parent_path() : fs::path(".");
  json m = make_manifest("propagate", cfg);
  m["input"] = opt.input.generic_string();
  m["steps"] = r.steps;
  m["artifacts"]["output"] = rel(opt.output, base);
  if (opt.snapshot_dir) {
    json snaps = json::array();
    for (std::size_t i = 0; i < r.snapshots.size(); ++i) {
      const fs::path p = *opt.snapshot_dir / indexed("z", i, ".fsig");
      write_fsig(p, r.snapshots[i].field);
      snaps.push_back({{"z_km", r.snapshots[i].z_km}, {"file", rel(p, *opt.snapshot_dir)}});
    }
    const json index{{"fiber", to_json(cfg)["fiber"]},
                     {"step_plan", {{"mode", cfg.step_plan.mode == StepPlan::Mode::fixed ? "fixed" : "adaptive"},
                                    {"dz_km", plan.dz_km},
                                    {"max_nonlinear_phase_rad", plan.max_nonlinear_phase_rad},
                                    {"store_every_km", *plan.store_every_km}}},
                     {"snapshots", snaps}};
    write_json(*opt.snapshot_dir / "snapshots.json", index);
    m["artifacts"]["snapshots"] = rel(*opt.snapshot_dir / "snapshots.json", base);
  }
  write_json(manifest_path_for(opt.output, false), m);
  return m;
}

// train -----------------------------------------------------------------------

json cmd_train(const ExperimentConfig& cfg, const TrainOptions& opt) {
  if (opt.preceding_spans < 0) throw ConfigError("preceding spans must be >= 0");
  std::vector<Frame> inputs;
  if (opt.inputs.empty()) {
    inputs = training_frames(cfg, opt.preceding_spans);
  } else {
    for (const auto& p : opt.inputs) {
      auto frames = split(read_fsig(p), cfg.framing);
      inputs.insert(inputs.end(), std::make_move_iterator(frames.begin()), std::make_move_iterator(frames.end()));
    }
  }
  OperatorParams init;
  TrainConfig tc = cfg.train_config(cfg.training.steps);
  if (opt.resume) {
    init = transfer_init(load_model(*opt.resume));
    tc = cfg.transfer_config();
  } else {
    init = init_operator(cfg.architecture(), cfg.coord_scales(), cfg.seeds.init);
  }
  if (opt.steps) tc.steps = *opt.steps;

  const SpanTraining t = train_span(cfg, opt.preceding_spans, init, tc, inputs);
  save_model(opt.model_out, t.result.params);
  const fs::path base = opt.model_out.has_parent_path() ? opt.model_out.parent_path() : fs::path(".");
  json m = make_manifest("train", cfg);
  m["training"] = train_summary(t.result.record);
  m["training"]["frames"] = inputs.size();
  m["preceding_spans"] = opt.preceding_spans;
  if (opt.resume) m["resumed_from"] = opt.resume->generic_string();
  m["validation"] = t.validation;
  m["artifacts"]["model"] = rel(opt.model_out, base);
  if (opt.losses_out) {
    write_loss_csv(*opt.losses_out, t.result.record);
    m["artifacts"]["losses"] = rel(*opt.losses_out, base);
  }
  if (opt.validation_out) {
    write_json(*opt.validation_out, t.validation);
    m["artifacts"]["validation"] = rel(*opt.validation_out, base);
  }
  write_json(manifest_path_for(opt.model_out, false), m);
  if (t.result.record.diverged) {
    throw DivergenceError("training diverged at step " + std::to_string(t.result.record.history.size()) +
                          "; the lowest-loss parameters were saved");
  }
  return m;
}

// predict ---------------------------------------------------------------------

json cmd_predict(const ExperimentConfig& cfg, const PredictOptions& opt) {
  const DeepOnet op(load_model(opt.model));
  const ComplexSignal in = read_fsig(opt.input);
  const std::vector<double> zs = opt.z_km.empty() ? std::vector<double>{cfg.fiber.length_km} : opt.z_km;
  json m = make_manifest("predict", cfg);
  m["model"] = opt.model.generic_string();
  m["input"] = opt.input.generic_string();
  json outs = json::array();
  for (std::size_t i = 0; i < zs.size(); ++i) {
    if (!(zs[i] >= 0.0) || !std::isfinite(zs[i])) throw ConfigError("prediction distances must be finite and >= 0");
    const fs::path p = opt.out_dir / indexed("pred", i, ".fsig");
    write_fsig(p, operator_span(in, op, cfg.framing, zs[i]));
    outs.push_back({{"z_km", zs[i]}, {"file", rel(p, opt.out_dir)}});
  }
  m["artifacts"]["predictions"] = outs;
  write_json(manifest_path_for(opt.out_dir, true), m);
  return m;
}

// link ------------------------------------------------------------------------

json cmd_link(const ExperimentConfig& cfg, const LinkOptions& opt) {
  const LinkConfig lc = cfg.link_config();
  struct Job {
    ComplexSignal signal;
    std::optional<double> power_dbm;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  if (opt.input) {
    jobs.push_back({read_fsig(*opt.input), std::nullopt, cfg.seeds.link});
  } else {
    for (std::size_t i = 0; i < cfg.transmitter.powers_dbm.size(); ++i) {
      const auto s = launch(cfg, i, cfg.transmitter.test_symbols, cfg.seeds.test);
      write_fsig(opt.out_dir / indexed("tx", i, ".fsig"), s.signal);
      write_bits(opt.out_dir / indexed("bits", i, ".bits"), s.bits);
      jobs.push_back({s.signal, s.launch_power_dbm, mix_seed(cfg.seeds.link, i)});
    }
  }
  json m = make_manifest("link", cfg);
  json runs = json::array();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const LinkResult r = run_link(jobs[j].signal, lc, true, jobs[j].seed);
    json run{{"seed", jobs[j].seed}, {"spans", json::array()}};
    if (jobs[j].power_dbm) {
      run["power_dbm"] = *jobs[j].power_dbm;
      run["input"] = indexed("tx", j, ".fsig");
      run["bits"] = indexed("bits", j, ".bits");
    } else {
      run["input"] = opt.input->generic_string();
    }
    for (std::size_t s = 0; s < r.per_span.size(); ++s) {
      const fs::path p = opt.out_dir / ("run_" + std::to_string(j) + "_span_" + std::to_string(s + 1) + ".fsig");
      write_fsig(p, r.per_span[s]);
      run["spans"].push_back({{"file", rel(p, opt.out_dir)},
                              {"gain_db", lc.span_gain_db(s)},
                              {"noise_seed", span_noise_seed(jobs[j].seed, s)},
                              {"power_dbm", watts_to_dbm(mean_power(r.per_span[s]))}});
    }
    runs.push_back(std::move(run));
  }
  m["artifacts"]["runs"] = runs;
  write_json(manifest_path_for(opt.out_dir, true), m);
  return m;
}

// dbp -------------------------------------------------------------------------

json cmd_dbp(const ExperimentConfig& cfg, const fs::path& input, const fs::path& output) {
  const ComplexSignal rx = read_fsig(input);
  LinkConfig lc = cfg.link_config();
  lc.propagator = PropagatorKind::ssfm;
  lc.models.clear();
  write_fsig(output, dbp(rx, lc, cfg.dbp.steps_per_span));
  json m = make_manifest("dbp", cfg);
  m["input"] = input.generic_string();
  m["artifacts"]["output"] = output.filename().generic_string();
  write_json(manifest_path_for(output, false), m);
  return m;
}

// metrics ---------------------------------------------------------------------

json cmd_metrics(const ExperimentConfig& cfg, const MetricsOptions& opt) {
  const ComplexSignal rx = read_fsig(opt.received);
  const auto bits = read_bits(opt.bits);
  std::optional<ComplexSignal> ref;
  if (opt.reference) ref = read_fsig(*opt.reference);
  std::optional<double> power_w;
  if (opt.power_dbm) power_w = dbm_to_watts(*opt.power_dbm);
  const auto fmt = cfg.transmitter.format;
  const MetricsReport r =
      compute_metrics(rx, bits, fmt, cfg.transmitter.rolloff, cfg.framing, ref ? &*ref : nullptr, power_w);

  json m = make_manifest("metrics", cfg);
  m["received"] = opt.received.generic_string();
  json result = metrics_json(r);
  if (ref) {
    result["mse"] = mse_summary(r.mse_per_symbol);
    write_csv_column(opt.out_dir / "mse.csv", "mse", r.mse_per_symbol);
    m["artifacts"]["mse"] = "mse.csv";
  }
  const Demodulated d = demodulate(rx, fmt, cfg.transmitter.rolloff, true);
  constellation_export(d.symbols, d.decided, normalize_power(map_bits(bits, fmt)), opt.out_dir / "constellation.csv");
  m["artifacts"]["constellation"] = "constellation.csv";
  write_json(opt.out_dir / "metrics.json", result);
  m["artifacts"]["metrics"] = "metrics.json";
  m["metrics"] = result;
  write_json(manifest_path_for(opt.out_dir, true), m);
  return m;
}

// bench -----------------------------------------------------------------------

const BenchRow* BenchReport::find(std::string_view method, double distance_km, std::int64_t n_symbols) const {
  for (const auto& r : rows) {
    if (r.method == method && r.distance_km == distance_km && r.n_symbols == n_symbols) return &r;
  }
  return nullptr;
}

json BenchReport::to_json() const {
  json j = json::array();
  for (const auto& r : rows) {
    j.push_back({{"method", r.method},
                 {"distance_km", r.distance_km},
                 {"n_symbols", r.n_symbols},
                 {"median_seconds", r.median_seconds},
                 {"iterations", r.iterations},
                 {"normalized", r.normalized}});
  }
  return j;
}

BenchReport cmd_bench(const ExperimentConfig& cfg, const BenchOptions& opt) {
  if (opt.models.empty()) throw MissingArtifactError("bench needs at least one trained model for the pino rows");
  std::vector<DeepOnet> nets;
  for (const auto& p : opt.models) {
    if (!fs::exists(p)) throw MissingArtifactError("model file '" + p.string() + "' not found");
    nets.emplace_back(load_model(p));
  }
  LinkConfig base = cfg.link_config();
  base.propagator = PropagatorKind::ssfm;
  base.models.clear();
  const SpanConfig span = base.spans.empty() ? SpanConfig{cfg.fiber, EdfaSpec{}, true} : base.spans.front();

  BenchReport report;
  for (std::size_t n_idx = 0; n_idx < cfg.bench.n_symbols.size(); ++n_idx) {
    const std::int64_t n = cfg.bench.n_symbols[n_idx];
    const ComplexSignal sig = make_launched_signal(cfg.transmitter_config(), 0.0, n,
                                                   mix_seed(cfg.seeds.test, 1000 + n_idx))
                                  .signal;
    double ssfm_ref = 0.0, pino_ref = 0.0;
    for (std::size_t d_idx = 0; d_idx < cfg.bench.distances_km.size(); ++d_idx) {
      const double d = cfg.bench.distances_km[d_idx];
      const int spans = static_cast<int>(std::lround(d / cfg.fiber.length_km));
      LinkConfig lc = base;
      lc.spans.assign(static_cast<std::size_t>(spans), span);
      std::vector<const FieldOperator*> ops;
      for (int s = 0; s < spans; ++s) ops.push_back(&nets[static_cast<std::size_t>(s) % nets.size()]);

      log_info("bench: " + std::to_string(n) + " symbols, " + std::to_string(d) + " km");
      const double t_ssfm = time_median(cfg.bench.warmup, cfg.bench.iterations,
                                        [&] { (void)run_link(sig, lc, false, cfg.seeds.link); });
      const double t_pino = time_median(cfg.bench.warmup, cfg.bench.iterations,
                                        [&] { (void)run_link(sig, lc, ops, false, cfg.seeds.link); });
      if (d_idx == 0) {
        ssfm_ref = t_ssfm;
        pino_ref = t_pino / spans;
      }
      report.rows.push_back({"ssfm", d, n, t_ssfm, cfg.bench.iterations, t_ssfm / ssfm_ref});
      report.rows.push_back({"pino", d, n, t_pino, cfg.bench.iterations, t_pino / spans / pino_ref});
    }
  }

  fs::create_directories(opt.out_dir);
  {
    std::ofstream out(opt.out_dir / "bench.csv");
    if (!out) throw Error("cannot write bench.csv");
    out << "method,distance_km,n_symbols,median_seconds,iterations,normalized\n" << std::setprecision(17);
    for (const auto& r : report.rows) {
      out << r.method << ',' << r.distance_km << ',' << r.n_symbols << ',' << r.median_seconds << ','
          << r.iterations << ',' << r.normalized << '\n';
    }
  }
  json m = make_manifest("bench", cfg);
  m["models"] = json::array();
  for (const auto& p : opt.models) m["models"].push_back(p.generic_string());
  m["rows"] = report.to_json();
  json speedups = json::array();
  for (auto n : cfg.bench.n_symbols) {
    for (double d : cfg.bench.distances_km) {
      const auto* s = report.find("ssfm", d, n);
      const auto* p = report.find("pino", d, n);
      speedups.push_back({{"n_symbols", n}, {"distance_km", d}, {"speedup", s->median_seconds / p->median_seconds}});
    }
  }
  m["speedups"] = speedups;
  m["artifacts"]["csv"] = "bench.csv";
  write_json(opt.out_dir / "bench.json", m);
  return report;
}

// reproduce -------------------------------------------------------------------

std::vector<std::string> timing_artifacts() { return {"bench/bench.csv", "bench/bench.json"}; }

json cmd_reproduce(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  if (cfg.link.spans < 1) throw ConfigError("reproduce needs at least one span");
  fs::create_directories(out_dir);
  json manifest = make_manifest("reproduce", cfg);
  manifest["profile"] = to_string(cfg.profile);
  manifest["timing_artifacts"] = timing_artifacts();
  manifest["timing_fields"] = {"summary.json:timing"};
  json& artifacts = manifest["artifacts"];
  json timing{{"stage_seconds", json::object()}};
  std::string stage;
  auto begin = [&](const char* name) {
    stage = name;
    log_info("reproduce: stage " + stage);
    return Clock::now();
  };
  auto end = [&](Clock::time_point t0) { timing["stage_seconds"][stage] = seconds_since(t0); };

  const std::size_t n_powers = cfg.transmitter.powers_dbm.size();
  const int n_spans = cfg.link.spans;
  try {
    // data
    auto t0 = begin("data");
    std::vector<LaunchedSignal> test;
    for (std::size_t i = 0; i < n_powers; ++i) {
      test.push_back(launch(cfg, i, cfg.transmitter.test_symbols, cfg.seeds.test));
      const fs::path sig = out_dir / "data" / indexed("tx", i, ".fsig");
      const fs::path bits = out_dir / "data" / indexed("bits", i, ".bits");
      write_fsig(sig, test.back().signal);
      write_bits(bits, test.back().bits);
      artifacts["data"].push_back({{"power_dbm", cfg.transmitter.powers_dbm[i]},
                                   {"signal", rel(sig, out_dir)},
                                   {"bits", rel(bits, out_dir)}});
    }
    end(t0);

    // train: the first span from scratch, later spans warm-started
    t0 = begin("train");
    std::vector<OperatorParams> models;
    json validation = json::array();
    json training = json::array();
    for (int k = 0; k < n_spans; ++k) {
      const bool first = k == 0;
      const OperatorParams init = first ? init_operator(cfg.architecture(), cfg.coord_scales(), cfg.seeds.init)
                                        : transfer_init(models.back());
      const auto frames = training_frames(cfg, k);
      const SpanTraining t =
          train_span(cfg, k, init, first ? cfg.train_config(cfg.training.steps) : cfg.transfer_config(), frames);
      if (t.result.record.diverged) {
        throw DivergenceError("span " + std::to_string(k + 1) + " training diverged at step " +
                              std::to_string(t.result.record.history.size()));
      }
      const fs::path model = out_dir / "models" / ("span_" + std::to_string(k + 1) + ".pino");
      const fs::path losses = out_dir / "models" / ("losses_span_" + std::to_string(k + 1) + ".csv");
      save_model(model, t.result.params);
      write_loss_csv(losses, t.result.record);
      artifacts["models"].push_back(rel(model, out_dir));
      artifacts["losses"].push_back(rel(losses, out_dir));
      json ts = train_summary(t.result.record);
      ts["span"] = k + 1;
      ts["frames"] = frames.size();
      training.push_back(std::move(ts));
      validation.push_back({{"span", k + 1}, {"per_power", t.validation}});
      models.push_back(t.result.params);
    }
    end(t0);

    t0 = begin("validate");
    write_json(out_dir / "validation" / "validation.json", validation);
    write_json(out_dir / "validation" / "training.json", training);
    artifacts["validation"] = "validation/validation.json";
    artifacts["training"] = "validation/training.json";
    end(t0);

    // link: both propagators see the same launches and amplifier noise
    t0 = begin("link");
    const LinkConfig lc = leading_spans(cfg, n_spans);
    std::vector<DeepOnet> nets(models.begin(), models.end());
    std::vector<const FieldOperator*> ops;
    for (const auto& n : nets) ops.push_back(&n);
    std::vector<ComplexSignal> rx_ssfm, rx_pino;
    for (std::size_t i = 0; i < n_powers; ++i) {
      const std::uint64_t seed = mix_seed(cfg.seeds.link, i);
      const LinkResult a = run_link(test[i].signal, lc, true, seed);
      const LinkResult b = run_link(test[i].signal, lc, ops, true, seed);
      for (int s = 0; s < n_spans; ++s) {
        const std::string tag = "_p" + std::to_string(i) + "_span_" + std::to_string(s + 1) + ".fsig";
        write_fsig(out_dir / "link" / ("ssfm" + tag), a.per_span[static_cast<std::size_t>(s)]);
        write_fsig(out_dir / "link" / ("pino" + tag), b.per_span[static_cast<std::size_t>(s)]);
        artifacts["link"].push_back("link/ssfm" + tag);
        artifacts["link"].push_back("link/pino" + tag);
      }
      json seeds = json::array();
      for (int s = 0; s < n_spans; ++s) seeds.push_back(span_noise_seed(seed, static_cast<std::size_t>(s)));
      manifest["link_noise_seeds"].push_back({{"power_dbm", cfg.transmitter.powers_dbm[i]}, {"seeds", seeds}});
      rx_ssfm.push_back(a.output);
      rx_pino.push_back(b.output);
    }
    end(t0);

    t0 = begin("dbp");
    std::vector<ComplexSignal> eq_ssfm, eq_pino;
    for (std::size_t i = 0; i < n_powers; ++i) {
      eq_ssfm.push_back(dbp(rx_ssfm[i], lc, cfg.dbp.steps_per_span));
      eq_pino.push_back(dbp(rx_pino[i], lc, cfg.dbp.steps_per_span));
      const std::string tag = "_p" + std::to_string(i) + ".fsig";
      write_fsig(out_dir / "dbp" / ("ssfm" + tag), eq_ssfm.back());
      write_fsig(out_dir / "dbp" / ("pino" + tag), eq_pino.back());
      artifacts["dbp"].push_back("dbp/ssfm" + tag);
      artifacts["dbp"].push_back("dbp/pino" + tag);
    }
    end(t0);

    t0 = begin("metrics");
    json per_power = json::array();
    const auto fmt = cfg.transmitter.format;
    for (std::size_t i = 0; i < n_powers; ++i) {
      const double p_w = dbm_to_watts(cfg.transmitter.powers_dbm[i]);
      const Eigen::VectorXd link_mse = mse_per_symbol(rx_pino[i], rx_ssfm[i], cfg.framing, p_w);
      const MetricsReport ms = compute_metrics(eq_ssfm[i], test[i].bits, fmt, cfg.transmitter.rolloff, cfg.framing);
      const MetricsReport mp = compute_metrics(eq_pino[i], test[i].bits, fmt, cfg.transmitter.rolloff, cfg.framing);
      const std::string p = "_p" + std::to_string(i);
      write_csv_column(out_dir / "metrics" / ("link_mse" + p + ".csv"), "mse", link_mse);
      const Eigen::VectorXcd truth = normalize_power(test[i].symbols);
      for (const auto& [name, sig] : {std::pair{"ssfm", &eq_ssfm[i]}, {"pino", &eq_pino[i]}}) {
        const Demodulated d = demodulate(*sig, fmt, cfg.transmitter.rolloff, true);
        const std::string file = std::string("constellation_") + name + p + ".csv";
        constellation_export(d.symbols, d.decided, truth, out_dir / "metrics" / file);
        artifacts["metrics"].push_back("metrics/" + file);
      }
      artifacts["metrics"].push_back("metrics/link_mse" + p + ".csv");

      const json& v = validation.front()["per_power"][i];
      per_power.push_back({{"power_dbm", cfg.transmitter.powers_dbm[i]},
                           {"fraction_below_5e-3", v["fraction_below_5e-3"]},
                           {"fraction_below_5e-4", v["fraction_below_5e-4"]},
                           {"validation", v},
                           {"link_mse", mse_summary(link_mse)},
                           {"ssfm_after_dbp", metrics_json(ms)},
                           {"pino_after_dbp", metrics_json(mp)}});
    }
    write_json(out_dir / "metrics" / "metrics.json", per_power);
    artifacts["metrics"].push_back("metrics/metrics.json");
    end(t0);

    t0 = begin("bench");
    std::vector<fs::path> model_files;
    for (const auto& a : artifacts["models"]) model_files.push_back(out_dir / a.get<std::string>());
    const BenchReport bench = cmd_bench(cfg, {model_files, out_dir / "bench"});
    artifacts["bench"] = timing_artifacts();
    end(t0);

    json bench_summary = json::array();
    const double d0 = cfg.bench.distances_km.front(), d1 = cfg.bench.distances_km.back();
    for (auto n : cfg.bench.n_symbols) {
      const auto* s1 = bench.find("ssfm", d1, n);
      const auto *p0 = bench.find("pino", d0, n), *p1 = bench.find("pino", d1, n);
      bench_summary.push_back({{"n_symbols", n},
                               {"ssfm_ratio", s1->normalized},
                               {"pino_ratio_per_span", p1->normalized},
                               {"pino_ratio_raw", p1->median_seconds / p0->median_seconds},
                               {"speedup_at_max_distance", s1->median_seconds / p1->median_seconds}});
    }
    timing["bench"] = bench_summary;

    json summary{{"profile", to_string(cfg.profile)},
                 {"version", version_string()},
                 {"per_power", per_power},
                 {"training", training},
                 {"timing", timing}};
    write_json(out_dir / "summary.json", summary);
    artifacts["summary"] = "summary.json";
    manifest["status"] = "ok";
    write_json(out_dir / "manifest.json", manifest);
    return summary;
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["failed_stage"] = stage;
    manifest["error"] = e.what();
    write_json(out_dir / "manifest.json", manifest);
    throw;
  }
}

}  // namespace fiberlab
