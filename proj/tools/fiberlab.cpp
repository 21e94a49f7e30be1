// Command-line front end: one subcommand per pipeline stage.

#include "fiberlab/config.hpp"
#include "fiberlab/error.hpp"
#include "fiberlab/log.hpp"
#include "fiberlab/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace fiberlab;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set training.steps=100")->take_all();
  cmd->add_flag("-q,--quiet", c.quiet, "Only log warnings and errors");
}

ExperimentConfig resolve(const Common& c, std::vector<std::string> extra = {}) {
  nlohmann::json doc = nlohmann::json::object();
  if (!c.config_file.empty()) doc = to_json(load_config(c.config_file));
  extra.insert(extra.end(), c.overrides.begin(), c.overrides.end());
  return config_from_json(apply_overrides(doc, extra));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fiberlab: fiber channel simulation with split-step and learned operators"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  Common common;

  // gen
  GenOptions gen;
  std::uint64_t gen_seed = 0;
  auto* c_gen = app.add_subcommand("gen", "Generate launched test sequences, one per configured power");
  add_common(c_gen, common);
  c_gen->add_option("--out", gen.out_dir, "Output directory")->required();
  c_gen->add_option("--symbols", gen.n_symbols, "Symbols per sequence (default transmitter.test_symbols)");
  auto* gen_seed_opt = c_gen->add_option("--seed", gen_seed, "Seed (default seeds.test)");

  // propagate
  PropagateOptions prop;
  std::string snap_dir;
  double store_every = 0.0;
  auto* c_prop = app.add_subcommand("propagate", "Propagate one FSIG sequence through one fiber span");
  add_common(c_prop, common);
  c_prop->add_option("--in", prop.input, "Input FSIG")->required();
  c_prop->add_option("--out", prop.output, "Output FSIG")->required();
  c_prop->add_option("--snapshots", snap_dir, "Directory for field snapshots");
  auto* store_opt = c_prop->add_option("--store-every", store_every, "Snapshot spacing in km");

  // train
  TrainOptions tr;
  std::string tr_losses, tr_resume, tr_validation;
  std::int64_t tr_steps = 0;
  auto* c_train = app.add_subcommand("train", "Train a span operator with the physics loss");
  add_common(c_train, common);
  c_train->add_option("--out", tr.model_out, "Model file to write")->required();
  c_train->add_option("--losses", tr_losses, "Loss history CSV");
  c_train->add_option("--resume", tr_resume, "Warm-start from this model (uses training.transfer_steps)");
  c_train->add_option("--inputs", tr.inputs, "Training input FSIG files (default: generated)");
  c_train->add_option("--preceding-spans", tr.preceding_spans, "Spans crossed before the learned one");
  auto* steps_opt = c_train->add_option("--steps", tr_steps, "Override the step count");
  c_train->add_option("--validation", tr_validation, "Held-out validation report (JSON)");

  // predict
  PredictOptions pr;
  auto* c_pred = app.add_subcommand("predict", "Evaluate a trained operator on a sequence");
  add_common(c_pred, common);
  c_pred->add_option("--model", pr.model, "Model file")->required();
  c_pred->add_option("--in", pr.input, "Input FSIG")->required();
  c_pred->add_option("--z", pr.z_km, "Distances in km (default: span end)");
  c_pred->add_option("--out", pr.out_dir, "Output directory")->required();

  // link
  LinkOptions ln;
  std::string ln_in;
  auto* c_link = app.add_subcommand("link", "Run the multi-span link with amplifier noise");
  add_common(c_link, common);
  c_link->add_option("--out", ln.out_dir, "Output directory")->required();
  c_link->add_option("--in", ln_in, "Input FSIG (default: generated launches per power)");

  // dbp
  std::string dbp_in, dbp_out;
  auto* c_dbp = app.add_subcommand("dbp", "Digital back-propagation of a received sequence");
  add_common(c_dbp, common);
  c_dbp->add_option("--in", dbp_in, "Received FSIG")->required();
  c_dbp->add_option("--out", dbp_out, "Output FSIG")->required();

  // metrics
  MetricsOptions mt;
  std::string mt_ref;
  double mt_power = 0.0;
  auto* c_met = app.add_subcommand("metrics", "EVM, errors, per-symbol MSE and constellation CSV");
  add_common(c_met, common);
  c_met->add_option("--in", mt.received, "Received FSIG")->required();
  c_met->add_option("--bits", mt.bits, "Transmitted bit file")->required();
  c_met->add_option("--reference", mt_ref, "Reference FSIG for the per-symbol MSE");
  auto* power_opt = c_met->add_option("--power-dbm", mt_power, "MSE normalisation power (default: reference)");
  c_met->add_option("--out", mt.out_dir, "Output directory")->required();

  // bench
  BenchOptions bn;
  auto* c_bench = app.add_subcommand("bench", "Time split-step and learned propagation");
  add_common(c_bench, common);
  c_bench->add_option("--models", bn.models, "Span model files (cycled over the spans)");
  c_bench->add_option("--out", bn.out_dir, "Output directory")->required();

  // reproduce
  std::string profile;
  std::string rp_out;
  auto* c_rep = app.add_subcommand("reproduce", "Run the whole experiment");
  add_common(c_rep, common);
  c_rep->add_option("--profile", profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  c_rep->add_option("--out", rp_out, "Output directory (default: output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  set_log_level(common.quiet ? LogLevel::warning : LogLevel::info);
  try {
    if (c_gen->parsed()) {
      if (gen_seed_opt->count()) gen.seed = gen_seed;
      cmd_gen(resolve(common), gen);
    } else if (c_prop->parsed()) {
      if (!snap_dir.empty()) prop.snapshot_dir = snap_dir;
      if (store_opt->count()) prop.store_every_km = store_every;
      cmd_propagate(resolve(common), prop);
    } else if (c_train->parsed()) {
      if (!tr_losses.empty()) tr.losses_out = tr_losses;
      if (!tr_resume.empty()) tr.resume = tr_resume;
      if (!tr_validation.empty()) tr.validation_out = tr_validation;
      if (steps_opt->count()) tr.steps = tr_steps;
      cmd_train(resolve(common), tr);
    } else if (c_pred->parsed()) {
      cmd_predict(resolve(common), pr);
    } else if (c_link->parsed()) {
      if (!ln_in.empty()) ln.input = ln_in;
      cmd_link(resolve(common), ln);
    } else if (c_dbp->parsed()) {
      cmd_dbp(resolve(common), dbp_in, dbp_out);
    } else if (c_met->parsed()) {
      if (!mt_ref.empty()) mt.reference = mt_ref;
      if (power_opt->count()) mt.power_dbm = mt_power;
      cmd_metrics(resolve(common), mt);
    } else if (c_bench->parsed()) {
      const auto cfg = resolve(common);
      if (bn.models.empty()) {
        for (const auto& m : cfg.link.models) bn.models.emplace_back(m);
      }
      cmd_bench(cfg, bn);
    } else if (c_rep->parsed()) {
      std::vector<std::string> extra;
      if (!profile.empty()) extra.push_back("profile=\"" + profile + "\"");
      const auto cfg = resolve(common, extra);
      const auto summary = cmd_reproduce(cfg, rp_out.empty() ? cfg.output_dir : fs::path(rp_out));
      std::cout << summary["per_power"].dump(2) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::failure);
  }
  return 0;
}
