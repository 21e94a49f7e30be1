#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fiberlab/error.hpp"
#include "fiberlab/log.hpp"
#include "fiberlab/pipeline.hpp"
#include "fiberlab/receiver.hpp"
#include "fiberlab/signal_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace fiberlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Small enough that every command finishes in well under a second.
ExperimentConfig tiny() {
  auto c = ExperimentConfig::defaults(Profile::desk);
  c.transmitter.train_symbols = 64;
  c.transmitter.validation_symbols = 64;
  c.transmitter.test_symbols = 128;
  c.transmitter.samples_per_symbol = 4;
  c.step_plan.dz_km = 2.0;
  c.network = {{16, 16}, {16}, 16, 150.0, 0.03};
  c.training.steps = 30;
  c.training.transfer_steps = 10;
  c.training.validation_every = 10;
  c.training.collocation_count = 32;
  c.training.batch_frames = 4;
  c.bench.n_symbols = {128};
  c.bench.distances_km = {80.0, 160.0};
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

double rms(const Eigen::VectorXcd& v) { return std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct QuietLogs {
  LogLevel saved = log_level();
  QuietLogs() { set_log_level(LogLevel::error); }
  ~QuietLogs() { set_log_level(saved); }
};

}  // namespace

TEST_CASE("bit files round trip and reject corruption") {
  TempDir dir("fiberlab_test_bits");
  const std::vector<std::uint8_t> bits{1, 0, 0, 1, 1, 1, 0};
  write_bits(dir.path / "b.bits", bits);
  CHECK(read_bits(dir.path / "b.bits") == bits);
  CHECK_THROWS_AS(write_bits(dir.path / "c.bits", std::vector<std::uint8_t>{2}), DimensionError);
  write_file_bytes(dir.path / "x.bits", std::vector<std::uint8_t>{'F', 'B', 'I', 'T', 9, 0, 0, 0, 0, 0, 0, 0, 1});
  CHECK_THROWS_AS(read_bits(dir.path / "x.bits"), CorruptionError);
  CHECK_THROWS_AS(read_bits(dir.path / "absent.bits"), MissingArtifactError);
}

TEST_CASE("gen writes one launch per power with a full manifest") {
  TempDir dir("fiberlab_test_gen");
  const auto cfg = tiny();
  const json m = cmd_gen(cfg, {dir.path, 0, std::nullopt});
  CHECK(m["command"] == "gen");
  CHECK(m["version"] == version_string());
  CHECK(m["config"] == to_json(cfg));
  REQUIRE(m["artifacts"]["signals"].size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& s = m["artifacts"]["signals"][i];
    const auto sig = read_fsig(dir.path / s["signal"].get<std::string>());
    const auto bits = read_bits(dir.path / s["bits"].get<std::string>());
    CHECK(sig.grid.n_symbols == 128);
    CHECK(bits.size() == 128 * 4);
    CHECK(s["power_dbm"] == cfg.transmitter.powers_dbm[i]);
  }
  CHECK(read_json(dir.path / "manifest.json") == m);
}

TEST_CASE("propagate matches the solver and dumps snapshots") {
  TempDir dir("fiberlab_test_propagate");
  const auto cfg = tiny();
  cmd_gen(cfg, {dir.path, 0, std::nullopt});
  const json m = cmd_propagate(cfg, {dir.path / "tx_1.fsig", dir.path / "out.fsig", dir.path / "snap", 20.0});
  StepPlan plan = cfg.plan();
  plan.store_every_km = 20.0;
  const auto expected = propagate(read_fsig(dir.path / "tx_1.fsig"), cfg.fiber, plan).output;
  CHECK(read_fsig(dir.path / "out.fsig") == expected);
  const json snaps = read_json(dir.path / "snap" / "snapshots.json");
  REQUIRE(snaps["snapshots"].size() == 4);
  CHECK(snaps["snapshots"][3]["z_km"].get<double>() == doctest::Approx(80.0));
  CHECK(snaps["fiber"]["length_km"] == 80.0);
  CHECK(read_fsig(dir.path / "snap" / "z_3.fsig") == expected);
  CHECK(fs::exists(dir.path / "out.fsig.manifest.json"));
}

TEST_CASE("link records every span and its noise seed; dbp undoes a noiseless link") {
  TempDir dir("fiberlab_test_link");
  auto cfg = tiny();
  const json m = cmd_link(cfg, {dir.path, std::nullopt});
  const auto& runs = m["artifacts"]["runs"];
  REQUIRE(runs.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    REQUIRE(runs[j]["spans"].size() == 4);
    const auto seed = runs[j]["seed"].get<std::uint64_t>();
    for (std::size_t s = 0; s < 4; ++s) CHECK(runs[j]["spans"][s]["noise_seed"] == span_noise_seed(seed, s));
  }
  // rerunning the last span from the stored input reproduces the recorded output
  const auto tx = read_fsig(dir.path / "tx_0.fsig");
  const auto rerun = run_link(tx, cfg.link_config(), true, runs[0]["seed"].get<std::uint64_t>());
  CHECK(read_fsig(dir.path / runs[0]["spans"][3]["file"].get<std::string>()) == rerun.output);

  cfg.transmitter.osnr_db = kNoiseDisabled;
  cfg.link.noise_figure_db = kNoiseFigureDisabled;
  TempDir clean("fiberlab_test_link_clean");
  const json mc = cmd_link(cfg, {clean.path, std::nullopt});
  const fs::path rx = clean.path / mc["artifacts"]["runs"][2]["spans"][3]["file"].get<std::string>();
  cmd_dbp(cfg, rx, clean.path / "eq.fsig");
  const auto eq = read_fsig(clean.path / "eq.fsig");
  const auto sent = read_fsig(clean.path / "tx_2.fsig");
  CHECK(rms(eq.samples - sent.samples) < 1e-6);
  CHECK(fs::exists(clean.path / "eq.fsig.manifest.json"));

  // and the received, equalised sequence demodulates without errors
  const json mm = cmd_metrics(cfg, {clean.path / "eq.fsig", clean.path / "bits_2.bits", clean.path / "tx_2.fsig",
                                    cfg.transmitter.powers_dbm[2], clean.path / "metrics"});
  CHECK(mm["metrics"]["symbol_errors"] == 0);
  CHECK(mm["metrics"]["mse"]["fraction_below_5e-4"] == 1.0);
  CHECK(fs::exists(clean.path / "metrics" / "constellation.csv"));
  CHECK(fs::exists(clean.path / "metrics" / "mse.csv"));
}

TEST_CASE("train, predict and bench") {
  QuietLogs quiet;
  TempDir dir("fiberlab_test_train");
  const auto cfg = tiny();
  TrainOptions opt;
  opt.model_out = dir.path / "m1.pino";
  opt.losses_out = dir.path / "losses.csv";
  opt.validation_out = dir.path / "validation.json";
  const json m = cmd_train(cfg, opt);
  CHECK(m["training"]["steps_completed"] == 30);
  CHECK(m["training"]["diverged"] == false);
  CHECK(m["validation"].size() == 3);
  const auto model = load_model(opt.model_out);
  CHECK(model.provenance["span"] == 1);
  CHECK(params_digest(model) == m["training"]["digest"]);
  CHECK(fs::exists(dir.path / "losses.csv"));

  // warm start runs transfer_steps from the saved operator
  TrainOptions resume = opt;
  resume.model_out = dir.path / "m2.pino";
  resume.resume = opt.model_out;
  resume.preceding_spans = 1;
  const json m2 = cmd_train(cfg, resume);
  CHECK(m2["training"]["steps_completed"] == 10);
  CHECK(load_model(resume.model_out).provenance["span"] == 2);

  cmd_gen(cfg, {dir.path, 0, std::nullopt});
  const json p = cmd_predict(cfg, {opt.model_out, dir.path / "tx_0.fsig", {0.0, 80.0}, dir.path / "pred"});
  REQUIRE(p["artifacts"]["predictions"].size() == 2);
  const auto at_end = read_fsig(dir.path / "pred" / "pred_1.fsig");
  CHECK(at_end == operator_span(read_fsig(dir.path / "tx_0.fsig"), DeepOnet(model), cfg.framing, 80.0));

  CHECK_THROWS_AS(cmd_bench(cfg, {{}, dir.path / "bench"}), MissingArtifactError);
  CHECK_THROWS_AS(cmd_bench(cfg, {{dir.path / "absent.pino"}, dir.path / "bench"}), MissingArtifactError);
  const BenchReport b = cmd_bench(cfg, {{opt.model_out, resume.model_out}, dir.path / "bench"});
  CHECK(b.rows.size() == 4);
  CHECK(b.find("ssfm", 80.0, 128)->normalized == 1.0);
  CHECK(b.find("pino", 80.0, 128)->normalized == 1.0);
  CHECK(b.find("pino", 160.0, 128)->iterations == 5);
  CHECK(fs::exists(dir.path / "bench" / "bench.csv"));
  CHECK(read_json(dir.path / "bench" / "bench.json")["speedups"].size() == 2);
}

TEST_CASE("divergent training saves the best parameters and reports divergence") {
  QuietLogs quiet;
  TempDir dir("fiberlab_test_diverge");
  auto cfg = tiny();
  cfg.training.learning_rate = 1e30;
  TrainOptions opt;
  opt.model_out = dir.path / "m.pino";
  CHECK_THROWS_AS(cmd_train(cfg, opt), DivergenceError);
  CHECK(fs::exists(opt.model_out));
  CHECK(read_json(dir.path / "m.pino.manifest.json")["training"]["diverged"] == true);
}

TEST_CASE("reproduce is deterministic apart from timing, and records a failing stage") {
  QuietLogs quiet;
  TempDir a("fiberlab_test_reproduce_a"), b("fiberlab_test_reproduce_b");
  const auto cfg = tiny();
  const json sa = cmd_reproduce(cfg, a.path);
  const json sb = cmd_reproduce(cfg, b.path);
  CHECK(sa["per_power"].size() == 3);
  CHECK(sa["per_power"][0].contains("fraction_below_5e-4"));
  CHECK(sa["timing"]["bench"].size() == 1);

  const auto timing = timing_artifacts();
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path)) {
    if (!e.is_regular_file()) continue;
    const std::string r = fs::relative(e.path(), a.path).generic_string();
    if (std::find(timing.begin(), timing.end(), r) != timing.end()) continue;
    if (r == "summary.json") {
      json ja = read_json(e.path()), jb = read_json(b.path / r);
      ja.erase("timing");
      jb.erase("timing");
      CHECK(ja == jb);
    } else {
      INFO(r);
      CHECK(slurp(e.path()) == slurp(b.path / r));
    }
    ++compared;
  }
  CHECK(compared > 40);
  const json manifest = read_json(a.path / "manifest.json");
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["config"] == to_json(cfg));

  TempDir c("fiberlab_test_reproduce_fail");
  auto bad = cfg;
  bad.training.learning_rate = 1e30;
  CHECK_THROWS_AS(cmd_reproduce(bad, c.path), DivergenceError);
  const json failed = read_json(c.path / "manifest.json");
  CHECK(failed["status"] == "failed");
  CHECK(failed["failed_stage"] == "train");
  CHECK(failed["artifacts"]["data"].size() == 3);
}
