#pragma once

#include "fiberlab/deeponet.hpp"
#include "fiberlab/framing.hpp"
#include "fiberlab/link.hpp"
#include "fiberlab/physics.hpp"
#include "fiberlab/ssfm.hpp"
#include "fiberlab/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fiberlab {

enum class Profile { desk, paper };

std::string_view to_string(Profile p) noexcept;
Profile parse_profile(std::string_view name);

struct TransmitterSection {
  ModulationFormat format = ModulationFormat::qam16;
  double symbol_rate_baud = 14e9;
  int samples_per_symbol = 8;
  double rolloff = 0.1;
  double osnr_db = 30.0;
  std::vector<double> powers_dbm{-3.0, 0.0, 3.0};
  std::int64_t train_symbols = 808;
  std::int64_t validation_symbols = 256;
  std::int64_t test_symbols = 2048;
};

struct StepPlanSection {
  StepPlan::Mode mode = StepPlan::Mode::fixed;
  double dz_km = 0.2;
  double max_nonlinear_phase_rad = 0.003;
};

struct LinkSection {
  int spans = 4;
  std::optional<double> gain_db;  // unset: gain equals the span loss
  double noise_figure_db = 5.0;
  double center_frequency_hz = 193.41e12;
  PropagatorKind propagator = PropagatorKind::ssfm;
  std::vector<std::string> models;
};

struct NetworkSection {
  std::vector<int> trunk_hidden{64, 64, 64};
  std::vector<int> branch_hidden{64, 64};
  int q_embed = 64;
  double trunk_time_init_scale = 150.0;
  double branch_input_init_scale = 0.03;
};

struct TrainingSection {
  std::int64_t steps = 4000;
  int batch_frames = 16;
  double learning_rate = 3e-3;
  double lr_decay_factor = 0.5;
  std::int64_t lr_decay_interval = 1200;
  double w_pde = 1.0;
  double w_ic = 10.0;
  Eigen::Index collocation_count = 512;
  std::int64_t validation_every = 500;
  /// Steps for spans 2..K, each warm-started from the previous span.
  std::int64_t transfer_steps = 500;
  /// Constant rate for warm starts. A fresh Adam state at the initial rate
  /// throws a converged operator well off its minimum.
  double transfer_learning_rate = 1e-4;
};

struct DbpSection {
  std::optional<int> steps_per_span;  // unset: the link's own step plan
};

struct BenchSection {
  std::vector<double> distances_km{80.0, 160.0, 240.0, 320.0};
  std::vector<std::int64_t> n_symbols{8192};
  int iterations = 5;
  int warmup = 1;
};

/// Named seeds; every random draw in a run derives from one of these.
struct SeedSection {
  std::uint64_t data = 1;
  std::uint64_t init = 2;
  std::uint64_t train = 3;
  std::uint64_t link = 4;
  std::uint64_t validation = 5;
  std::uint64_t test = 6;
};

struct ExperimentConfig {
  Profile profile = Profile::desk;
  TransmitterSection transmitter;
  FramingSpec framing;
  FiberParams fiber;
  StepPlanSection step_plan;
  LinkSection link;
  NetworkSection network;
  TrainingSection training;
  DbpSection dbp;
  BenchSection bench;
  SeedSection seeds;
  std::filesystem::path output_dir = "runs/desk";

  /// Defaults of a profile: desk is sized for a laptop in minutes, paper
  /// keeps the published constants (16 SPS, 2^13 test, 2^17 bench, 20k steps).
  static ExperimentConfig defaults(Profile profile);

  void validate() const;

  TransmitterConfig transmitter_config() const;
  StepPlan plan() const;
  LinkConfig link_config() const;
  OperatorArchitecture architecture() const;
  /// z spans one fiber length and t one frame.
  CoordScales coord_scales() const;
  TrainConfig train_config(std::int64_t steps) const;
  /// Warm-start schedule: transfer_steps at transfer_learning_rate, no decay.
  TrainConfig transfer_config() const;
};

/// Strict conversion: unknown keys and wrong types raise ConfigError naming
/// the offending path. Missing keys keep the profile defaults; the profile is
/// read first so that its defaults apply.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Reads a JSON config file (ConfigError on parse failure).
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" overrides to a config document. The value is parsed
/// as JSON when possible and taken as a string otherwise. Keys that do not
/// exist in the resolved config are rejected.
nlohmann::json apply_overrides(nlohmann::json doc, const std::vector<std::string>& assignments);

/// Version string baked in at configure time (project version plus git describe).
std::string version_string();

}  // namespace fiberlab
