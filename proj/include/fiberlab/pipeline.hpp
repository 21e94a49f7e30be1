#pragma once

#include "fiberlab/config.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fiberlab {

/// Skeleton shared by every command: command name, build version and the
/// fully resolved configuration.
nlohmann::json make_manifest(std::string_view command, const ExperimentConfig& cfg);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Manifest location for an output: `<dir>/manifest.json` for directories,
/// `<file>.manifest.json` otherwise.
std::filesystem::path manifest_path_for(const std::filesystem::path& out, bool is_directory);

// gen -------------------------------------------------------------------------

struct GenOptions {
  std::filesystem::path out_dir;
  std::int64_t n_symbols = 0;          // 0: transmitter.test_symbols
  std::optional<std::uint64_t> seed;   // unset: seeds.test
};

/// One launched sequence per configured power: tx_<i>.fsig and bits_<i>.bits.
nlohmann::json cmd_gen(const ExperimentConfig& cfg, const GenOptions& opt);

// propagate -------------------------------------------------------------------

struct PropagateOptions {
  std::filesystem::path input;
  std::filesystem::path output;
  std::optional<std::filesystem::path> snapshot_dir;
  std::optional<double> store_every_km;
};

/// One fiber span with the split-step solver; optional snapshots are written
/// as one FSIG per recorded distance plus snapshots.json.
nlohmann::json cmd_propagate(const ExperimentConfig& cfg, const PropagateOptions& opt);

// train -----------------------------------------------------------------------

struct TrainOptions {
  std::filesystem::path model_out;
  std::optional<std::filesystem::path> losses_out;
  std::optional<std::filesystem::path> resume;
  /// Input sequences (FSIG); empty: generated launches.
  std::vector<std::filesystem::path> inputs;
  /// Spans the generated training and validation signals cross before the
  /// span being learned (0 for the first span).
  int preceding_spans = 0;
  std::optional<std::int64_t> steps;  // unset: steps, or transfer_steps when resuming
  /// Optional JSON report of the held-out validation.
  std::optional<std::filesystem::path> validation_out;
};

nlohmann::json cmd_train(const ExperimentConfig& cfg, const TrainOptions& opt);

// predict ---------------------------------------------------------------------

struct PredictOptions {
  std::filesystem::path model;
  std::filesystem::path input;
  std::vector<double> z_km;  // empty: the span end
  std::filesystem::path out_dir;
};

/// pred_<i>.fsig for every requested distance.
nlohmann::json cmd_predict(const ExperimentConfig& cfg, const PredictOptions& opt);

// link ------------------------------------------------------------------------

struct LinkOptions {
  std::filesystem::path out_dir;
  /// Input sequence; unset: one generated test launch per configured power.
  std::optional<std::filesystem::path> input;
};

/// Per-span FSIG files plus the noise seeds of every amplifier.
nlohmann::json cmd_link(const ExperimentConfig& cfg, const LinkOptions& opt);

// dbp -------------------------------------------------------------------------

nlohmann::json cmd_dbp(const ExperimentConfig& cfg, const std::filesystem::path& input,
                       const std::filesystem::path& output);

// metrics ---------------------------------------------------------------------

struct MetricsOptions {
  std::filesystem::path received;
  std::filesystem::path bits;
  std::optional<std::filesystem::path> reference;
  std::optional<double> power_dbm;  // MSE normalisation; unset: reference power
  std::filesystem::path out_dir;
};

/// metrics.json, mse.csv (with a reference) and constellation.csv.
nlohmann::json cmd_metrics(const ExperimentConfig& cfg, const MetricsOptions& opt);

// bench -----------------------------------------------------------------------

struct BenchRow {
  std::string method;  // "ssfm" or "pino"
  double distance_km = 0.0;
  std::int64_t n_symbols = 0;
  double median_seconds = 0.0;
  int iterations = 0;
  /// ssfm: t / t(first distance). pino: per span evaluation,
  /// (t / spans) / (t(first distance) / spans(first distance)).
  double normalized = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  const BenchRow* find(std::string_view method, double distance_km, std::int64_t n_symbols) const;
  nlohmann::json to_json() const;
};

struct BenchOptions {
  std::vector<std::filesystem::path> models;  // cycled when fewer than the spans
  std::filesystem::path out_dir;
};

/// Times both propagators over the configured distances and sizes; writes
/// bench.csv and bench.json.
BenchReport cmd_bench(const ExperimentConfig& cfg, const BenchOptions& opt);

// reproduce -------------------------------------------------------------------

/// Full experiment: data, training (first span, then warm-started spans),
/// held-out validation, SSFM and learned links, back-propagation, metrics and
/// bench. summary.json keeps wall-clock figures under "timing" only. On a
/// failing stage, manifest.json records it and the error is rethrown.
nlohmann::json cmd_reproduce(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Artifacts (relative paths) whose content depends on wall-clock time.
std::vector<std::string> timing_artifacts();

}  // namespace fiberlab
