#include "fiberlab/framing.hpp"

#include "fiberlab/error.hpp"
#include "fiberlab/log.hpp"
#include "fiberlab/signal_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

namespace fiberlab {

void FramingSpec::validate() const {
  if (core_m <= 0) throw ConfigError("framing core_m must be > 0");
  if (guard_n < 0) throw ConfigError("framing guard_n must be >= 0");
}

std::vector<Frame> split(const ComplexSignal& sig, const FramingSpec& spec, PadPolicy pad) {
  spec.validate();
  ComplexSignal source = sig;
  const std::int64_t m = spec.core_m;
  if (source.grid.n_symbols % m != 0) {
    if (pad == PadPolicy::reject) {
      throw ConfigError("split: " + std::to_string(source.grid.n_symbols) +
                        " symbols is not a multiple of core_m=" + std::to_string(m));
    }
    TimeGrid padded = source.grid;
    padded.n_symbols = (source.grid.n_symbols / m + 1) * m;
    Eigen::VectorXcd samples = Eigen::VectorXcd::Zero(padded.sample_count());
    samples.head(source.size()) = source.samples;
    source = ComplexSignal(padded, std::move(samples));
  }

  const int sps = source.grid.samples_per_symbol;
  const Eigen::Index total = source.size();
  TimeGrid frame_grid = source.grid;
  frame_grid.n_symbols = spec.frame_symbols();
  const Eigen::Index frame_len = frame_grid.sample_count();

  const std::int64_t count = source.grid.n_symbols / m;
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    Frame f{ComplexSignal(frame_grid), k * m};
    const Eigen::Index first = static_cast<Eigen::Index>(k * m - spec.guard_n) * sps;
    for (Eigen::Index j = 0; j < frame_len; ++j) {
      Eigen::Index idx = (first + j) % total;
      if (idx < 0) idx += total;
      f.samples.samples[j] = source.samples[idx];
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

ComplexSignal stitch(std::span<const Frame> frames, const FramingSpec& spec) {
  spec.validate();
  if (frames.empty()) throw ConfigError("stitch: no frames");
  const TimeGrid fg = frames.front().samples.grid;
  if (fg.n_symbols != spec.frame_symbols()) {
    throw DimensionError("stitch: frame has " + std::to_string(fg.n_symbols) +
                         " symbols, spec expects " + std::to_string(spec.frame_symbols()));
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto expected = static_cast<std::int64_t>(i) * spec.core_m;
    const auto got = frames[i].source_core_start;
    if (got != expected) {
      const char* kind = got < expected ? "duplicate or unsorted" : "gap in";
      throw ConfigError(std::string("stitch: ") + kind + " core coverage at frame " + std::to_string(i) +
                        " (source_core_start=" + std::to_string(got) + ", expected " +
                        std::to_string(expected) + ")");
    }
    if (!(frames[i].samples.grid == fg)) {
      throw DimensionError("stitch: frame " + std::to_string(i) + " has a different grid");
    }
  }
  TimeGrid out_grid = fg;
  out_grid.n_symbols = static_cast<std::int64_t>(frames.size()) * spec.core_m;
  ComplexSignal out(out_grid);
  const Eigen::Index core_len = static_cast<Eigen::Index>(spec.core_m) * fg.samples_per_symbol;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out.samples.segment(static_cast<Eigen::Index>(i) * core_len, core_len) =
        frames[i].samples.samples.segment(frames[i].core_begin(spec), core_len);
  }
  return out;
}

double isi_half_width_symbols(const FiberParams& fiber, double symbol_rate, double rolloff) {
  const double bandwidth = (1.0 + rolloff) * symbol_rate;
  const double spread_s =
      std::abs(fiber.beta2_s2_per_km()) * fiber.length_km * 2.0 * std::numbers::pi * bandwidth;
  return spread_s * symbol_rate;
}

bool check_guard_adequacy(const FramingSpec& spec, const FiberParams& fiber, double symbol_rate,
                          double rolloff) {
  const double need = isi_half_width_symbols(fiber, symbol_rate, rolloff);
  if (static_cast<double>(spec.guard_n) < need) {
    log_warning("framing: guard_n=" + std::to_string(spec.guard_n) +
                " symbols is below the dispersion spread of " + std::to_string(need) + " symbols");
    return false;
  }
  return true;
}

void write_frame_batch(const std::filesystem::path& fsig_path, const std::filesystem::path& index_path,
                       std::span<const Frame> frames, const FramingSpec& spec) {
  std::vector<ComplexSignal> sigs;
  nlohmann::json starts = nlohmann::json::array();
  for (const auto& f : frames) {
    sigs.push_back(f.samples);
    starts.push_back(f.source_core_start);
  }
  write_fsig_sequence(fsig_path, sigs);
  nlohmann::json index = {{"core_m", spec.core_m},
                          {"guard_n", spec.guard_n},
                          {"frames", frames.size()},
                          {"source_core_start", starts}};
  std::ofstream out(index_path);
  if (!out) throw Error("cannot write '" + index_path.string() + "'");
  out << index.dump(2) << '\n';
}

std::vector<Frame> read_frame_batch(const std::filesystem::path& fsig_path,
                                    const std::filesystem::path& index_path, FramingSpec& spec) {
  std::ifstream in(index_path);
  if (!in) throw MissingArtifactError("cannot open '" + index_path.string() + "'");
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError("frame index: " + std::string(e.what()));
  }
  spec.core_m = index.at("core_m").get<int>();
  spec.guard_n = index.at("guard_n").get<int>();
  const auto starts = index.at("source_core_start").get<std::vector<std::int64_t>>();
  auto sigs = read_fsig_sequence(fsig_path);
  if (sigs.size() != starts.size()) throw CorruptionError("frame index and FSIG record count differ");
  std::vector<Frame> frames;
  frames.reserve(sigs.size());
  for (std::size_t i = 0; i < sigs.size(); ++i) frames.push_back({std::move(sigs[i]), starts[i]});
  return frames;
}

}  // namespace fiberlab
