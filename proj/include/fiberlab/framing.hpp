#pragma once

#include "fiberlab/signals.hpp"
#include "fiberlab/ssfm.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fiberlab {

/// Overlapped framing: each frame holds `core_m` symbols that are kept and
/// `guard_n` symbols on each side that are discarded on reassembly.
struct FramingSpec {
  int core_m = 8;
  int guard_n = 4;

  int frame_symbols() const noexcept { return core_m + 2 * guard_n; }
  void validate() const;

  friend bool operator==(const FramingSpec&, const FramingSpec&) = default;
};

struct Frame {
  ComplexSignal samples;
  std::int64_t source_core_start = 0;  // symbol index of the first core symbol

  /// Sample range [begin, end) of the core inside `samples`.
  Eigen::Index core_begin(const FramingSpec& spec) const {
    return static_cast<Eigen::Index>(spec.guard_n) * samples.grid.samples_per_symbol;
  }
  Eigen::Index core_end(const FramingSpec& spec) const {
    return core_begin(spec) + static_cast<Eigen::Index>(spec.core_m) * samples.grid.samples_per_symbol;
  }
};

enum class PadPolicy { reject, zero_pad };

/// Frame k covers symbols [k M - N, k M + M + N), wrapping cyclically.
std::vector<Frame> split(const ComplexSignal& sig, const FramingSpec& spec,
                         PadPolicy pad = PadPolicy::reject);

/// Concatenates frame cores. Frames must be sorted and cover the sequence
/// exactly once; violations throw ConfigError naming the offending index.
ComplexSignal stitch(std::span<const Frame> frames, const FramingSpec& spec);

/// Dispersion-induced spread |beta2| L 2 pi B expressed in symbols, with B the
/// occupied bandwidth (1 + rolloff) * symbol_rate.
double isi_half_width_symbols(const FiberParams& fiber, double symbol_rate, double rolloff);

/// Logs a warning and returns false when guard_n is below the ISI spread.
bool check_guard_adequacy(const FramingSpec& spec, const FiberParams& fiber, double symbol_rate,
                          double rolloff);

/// Writes frames as concatenated FSIG records plus a JSON index.
void write_frame_batch(const std::filesystem::path& fsig_path, const std::filesystem::path& index_path,
                       std::span<const Frame> frames, const FramingSpec& spec);
std::vector<Frame> read_frame_batch(const std::filesystem::path& fsig_path,
                                    const std::filesystem::path& index_path, FramingSpec& spec);

}  // namespace fiberlab
