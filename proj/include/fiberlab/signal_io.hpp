#pragma once

#include "fiberlab/signals.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fiberlab {

inline constexpr std::uint32_t kFsigVersion = 1;

/// Size of the fixed FSIG header:
/// magic(4) version(u32) symbol_rate(f64) samples_per_symbol(u32) n_symbols(u64).
inline constexpr std::size_t kFsigHeaderBytes = 4 + 4 + 8 + 4 + 8;

/// Little-endian FSIG encoding: header followed by interleaved re/im f64.
std::vector<std::uint8_t> encode_fsig(const ComplexSignal& sig);

/// Decodes one FSIG record starting at `offset` and advances it.
/// Throws CorruptionError on bad magic, version or truncation.
ComplexSignal decode_fsig(std::span<const std::uint8_t> bytes, std::size_t& offset);
ComplexSignal decode_fsig(std::span<const std::uint8_t> bytes);

void write_fsig(const std::filesystem::path& path, const ComplexSignal& sig);
ComplexSignal read_fsig(const std::filesystem::path& path);

/// Concatenated FSIG records in one file.
void write_fsig_sequence(const std::filesystem::path& path, std::span<const ComplexSignal> sigs);
std::vector<ComplexSignal> read_fsig_sequence(const std::filesystem::path& path);

/// CSV with header "index,re,im" and 17 significant digits.
void write_signal_csv(const std::filesystem::path& path, const ComplexSignal& sig);

/// Bit sequence file: magic "FBIT", u64 count, one byte (0 or 1) per bit.
void write_bits(const std::filesystem::path& path, std::span<const std::uint8_t> bits);
std::vector<std::uint8_t> read_bits(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

namespace le {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t& offset);
std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& offset);
double get_f64(std::span<const std::uint8_t> in, std::size_t& offset);

}  // namespace le

}  // namespace fiberlab
