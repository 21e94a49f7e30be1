#include "fiberlab/signal_io.hpp"

#include "fiberlab/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>

namespace fiberlab {

namespace le {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

namespace {

void require(std::span<const std::uint8_t> in, std::size_t offset, std::size_t n) {
  if (offset > in.size() || in.size() - offset < n) {
    throw CorruptionError("payload truncated at byte " + std::to_string(offset) + " (need " +
                          std::to_string(n) + " more, have " +
                          std::to_string(offset > in.size() ? 0 : in.size() - offset) + ")");
  }
}

}  // namespace

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t& offset) {
  require(in, offset, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  offset += 4;
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& offset) {
  require(in, offset, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  offset += 8;
  return v;
}

double get_f64(std::span<const std::uint8_t> in, std::size_t& offset) {
  return std::bit_cast<double>(get_u64(in, offset));
}

}  // namespace le

std::vector<std::uint8_t> encode_fsig(const ComplexSignal& sig) {
  std::vector<std::uint8_t> out;
  out.reserve(kFsigHeaderBytes + static_cast<std::size_t>(sig.size()) * 16);
  for (char c : {'F', 'S', 'I', 'G'}) out.push_back(static_cast<std::uint8_t>(c));
  le::put_u32(out, kFsigVersion);
  le::put_f64(out, sig.grid.symbol_rate);
  le::put_u32(out, static_cast<std::uint32_t>(sig.grid.samples_per_symbol));
  le::put_u64(out, static_cast<std::uint64_t>(sig.grid.n_symbols));
  for (Eigen::Index k = 0; k < sig.size(); ++k) {
    le::put_f64(out, sig.samples[k].real());
    le::put_f64(out, sig.samples[k].imag());
  }
  return out;
}

ComplexSignal decode_fsig(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  if (bytes.size() < offset + 4 || std::memcmp(bytes.data() + offset, "FSIG", 4) != 0) {
    throw CorruptionError("missing FSIG magic at byte " + std::to_string(offset));
  }
  offset += 4;
  const std::uint32_t version = le::get_u32(bytes, offset);
  if (version != kFsigVersion) {
    throw CorruptionError("unsupported FSIG version " + std::to_string(version));
  }
  TimeGrid grid;
  grid.symbol_rate = le::get_f64(bytes, offset);
  grid.samples_per_symbol = static_cast<int>(le::get_u32(bytes, offset));
  grid.n_symbols = static_cast<std::int64_t>(le::get_u64(bytes, offset));
  const auto n = static_cast<std::uint64_t>(grid.sample_count());
  if (grid.n_symbols < 0 || n > (bytes.size() - offset) / 16) {
    throw CorruptionError("FSIG sample payload truncated");
  }
  ComplexSignal sig(grid);
  for (Eigen::Index k = 0; k < sig.size(); ++k) {
    const double re = le::get_f64(bytes, offset);
    const double im = le::get_f64(bytes, offset);
    sig.samples[k] = {re, im};
  }
  return sig;
}

ComplexSignal decode_fsig(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  ComplexSignal sig = decode_fsig(bytes, offset);
  if (offset != bytes.size()) throw CorruptionError("trailing bytes after FSIG record");
  return sig;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

void write_fsig(const std::filesystem::path& path, const ComplexSignal& sig) {
  write_file_bytes(path, encode_fsig(sig));
}

void write_bits(const std::filesystem::path& path, std::span<const std::uint8_t> bits) {
  std::vector<std::uint8_t> bytes{'F', 'B', 'I', 'T'};
  le::put_u64(bytes, bits.size());
  bytes.reserve(bytes.size() + bits.size());
  for (auto b : bits) {
    if (b > 1) throw DimensionError("bit values must be 0 or 1");
    bytes.push_back(b);
  }
  write_file_bytes(path, bytes);
}

std::vector<std::uint8_t> read_bits(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "FBIT", 4) != 0) {
    throw CorruptionError("'" + path.string() + "' is not a bit file");
  }
  std::size_t offset = 4;
  const auto n = le::get_u64(bytes, offset);
  if (bytes.size() - offset != n) throw CorruptionError("bit file length mismatch in '" + path.string() + "'");
  std::vector<std::uint8_t> bits(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  for (auto b : bits) {
    if (b > 1) throw CorruptionError("bit file holds a value other than 0 or 1");
  }
  return bits;
}

ComplexSignal read_fsig(const std::filesystem::path& path) { return decode_fsig(read_file_bytes(path)); }

void write_fsig_sequence(const std::filesystem::path& path, std::span<const ComplexSignal> sigs) {
  std::vector<std::uint8_t> bytes;
  for (const auto& s : sigs) {
    auto rec = encode_fsig(s);
    bytes.insert(bytes.end(), rec.begin(), rec.end());
  }
  write_file_bytes(path, bytes);
}

std::vector<ComplexSignal> read_fsig_sequence(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::vector<ComplexSignal> out;
  std::size_t offset = 0;
  while (offset < bytes.size()) out.push_back(decode_fsig(bytes, offset));
  return out;
}

void write_signal_csv(const std::filesystem::path& path, const ComplexSignal& sig) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "index,re,im\n" << std::setprecision(17);
  for (Eigen::Index k = 0; k < sig.size(); ++k) {
    out << k << ',' << sig.samples[k].real() << ',' << sig.samples[k].imag() << '\n';
  }
}

}  // namespace fiberlab
