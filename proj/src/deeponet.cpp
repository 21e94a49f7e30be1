#include "fiberlab/deeponet.hpp"

#include "fiberlab/error.hpp"
#include "fiberlab/parallel.hpp"
#include "fiberlab/rng.hpp"
#include "fiberlab/signal_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <string>

namespace fiberlab {

namespace {
constexpr std::int64_t kFrameChunk = 64;
}  // namespace

void CoordScales::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(z_scale_km) || !positive(t_scale_s) || !positive(amp_scale)) {
    throw ConfigError("coordinate scales must be finite and > 0");
  }
}

void OperatorParams::validate() const {
  branch_i.validate();
  branch_q.validate();
  trunk.validate();
  scales.validate();
  if (trunk.spec.input_width() != 2) {
    throw DimensionError("trunk input width must be 2, got " + std::to_string(trunk.spec.input_width()));
  }
  for (const Mlp<double>* b : {&branch_i, &branch_q}) {
    if (b->spec.input_width() != 2 * input_dim_m) {
      throw DimensionError("branch input width " + std::to_string(b->spec.input_width()) +
                           " != 2 * input_dim_m = " + std::to_string(2 * input_dim_m));
    }
  }
  if (branch_i.spec.output_width() != q_embed || branch_q.spec.output_width() != q_embed ||
      trunk.spec.output_width() != q_embed) {
    throw DimensionError("embedding widths disagree: branch_i " +
                         std::to_string(branch_i.spec.output_width()) + ", branch_q " +
                         std::to_string(branch_q.spec.output_width()) + ", trunk " +
                         std::to_string(trunk.spec.output_width()) + ", q " + std::to_string(q_embed));
  }
}

namespace {

MlpSpec spec_from(int in, const std::vector<int>& hidden, int out) {
  MlpSpec spec;
  spec.layer_widths.push_back(in);
  spec.layer_widths.insert(spec.layer_widths.end(), hidden.begin(), hidden.end());
  spec.layer_widths.push_back(out);
  spec.validate();
  return spec;
}

Mlp<double> glorot(const MlpSpec& spec, Rng& rng) {
  Mlp<double> net = Mlp<double>::zeros(spec);
  for (auto& layer : net.layers) {
    const double sd = std::sqrt(2.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = sd * standard_normal(rng);
    }
  }
  return net;
}

void check_frame(const OperatorParams& params, const Frame& u) {
  if (u.samples.size() != params.input_dim_m) {
    throw DimensionError("frame has " + std::to_string(u.samples.size()) +
                         " samples, operator expects " + std::to_string(params.input_dim_m));
  }
}

}  // namespace

OperatorParams init_operator(const OperatorArchitecture& arch, const CoordScales& scales,
                             std::uint64_t seed) {
  if (arch.q_embed < 1 || arch.input_dim_m < 1) throw ConfigError("q_embed and input_dim_m must be >= 1");
  scales.validate();
  Rng rng = make_rng(seed, 0x0b5e);
  OperatorParams p;
  p.q_embed = arch.q_embed;
  p.input_dim_m = arch.input_dim_m;
  p.scales = scales;
  p.branch_i = glorot(spec_from(2 * arch.input_dim_m, arch.branch_hidden, arch.q_embed), rng);
  p.branch_q = glorot(spec_from(2 * arch.input_dim_m, arch.branch_hidden, arch.q_embed), rng);
  p.trunk = glorot(spec_from(2, arch.trunk_hidden, arch.q_embed), rng);
  p.branch_i.layers.front().weight *= arch.branch_input_init_scale;
  p.branch_q.layers.front().weight *= arch.branch_input_init_scale;

  auto& first = p.trunk.layers.front();
  first.weight.col(1) *= arch.trunk_time_init_scale;
  for (Eigen::Index r = 0; r < first.weight.rows(); ++r) {
    const double zc = uniform01(rng);
    const double tc = uniform01(rng);
    first.bias[r] = -(first.weight(r, 0) * zc + first.weight(r, 1) * tc);
  }
  p.validate();
  return p;
}

OperatorParams zeros_like(const OperatorParams& params) {
  OperatorParams z = params;
  for (Mlp<double>* net : {&z.branch_i, &z.branch_q, &z.trunk}) {
    for (auto& layer : net->layers) {
      layer.weight.setZero();
      layer.bias.setZero();
    }
  }
  return z;
}

Eigen::VectorXd branch_input(const Frame& frame, const CoordScales& scales) {
  const Eigen::Index m = frame.samples.size();
  Eigen::VectorXd x(2 * m);
  const double inv = 1.0 / scales.amp_scale;
  for (Eigen::Index j = 0; j < m; ++j) {
    x[2 * j] = frame.samples.samples[j].real() * inv;
    x[2 * j + 1] = frame.samples.samples[j].imag() * inv;
  }
  return x;
}

Eigen::MatrixXd branch_inputs(std::span<const Frame> frames, const CoordScales& scales) {
  if (frames.empty()) return {};
  Eigen::MatrixXd x(2 * frames.front().samples.size(), static_cast<Eigen::Index>(frames.size()));
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].samples.size() * 2 != x.rows()) throw DimensionError("frames differ in length");
    x.col(static_cast<Eigen::Index>(f)) = branch_input(frames[f], scales);
  }
  return x;
}

Eigen::Matrix2Xd nondimensional_points(std::span<const EvalPoint> pts, const CoordScales& scales) {
  Eigen::Matrix2Xd x(2, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t p = 0; p < pts.size(); ++p) {
    x(0, static_cast<Eigen::Index>(p)) = pts[p].z_km / scales.z_scale_km;
    x(1, static_cast<Eigen::Index>(p)) = pts[p].t_s / scales.t_scale_s;
  }
  return x;
}

std::vector<EvalPoint> frame_sample_points(const TimeGrid& frame_grid, double z_km) {
  std::vector<EvalPoint> pts(static_cast<std::size_t>(frame_grid.sample_count()));
  const double dt = frame_grid.sample_period();
  for (std::size_t j = 0; j < pts.size(); ++j) pts[j] = {z_km, static_cast<double>(j) * dt};
  return pts;
}

Eigen::MatrixXcd FieldBatch::complex() const {
  Eigen::MatrixXcd out(s_i.rows(), s_i.cols());
  out.real() = s_i;
  out.imag() = s_q;
  return out;
}

Eigen::MatrixXd trunk_embeddings(const OperatorParams& params, const Eigen::Matrix2Xd& nondim_points) {
  return mlp_forward(params.trunk, nondim_points);
}

FieldBatch forward_batch(const OperatorParams& params, std::span<const Frame> frames,
                         std::span<const EvalPoint> pts) {
  params.validate();
  for (const auto& f : frames) check_frame(params, f);
  FieldBatch out;
  if (frames.empty()) {
    out.s_i.resize(0, static_cast<Eigen::Index>(pts.size()));
    out.s_q.resize(0, static_cast<Eigen::Index>(pts.size()));
    return out;
  }
  const Eigen::MatrixXd k = trunk_embeddings(params, nondimensional_points(pts, params.scales));
  const auto n_frames = static_cast<std::int64_t>(frames.size());
  out.s_i.resize(n_frames, k.cols());
  out.s_q.resize(n_frames, k.cols());
  // fixed chunking keeps the arithmetic independent of the worker count
  const std::int64_t n_chunks = (n_frames + kFrameChunk - 1) / kFrameChunk;
  parallel_for(n_chunks, [&](std::int64_t c) {
    const std::int64_t begin = c * kFrameChunk;
    const std::int64_t len = std::min(kFrameChunk, n_frames - begin);
    const Eigen::MatrixXd x =
        branch_inputs(frames.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(len)), params.scales);
    const Eigen::MatrixXd b_i = mlp_forward(params.branch_i, x);
    const Eigen::MatrixXd b_q = mlp_forward(params.branch_q, x);
    out.s_i.middleRows(begin, len).noalias() = params.scales.amp_scale * (b_i.transpose() * k);
    out.s_q.middleRows(begin, len).noalias() = params.scales.amp_scale * (b_q.transpose() * k);
  });
  return out;
}

OperatorOutput forward(const OperatorParams& params, const Frame& u, std::span<const EvalPoint> pts) {
  FieldBatch batch = forward_batch(params, std::span<const Frame>(&u, 1), pts);
  return {batch.s_i.row(0).transpose(), batch.s_q.row(0).transpose()};
}

OperatorJet forward_jet_nondimensional(const OperatorParams& params, const Frame& u,
                                       const Eigen::Matrix2Xd& nondim_points) {
  params.validate();
  check_frame(params, u);
  const Eigen::VectorXd x = branch_input(u, params.scales);
  const Eigen::VectorXd b_i = mlp_forward(params.branch_i, x);
  const Eigen::VectorXd b_q = mlp_forward(params.branch_q, x);
  const CoordJet<double> k = coord_jet_forward(params.trunk, nondim_points).output;
  auto channel = [&](const Eigen::VectorXd& b) {
    return ChannelJet{k.value.transpose() * b, k.d_z.transpose() * b, k.d_t.transpose() * b,
                      k.d_tt.transpose() * b};
  };
  return {channel(b_i), channel(b_q)};
}

OperatorJet forward_jet(const OperatorParams& params, const Frame& u, std::span<const EvalPoint> pts) {
  OperatorJet jet = forward_jet_nondimensional(params, u, nondimensional_points(pts, params.scales));
  const CoordScales& s = params.scales;
  for (ChannelJet* c : {&jet.i, &jet.q}) {
    c->value *= s.amp_scale;
    c->d_z *= s.amp_scale / s.z_scale_km;
    c->d_t *= s.amp_scale / s.t_scale_s;
    c->d_tt *= s.amp_scale / (s.t_scale_s * s.t_scale_s);
  }
  return jet;
}

DeepOnet::DeepOnet(OperatorParams params) : params_(std::move(params)) { params_.validate(); }

FieldBatch DeepOnet::evaluate(std::span<const Frame> frames, std::span<const EvalPoint> pts) const {
  return forward_batch(params_, frames, pts);
}

// Serialization ---------------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'P', 'I', 'N', 'O'};

template <typename Fn>
void for_each_tensor(const OperatorParams& p, Fn&& fn) {
  for (const Mlp<double>* net : {&p.branch_i, &p.branch_q, &p.trunk}) {
    for (const auto& layer : net->layers) {
      fn(layer.weight.data(), layer.weight.size());
      fn(layer.bias.data(), layer.bias.size());
    }
  }
}

template <typename Fn>
void for_each_tensor_mut(OperatorParams& p, Fn&& fn) {
  for (Mlp<double>* net : {&p.branch_i, &p.branch_q, &p.trunk}) {
    for (auto& layer : net->layers) {
      fn(layer.weight.data(), layer.weight.size());
      fn(layer.bias.data(), layer.bias.size());
    }
  }
}

nlohmann::json metadata(const OperatorParams& p) {
  return {{"q_embed", p.q_embed},
          {"input_dim_m", p.input_dim_m},
          {"branch_i", p.branch_i.spec.layer_widths},
          {"branch_q", p.branch_q.spec.layer_widths},
          {"trunk", p.trunk.spec.layer_widths},
          {"activation", "tanh"},
          {"coord_scales",
           {{"z_scale_km", p.scales.z_scale_km},
            {"t_scale_s", p.scales.t_scale_s},
            {"amp_scale", p.scales.amp_scale}}},
          {"provenance", p.provenance}};
}

}  // namespace

Eigen::VectorXd flatten(const OperatorParams& params) {
  Eigen::VectorXd flat(params.parameter_count());
  Eigen::Index at = 0;
  for_each_tensor(params, [&](const double* data, Eigen::Index n) {
    flat.segment(at, n) = Eigen::Map<const Eigen::VectorXd>(data, n);
    at += n;
  });
  return flat;
}

void unflatten(const Eigen::VectorXd& flat, OperatorParams& params) {
  if (flat.size() != params.parameter_count()) throw DimensionError("unflatten: size mismatch");
  Eigen::Index at = 0;
  for_each_tensor_mut(params, [&](double* data, Eigen::Index n) {
    Eigen::Map<Eigen::VectorXd>(data, n) = flat.segment(at, n);
    at += n;
  });
}

std::size_t serialized_header_size(const OperatorParams& params) {
  return 4 + 4 + 8 + metadata(params).dump().size() + 8;
}

std::vector<std::uint8_t> serialize(const OperatorParams& params) {
  params.validate();
  const std::string meta = metadata(params).dump();
  std::vector<std::uint8_t> out;
  out.reserve(serialized_header_size(params) + 8 * static_cast<std::size_t>(params.parameter_count()));
  out.insert(out.end(), kModelMagic, kModelMagic + 4);
  le::put_u32(out, kModelVersion);
  le::put_u64(out, meta.size());
  out.insert(out.end(), meta.begin(), meta.end());
  le::put_u64(out, static_cast<std::uint64_t>(params.parameter_count()));
  for_each_tensor(params, [&](const double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) le::put_f64(out, data[i]);
  });
  return out;
}

OperatorParams deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw CorruptionError("model payload lacks the PINO magic");
  }
  std::size_t offset = 4;
  const std::uint32_t version = le::get_u32(bytes, offset);
  if (version != kModelVersion) throw CorruptionError("unsupported model version " + std::to_string(version));
  const std::uint64_t meta_len = le::get_u64(bytes, offset);
  if (meta_len > bytes.size() - offset) throw CorruptionError("model metadata truncated");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(offset + meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("model metadata is not valid JSON: ") + e.what());
  }
  offset += meta_len;

  OperatorParams p;
  try {
    p.q_embed = meta.at("q_embed").get<int>();
    p.input_dim_m = meta.at("input_dim_m").get<int>();
    const auto& cs = meta.at("coord_scales");
    p.scales = {cs.at("z_scale_km").get<double>(), cs.at("t_scale_s").get<double>(),
                cs.at("amp_scale").get<double>()};
    p.branch_i = Mlp<double>::zeros({meta.at("branch_i").get<std::vector<int>>()});
    p.branch_q = Mlp<double>::zeros({meta.at("branch_q").get<std::vector<int>>()});
    p.trunk = Mlp<double>::zeros({meta.at("trunk").get<std::vector<int>>()});
    if (meta.contains("provenance")) p.provenance = meta.at("provenance");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("model metadata incomplete: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("model metadata invalid: ") + e.what());
  }

  const std::uint64_t count = le::get_u64(bytes, offset);
  if (count != static_cast<std::uint64_t>(p.parameter_count())) {
    throw CorruptionError("model weight count " + std::to_string(count) + " does not match its layer specs (" +
                          std::to_string(p.parameter_count()) + ")");
  }
  if ((bytes.size() - offset) / 8 < count) throw CorruptionError("model weight blob truncated");
  for_each_tensor_mut(p, [&](double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) data[i] = le::get_f64(bytes, offset);
  });
  if (offset != bytes.size()) throw CorruptionError("trailing bytes after model weights");
  try {
    p.validate();
  } catch (const Error& e) {
    throw CorruptionError(std::string("model is inconsistent: ") + e.what());
  }
  return p;
}

void save_model(const std::filesystem::path& path, const OperatorParams& params) {
  write_file_bytes(path, serialize(params));
}

OperatorParams load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifactError("model file '" + path.string() + "' not found");
  return deserialize(read_file_bytes(path));
}

std::string params_digest(const OperatorParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for_each_tensor(params, [&](const double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &data[i], 8);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  });
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fiberlab
