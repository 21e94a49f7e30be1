#include "fiberlab/physics.hpp"

#include "fiberlab/error.hpp"
#include "fiberlab/rng.hpp"

#include <cmath>
#include <string>

namespace fiberlab {

NlseCoeffs NlseCoeffs::from_fiber(const FiberParams& fiber, const CoordScales& scales) {
  scales.validate();
  NlseCoeffs c;
  c.c_alpha = fiber.alpha_linear() * scales.z_scale_km / 2.0;
  c.c_beta = fiber.beta2_s2_per_km() * scales.z_scale_km / (2.0 * scales.t_scale_s * scales.t_scale_s);
  c.c_gamma = fiber.gamma_per_w_km * scales.amp_scale * scales.amp_scale * scales.z_scale_km;
  c.validate();
  return c;
}

FiberParams NlseCoeffs::to_fiber(const CoordScales& scales) const {
  FiberParams f;
  f.length_km = scales.z_scale_km;
  f.alpha_db_per_km = FiberParams::alpha_db_from_linear(2.0 * c_alpha / scales.z_scale_km);
  f.beta2_ps2_per_km = 2.0 * c_beta * scales.t_scale_s * scales.t_scale_s / scales.z_scale_km * 1e24;
  f.gamma_per_w_km = c_gamma / (scales.amp_scale * scales.amp_scale * scales.z_scale_km);
  return f;
}

void NlseCoeffs::validate() const {
  if (!std::isfinite(c_alpha) || !std::isfinite(c_beta) || !std::isfinite(c_gamma)) {
    throw ConfigError("NLSE coefficients must be finite");
  }
}

CollocationSet CollocationSet::uniform(Eigen::Index count, std::uint64_t seed) {
  CollocationSet c;
  c.sampler = Sampler::uniform_random;
  c.seed = seed;
  c.points.resize(2, count);
  Rng rng = make_rng(seed, 0xc011);
  for (Eigen::Index p = 0; p < count; ++p) {
    c.points(0, p) = uniform01(rng);
    c.points(1, p) = uniform01(rng);
  }
  return c;
}

CollocationSet CollocationSet::grid(Eigen::Index nz, Eigen::Index nt) {
  if (nz < 2 || nt < 2) throw ConfigError("collocation grid needs at least 2 points per axis");
  CollocationSet c;
  c.sampler = Sampler::grid;
  c.points.resize(2, nz * nt);
  for (Eigen::Index i = 0; i < nz; ++i) {
    for (Eigen::Index j = 0; j < nt; ++j) {
      c.points(0, i * nt + j) = static_cast<double>(i) / static_cast<double>(nz - 1);
      c.points(1, i * nt + j) = static_cast<double>(j) / static_cast<double>(nt - 1);
    }
  }
  return c;
}

std::complex<double> nlse_residual(const FieldJet& jet, const NlseCoeffs& c) {
  using namespace std::complex_literals;
  return jet.s_z + c.c_alpha * jet.s + 1i * c.c_beta * jet.s_tt - 1i * c.c_gamma * std::norm(jet.s) * jet.s;
}

namespace {

struct BranchPass {
  MlpTape<double> i, q;
};

BranchPass run_branches(const OperatorParams& params, std::span<const Frame> frames) {
  for (const auto& f : frames) {
    if (f.samples.size() != params.input_dim_m) {
      throw DimensionError("frame has " + std::to_string(f.samples.size()) + " samples, operator expects " +
                           std::to_string(params.input_dim_m));
    }
  }
  const Eigen::MatrixXd x = branch_inputs(frames, params.scales);
  return {mlp_forward_tape(params.branch_i, x), mlp_forward_tape(params.branch_q, x)};
}

// Residual channels on the frames x points grid.
struct ResidualFields {
  Eigen::ArrayXXd si, sq, si_z, sq_z, si_tt, sq_tt, r_re, r_im;
};

ResidualFields residual_fields(const Eigen::MatrixXd& b_i, const Eigen::MatrixXd& b_q,
                               const CoordJet<double>& k, const NlseCoeffs& c) {
  ResidualFields r;
  r.si = (b_i.transpose() * k.value).array();
  r.sq = (b_q.transpose() * k.value).array();
  r.si_z = (b_i.transpose() * k.d_z).array();
  r.sq_z = (b_q.transpose() * k.d_z).array();
  r.si_tt = (b_i.transpose() * k.d_tt).array();
  r.sq_tt = (b_q.transpose() * k.d_tt).array();
  const Eigen::ArrayXXd mag = r.si.square() + r.sq.square();
  r.r_re = r.si_z + c.c_alpha * r.si - c.c_beta * r.sq_tt + c.c_gamma * mag * r.sq;
  r.r_im = r.sq_z + c.c_alpha * r.sq + c.c_beta * r.si_tt - c.c_gamma * mag * r.si;
  return r;
}

double checked_mean(double sum, double count, const char* what) {
  const double v = count > 0 ? sum / count : 0.0;
  if (!std::isfinite(v)) throw DivergenceError(std::string(what) + " is not finite");
  return v;
}

Eigen::Matrix2Xd ic_points(const OperatorParams& params, const TimeGrid& frame_grid,
                           std::span<const Eigen::Index> t_samples) {
  Eigen::Matrix2Xd pts(2, static_cast<Eigen::Index>(t_samples.size()));
  const double dtau = frame_grid.sample_period() / params.scales.t_scale_s;
  for (std::size_t j = 0; j < t_samples.size(); ++j) {
    pts(0, static_cast<Eigen::Index>(j)) = 0.0;
    pts(1, static_cast<Eigen::Index>(j)) = static_cast<double>(t_samples[j]) * dtau;
  }
  return pts;
}

// u(t_j) / amp_scale as frames x samples matrices.
void ic_targets(std::span<const Frame> frames, std::span<const Eigen::Index> t_samples, double amp_scale,
                Eigen::MatrixXd& ui, Eigen::MatrixXd& uq) {
  const auto nf = static_cast<Eigen::Index>(frames.size());
  const auto nj = static_cast<Eigen::Index>(t_samples.size());
  ui.resize(nf, nj);
  uq.resize(nf, nj);
  for (Eigen::Index f = 0; f < nf; ++f) {
    const auto& s = frames[static_cast<std::size_t>(f)].samples.samples;
    for (Eigen::Index j = 0; j < nj; ++j) {
      const Eigen::Index idx = t_samples[static_cast<std::size_t>(j)];
      if (idx < 0 || idx >= s.size()) throw DimensionError("ic_loss: sample index outside the frame");
      ui(f, j) = s[idx].real() / amp_scale;
      uq(f, j) = s[idx].imag() / amp_scale;
    }
  }
}

}  // namespace

double pde_loss(const OperatorParams& params, std::span<const Frame> frames, const CollocationSet& colloc,
                const NlseCoeffs& coeffs) {
  params.validate();
  if (frames.empty() || colloc.points.cols() == 0) return 0.0;
  const BranchPass b = run_branches(params, frames);
  const CoordJet<double> k = coord_jet_forward(params.trunk, colloc.points).output;
  const ResidualFields r = residual_fields(b.i.output, b.q.output, k, coeffs);
  return checked_mean((r.r_re.square() + r.r_im.square()).sum(), static_cast<double>(r.r_re.size()),
                      "PDE loss");
}

double pde_loss_gradient(const OperatorParams& params, std::span<const Frame> frames,
                         const CollocationSet& colloc, const NlseCoeffs& coeffs, OperatorParams& grad) {
  params.validate();
  grad = zeros_like(params);
  if (frames.empty() || colloc.points.cols() == 0) return 0.0;
  const BranchPass b = run_branches(params, frames);
  const CoordJetTape<double> tape = coord_jet_forward(params.trunk, colloc.points);
  const CoordJet<double>& k = tape.output;
  const ResidualFields r = residual_fields(b.i.output, b.q.output, k, coeffs);
  const double count = static_cast<double>(r.r_re.size());
  const double loss = checked_mean((r.r_re.square() + r.r_im.square()).sum(), count, "PDE loss");

  const double ca = coeffs.c_alpha, cb = coeffs.c_beta, cg = coeffs.c_gamma;
  const Eigen::ArrayXXd g_re = (2.0 / count) * r.r_re;
  const Eigen::ArrayXXd g_im = (2.0 / count) * r.r_im;
  const Eigen::ArrayXXd si2 = r.si.square(), sq2 = r.sq.square(), sisq = r.si * r.sq;

  const Eigen::MatrixXd d_si = (g_re * (ca + 2.0 * cg * sisq) - g_im * cg * (3.0 * si2 + sq2)).matrix();
  const Eigen::MatrixXd d_sq = (g_re * cg * (si2 + 3.0 * sq2) + g_im * (ca - 2.0 * cg * sisq)).matrix();
  const Eigen::MatrixXd d_si_z = g_re.matrix();
  const Eigen::MatrixXd d_sq_z = g_im.matrix();
  const Eigen::MatrixXd d_si_tt = (cb * g_im).matrix();
  const Eigen::MatrixXd d_sq_tt = (-cb * g_re).matrix();

  Eigen::MatrixXd d_bi = k.value * d_si.transpose();
  d_bi.noalias() += k.d_z * d_si_z.transpose();
  d_bi.noalias() += k.d_tt * d_si_tt.transpose();
  Eigen::MatrixXd d_bq = k.value * d_sq.transpose();
  d_bq.noalias() += k.d_z * d_sq_z.transpose();
  d_bq.noalias() += k.d_tt * d_sq_tt.transpose();

  const Eigen::MatrixXd& bi = b.i.output;
  const Eigen::MatrixXd& bq = b.q.output;
  CoordJet<double> d_k;
  d_k.value = bi * d_si;
  d_k.value.noalias() += bq * d_sq;
  d_k.d_z = bi * d_si_z;
  d_k.d_z.noalias() += bq * d_sq_z;
  d_k.d_t = Eigen::MatrixXd::Zero(k.d_t.rows(), k.d_t.cols());
  d_k.d_tt = bi * d_si_tt;
  d_k.d_tt.noalias() += bq * d_sq_tt;

  coord_jet_backward(params.trunk, tape, d_k, grad.trunk);
  mlp_backward(params.branch_i, b.i, d_bi, grad.branch_i);
  mlp_backward(params.branch_q, b.q, d_bq, grad.branch_q);
  return loss;
}

std::vector<Eigen::Index> all_sample_indices(const Frame& frame) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(frame.samples.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = static_cast<Eigen::Index>(j);
  return idx;
}

double ic_loss(const OperatorParams& params, std::span<const Frame> frames,
               std::span<const Eigen::Index> t_samples) {
  params.validate();
  if (frames.empty() || t_samples.empty()) return 0.0;
  const BranchPass b = run_branches(params, frames);
  const Eigen::MatrixXd k0 = mlp_forward(params.trunk, ic_points(params, frames.front().samples.grid, t_samples));
  Eigen::MatrixXd ui, uq;
  ic_targets(frames, t_samples, params.scales.amp_scale, ui, uq);
  const Eigen::MatrixXd di = b.i.output.transpose() * k0 - ui;
  const Eigen::MatrixXd dq = b.q.output.transpose() * k0 - uq;
  return checked_mean(di.squaredNorm() + dq.squaredNorm(), static_cast<double>(di.size()), "IC loss");
}

double ic_loss(const FieldOperator& op, std::span<const Frame> frames, std::span<const Eigen::Index> t_samples,
               double amp_scale) {
  if (frames.empty() || t_samples.empty()) return 0.0;
  const TimeGrid& g = frames.front().samples.grid;
  std::vector<EvalPoint> pts(t_samples.size());
  for (std::size_t j = 0; j < pts.size(); ++j) {
    pts[j] = {0.0, static_cast<double>(t_samples[j]) * g.sample_period()};
  }
  const FieldBatch pred = op.evaluate(frames, pts);
  Eigen::MatrixXd ui, uq;
  ic_targets(frames, t_samples, amp_scale, ui, uq);
  const Eigen::MatrixXd di = pred.s_i / amp_scale - ui;
  const Eigen::MatrixXd dq = pred.s_q / amp_scale - uq;
  return checked_mean(di.squaredNorm() + dq.squaredNorm(), static_cast<double>(di.size()), "IC loss");
}

double ic_loss_gradient(const OperatorParams& params, std::span<const Frame> frames,
                        std::span<const Eigen::Index> t_samples, OperatorParams& grad) {
  params.validate();
  grad = zeros_like(params);
  if (frames.empty() || t_samples.empty()) return 0.0;
  const BranchPass b = run_branches(params, frames);
  const MlpTape<double> k0 =
      mlp_forward_tape(params.trunk, ic_points(params, frames.front().samples.grid, t_samples));
  Eigen::MatrixXd ui, uq;
  ic_targets(frames, t_samples, params.scales.amp_scale, ui, uq);
  const Eigen::MatrixXd di = b.i.output.transpose() * k0.output - ui;
  const Eigen::MatrixXd dq = b.q.output.transpose() * k0.output - uq;
  const double count = static_cast<double>(di.size());
  const double loss = checked_mean(di.squaredNorm() + dq.squaredNorm(), count, "IC loss");

  const Eigen::MatrixXd g_i = (2.0 / count) * di;
  const Eigen::MatrixXd g_q = (2.0 / count) * dq;
  Eigen::MatrixXd d_k = b.i.output * g_i;
  d_k.noalias() += b.q.output * g_q;
  mlp_backward(params.trunk, k0, d_k, grad.trunk);
  mlp_backward(params.branch_i, b.i, Eigen::MatrixXd(k0.output * g_i.transpose()), grad.branch_i);
  mlp_backward(params.branch_q, b.q, Eigen::MatrixXd(k0.output * g_q.transpose()), grad.branch_q);
  return loss;
}

LossReport make_loss_report(double pde, double ic, double w_pde, double w_ic) {
  LossReport r;
  r.pde = pde;
  r.ic = ic;
  r.w_pde = w_pde;
  r.w_ic = w_ic;
  r.total = w_pde * pde + w_ic * ic;
  return r;
}

Eigen::VectorXd per_symbol_mse(const Eigen::VectorXcd& pred, const Eigen::VectorXcd& ref,
                               int samples_per_symbol, double power_w) {
  if (pred.size() != ref.size()) throw DimensionError("per_symbol_mse: length mismatch");
  if (samples_per_symbol < 1 || pred.size() % samples_per_symbol != 0) {
    throw DimensionError("per_symbol_mse: length is not a whole number of symbols");
  }
  if (!(power_w > 0.0)) throw ConfigError("per_symbol_mse: normalization power must be > 0");
  const Eigen::Index n_sym = pred.size() / samples_per_symbol;
  Eigen::VectorXd mse(n_sym);
  const double scale = 1.0 / (2.0 * samples_per_symbol * power_w);
  for (Eigen::Index k = 0; k < n_sym; ++k) {
    mse[k] = (pred.segment(k * samples_per_symbol, samples_per_symbol) -
              ref.segment(k * samples_per_symbol, samples_per_symbol))
                 .squaredNorm() *
             scale;
  }
  return mse;
}

Eigen::VectorXd validation_mse(const FieldOperator& op, std::span<const Frame> inputs,
                               std::span<const Frame> reference, double z_km, const FramingSpec& spec,
                               double launch_power_w) {
  if (inputs.size() != reference.size()) throw DimensionError("validation_mse: frame counts differ");
  if (inputs.empty()) return {};
  const TimeGrid& g = inputs.front().samples.grid;
  for (std::size_t f = 0; f < inputs.size(); ++f) {
    if (!(inputs[f].samples.grid == g) || !(reference[f].samples.grid == g) ||
        inputs[f].source_core_start != reference[f].source_core_start) {
      throw DimensionError("validation_mse: grid or frame index mismatch at frame " + std::to_string(f));
    }
  }
  const auto pts = frame_sample_points(g, z_km);
  const Eigen::MatrixXcd pred = op.evaluate(inputs, pts).complex();
  const Eigen::Index begin = inputs.front().core_begin(spec);
  const Eigen::Index len = inputs.front().core_end(spec) - begin;
  Eigen::VectorXd out(static_cast<Eigen::Index>(inputs.size()) * spec.core_m);
  for (std::size_t f = 0; f < inputs.size(); ++f) {
    const Eigen::VectorXcd p = pred.row(static_cast<Eigen::Index>(f)).transpose().segment(begin, len);
    out.segment(static_cast<Eigen::Index>(f) * spec.core_m, spec.core_m) =
        per_symbol_mse(p, reference[f].samples.samples.segment(begin, len), g.samples_per_symbol,
                       launch_power_w);
  }
  return out;
}

}  // namespace fiberlab
