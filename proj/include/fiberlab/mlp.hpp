#pragma once

#include "fiberlab/error.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace fiberlab {

enum class Activation { tanh };

/// Layer widths from input to output; hidden layers use `activation`, the
/// output layer is linear.
struct MlpSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::tanh;

  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }
  std::size_t layer_count() const { return layer_widths.size() - 1; }

  void validate() const {
    if (layer_widths.size() < 3) throw ConfigError("MLP needs at least one hidden layer");
    for (int w : layer_widths) {
      if (w < 1) throw ConfigError("MLP layer widths must be >= 1");
    }
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

template <typename Scalar>
struct DenseLayer {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Fully connected tanh network. Columns of every batch matrix are samples.
template <typename Scalar>
struct Mlp {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  MlpSpec spec;
  std::vector<DenseLayer<Scalar>> layers;

  static Mlp zeros(const MlpSpec& spec) {
    spec.validate();
    Mlp net;
    net.spec = spec;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
      net.layers.push_back({Matrix::Zero(spec.layer_widths[l + 1], spec.layer_widths[l]),
                            Vector::Zero(spec.layer_widths[l + 1])});
    }
    return net;
  }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& layer : layers) {
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    }
    return true;
  }

  /// Checks that layer shapes agree with `spec`.
  void validate() const {
    spec.validate();
    if (layers.size() != spec.layer_count()) throw DimensionError("MLP layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].weight.rows() != spec.layer_widths[l + 1] ||
          layers[l].weight.cols() != spec.layer_widths[l] ||
          layers[l].bias.size() != spec.layer_widths[l + 1]) {
        throw DimensionError("MLP layer " + std::to_string(l) + " shape does not match its spec");
      }
    }
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (!(a.spec == b.spec) || a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
      const auto& x = a.layers[l];
      const auto& y = b.layers[l];
      if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() ||
          x.bias.size() != y.bias.size()) {
        return false;
      }
      if (!(x.weight.array() == y.weight.array()).all() || !(x.bias.array() == y.bias.array()).all()) {
        return false;
      }
    }
    return true;
  }
};

/// Batched forward pass: input (in x B) -> output (out x B).
template <typename Scalar, typename Derived>
typename Mlp<Scalar>::Matrix mlp_forward(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& input) {
  typename Mlp<Scalar>::Matrix h = input;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    typename Mlp<Scalar>::Matrix a = net.layers[l].weight * h;
    a.colwise() += net.layers[l].bias;
    if (l + 1 < net.layers.size()) {
      h = a.array().tanh().matrix();
    } else {
      h = std::move(a);
    }
  }
  return h;
}

/// Activations kept by mlp_forward_tape for the reverse pass.
template <typename Scalar>
struct MlpTape {
  std::vector<typename Mlp<Scalar>::Matrix> inputs;  // input to each layer
  typename Mlp<Scalar>::Matrix output;
};

template <typename Scalar, typename Derived>
MlpTape<Scalar> mlp_forward_tape(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& input) {
  MlpTape<Scalar> tape;
  tape.inputs.reserve(net.layers.size());
  tape.inputs.emplace_back(input);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    typename Mlp<Scalar>::Matrix a = net.layers[l].weight * tape.inputs.back();
    a.colwise() += net.layers[l].bias;
    if (l + 1 < net.layers.size()) {
      tape.inputs.emplace_back(a.array().tanh().matrix());
    } else {
      tape.output = std::move(a);
    }
  }
  return tape;
}

/// Reverse pass: accumulates dLoss/dparams into `grad` (same shapes as
/// `net`) given dLoss/doutput.
template <typename Scalar>
void mlp_backward(const Mlp<Scalar>& net, const MlpTape<Scalar>& tape,
                  const typename Mlp<Scalar>::Matrix& d_output, Mlp<Scalar>& grad) {
  typename Mlp<Scalar>::Matrix delta = d_output;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    grad.layers[l].weight.noalias() += delta * tape.inputs[l].transpose();
    grad.layers[l].bias += delta.rowwise().sum();
    if (l == 0) break;
    typename Mlp<Scalar>::Matrix back = net.layers[l].weight.transpose() * delta;
    // tanh' = 1 - h^2
    delta = (back.array() * (Scalar(1) - tape.inputs[l].array().square())).matrix();
  }
}

/// Value and coordinate derivatives of a network with a two-column (z, t)
/// input, propagated forward through every layer. Row r, column p holds
/// output r at point p.
template <typename Scalar>
struct CoordJet {
  using Matrix = typename Mlp<Scalar>::Matrix;
  Matrix value, d_z, d_t, d_tt;
};

/// Per-layer quantities kept by coord_jet_forward for the reverse pass.
template <typename Scalar>
struct CoordJetTape {
  std::vector<CoordJet<Scalar>> inputs;      // jet entering each layer
  std::vector<CoordJet<Scalar>> pre_tanh;    // pre-activation jet of each hidden layer
  CoordJet<Scalar> output;
};

/// Forward-mode propagation of (s, ds/dz, ds/dt, d2s/dt2) through the net for
/// points given as a 2 x P matrix of (z, t).
template <typename Scalar>
CoordJetTape<Scalar> coord_jet_forward(const Mlp<Scalar>& net,
                                       const Eigen::Matrix<Scalar, 2, Eigen::Dynamic>& points) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  if (net.spec.input_width() != 2) throw DimensionError("coordinate network must take (z, t)");
  const Eigen::Index p = points.cols();
  CoordJetTape<Scalar> tape;
  CoordJet<Scalar> x;
  x.value = points;
  x.d_z = Matrix::Zero(2, p);
  x.d_z.row(0).setOnes();
  x.d_t = Matrix::Zero(2, p);
  x.d_t.row(1).setOnes();
  x.d_tt = Matrix::Zero(2, p);
  tape.inputs.push_back(std::move(x));

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& w = net.layers[l].weight;
    const CoordJet<Scalar>& in = tape.inputs.back();
    CoordJet<Scalar> a;
    a.value.noalias() = w * in.value;
    a.value.colwise() += net.layers[l].bias;
    a.d_z.noalias() = w * in.d_z;
    a.d_t.noalias() = w * in.d_t;
    a.d_tt.noalias() = w * in.d_tt;
    if (l + 1 == net.layers.size()) {
      tape.output = std::move(a);
      break;
    }
    CoordJet<Scalar> h;
    h.value = a.value.array().tanh().matrix();
    const auto s1 = (Scalar(1) - h.value.array().square()).eval();
    const auto s2 = (Scalar(-2) * h.value.array() * s1).eval();
    h.d_z = (s1 * a.d_z.array()).matrix();
    h.d_t = (s1 * a.d_t.array()).matrix();
    h.d_tt = (s2 * a.d_t.array().square() + s1 * a.d_tt.array()).matrix();
    tape.inputs.push_back(std::move(h));
    tape.pre_tanh.push_back(std::move(a));
  }
  return tape;
}

/// Reverse pass through coord_jet_forward. `upstream` holds dLoss with
/// respect to each output channel; gradients accumulate into `grad`.
template <typename Scalar>
void coord_jet_backward(const Mlp<Scalar>& net, const CoordJetTape<Scalar>& tape,
                        const CoordJet<Scalar>& upstream, Mlp<Scalar>& grad) {
  // dA.* holds dLoss/d(pre-activation channels) of the current layer.
  CoordJet<Scalar> d_a = upstream;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const CoordJet<Scalar>& in = tape.inputs[l];
    auto& gw = grad.layers[l].weight;
    gw.noalias() += d_a.value * in.value.transpose();
    gw.noalias() += d_a.d_z * in.d_z.transpose();
    gw.noalias() += d_a.d_t * in.d_t.transpose();
    gw.noalias() += d_a.d_tt * in.d_tt.transpose();
    grad.layers[l].bias += d_a.value.rowwise().sum();
    if (l == 0) break;

    const auto& w = net.layers[l].weight;
    CoordJet<Scalar> d_h;
    d_h.value.noalias() = w.transpose() * d_a.value;
    d_h.d_z.noalias() = w.transpose() * d_a.d_z;
    d_h.d_t.noalias() = w.transpose() * d_a.d_t;
    d_h.d_tt.noalias() = w.transpose() * d_a.d_tt;

    const CoordJet<Scalar>& h = tape.inputs[l];
    const CoordJet<Scalar>& pre = tape.pre_tanh[l - 1];
    const auto hv = h.value.array();
    const auto s1 = (Scalar(1) - hv.square()).eval();
    const auto s2 = (Scalar(-2) * hv * s1).eval();
    const auto s3 = (Scalar(-2) * s1.square() + Scalar(4) * hv.square() * s1).eval();
    const auto a_z = pre.d_z.array();
    const auto a_t = pre.d_t.array();
    const auto a_tt = pre.d_tt.array();

    CoordJet<Scalar> next;
    next.d_z = (s1 * d_h.d_z.array()).matrix();
    next.d_t = (s1 * d_h.d_t.array() + Scalar(2) * s2 * a_t * d_h.d_tt.array()).matrix();
    next.d_tt = (s1 * d_h.d_tt.array()).matrix();
    next.value = (s1 * d_h.value.array() + s2 * a_z * d_h.d_z.array() + s2 * a_t * d_h.d_t.array() +
                  (s3 * a_t.square() + s2 * a_tt) * d_h.d_tt.array())
                     .matrix();
    d_a = std::move(next);
  }
}

}  // namespace fiberlab
