#pragma once

#include <cstddef>
#include <vector>

#include "atlasforge/geom.hpp"
#include "atlasforge/types.hpp"

namespace atlasforge {

// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

enum class Activation { Linear, SoftPlus, ReLU, Sigmoid };

// Weight-normalized dense layer: effective row i is w_i = g_i * V_i / |V_i|.
// V rows must never be exactly zero; a zero effective row is expressed with
// g_i = 0 instead.
struct DenseLayer {
  int in_dim = 0;
  int out_dim = 0;
  Activation act = Activation::Linear;
  double beta = 100.0;        // SoftPlus sharpness
  bool concat_input = false;  // layer input is [previous activations, raw network input]
  std::vector<double> V;      // out_dim x in_dim, row-major
  std::vector<double> g;      // out_dim
  std::vector<double> b;      // out_dim
};

struct MlpParams {
  int input_dim = 0;
  std::vector<DenseLayer> layers;

  int output_dim() const { return layers.empty() ? input_dim : layers.back().out_dim; }
  std::size_t param_count() const;
};

// 4-layer chart map (u,v) -> R^3: SoftPlus(beta=100) after layers 1..3, linear
// 3D output, raw input concatenated onto the second hidden activation.
// Init: V ~ uniform(+-sqrt(6/(fan_in+fan_out))), g = initial row norms, b = 0,
// so the effective weights start exactly at the sampled V.
MlpParams make_chart_mlp(int hidden_width, Rng& rng);

// Same skeleton over an encoded 3D point: ReLU trunk, scalar sigmoid output.
MlpParams make_field_mlp(int hidden_width, int input_dim, Rng& rng);

// Wraps explicit effective weights into a layer (g set to row norms so the
// effective matrix equals W exactly; zero rows get g = 0).
DenseLayer layer_from_weights(const Matrix& W, const std::vector<double>& bias, Activation act,
                              bool concat_input = false, double beta = 100.0);

struct PosEncConfig {
  int octaves = 6;
  bool include_raw = true;

  int encoded_dim(int raw_dim) const { return raw_dim * ((include_raw ? 1 : 0) + 2 * octaves); }
};

// Layout per sample: [raw x (if kept) | per octave i: sin(2^i pi x), cos(2^i pi x)],
// components fastest within each group.
Matrix positional_encode(const PosEncConfig& cfg, const Matrix& points);
Matrix positional_encode(const PosEncConfig& cfg, const PointCloud3& points);

// Intermediates recorded by one forward pass. Single-use: a second backward
// through the same tape is a usage error.
struct Tape {
  std::vector<Matrix> inputs;  // per layer, the post-concat layer input
  std::vector<Matrix> preact;  // per layer, pre-activation z
  bool consumed = false;
};

Matrix mlp_forward(const MlpParams& net, const Matrix& inputs, Tape* tape = nullptr);

// Gradients in parameter space, same shapes as the layer parameters.
struct MlpGrads {
  std::vector<std::vector<double>> dV, dg, db;
};

MlpGrads make_grads(const MlpParams& net);

// Accumulates scale * d<cotangents, output>/dparams into `accum`, consuming the
// tape. Gradients w.r.t. effective weights are chained through the weight
// normalization before accumulation.
void mlp_backward_params(const MlpParams& net, Tape& tape, const Matrix& out_cotangents,
                         MlpGrads& accum, double scale = 1.0);

// Input Jacobians by forward-mode sweeps, one per input column. Per sample a
// row-major out_dim x input_dim block.
std::vector<double> mlp_input_jacobians(const MlpParams& net, const Matrix& inputs);

// Accumulates scale * d(sum_s <cot_s, J_s>)/dparams where J_s is the input
// Jacobian at sample s: the reverse pass through the forward-mode sweep, which
// needs activation second derivatives.
void mlp_jacobian_backward_params(const MlpParams& net, const Matrix& inputs,
                                  const std::vector<double>& jac_cotangents, MlpGrads& accum,
                                  double scale = 1.0);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments are keyed to the fixed parameter order: layers in order, V then g
// then b within a layer.
struct AdamState {
  std::vector<double> m, v;
  long long t = 0;
};

AdamState make_adam_state(const MlpParams& net);
void adam_update(AdamState& state, MlpParams& net, const MlpGrads& grads, double lr,
                 const AdamConfig& cfg = {});

}  // namespace atlasforge
