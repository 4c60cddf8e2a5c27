#include <cmath>
#include <vector>

#include "doctest.h"

#include "atlasforge/geom.hpp"
#include "atlasforge/nn.hpp"
#include "atlasforge/parallel.hpp"
#include "reference/reference.hpp"

using namespace atlasforge;

namespace {

bool close(double a, double b, double rel, double abs_tol = 1e-12) {
  return std::abs(a - b) <= abs_tol + rel * std::max({1.0, std::abs(a), std::abs(b)});
}

Matrix random_inputs(std::size_t n, int dim, Rng& rng) {
  Matrix m(n, static_cast<std::size_t>(dim));
  for (double& v : m.data) v = uniform_open(rng, -0.9, 0.9);
  return m;
}

// Sum of fixed random cotangents against the outputs: a scalar whose
// parameter gradient exercises every backward path at once.
double weighted_output_sum(const MlpParams& net, const Matrix& inputs, const Matrix& cot) {
  const Matrix out = mlp_forward(net, inputs);
  double s = 0.0;
  for (std::size_t i = 0; i < out.data.size(); ++i) s += cot.data[i] * out.data[i];
  return s;
}

// Sum of fixed random cotangents against all input Jacobians.
double weighted_jacobian_sum(const MlpParams& net, const Matrix& inputs,
                             const std::vector<double>& cot) {
  const std::vector<double> jac = mlp_input_jacobians(net, inputs);
  double s = 0.0;
  for (std::size_t i = 0; i < jac.size(); ++i) s += cot[i] * jac[i];
  return s;
}

std::vector<double> flat_grads(const MlpGrads& grads) {
  std::vector<double> flat;
  for (std::size_t l = 0; l < grads.dV.size(); ++l) {
    flat.insert(flat.end(), grads.dV[l].begin(), grads.dV[l].end());
    flat.insert(flat.end(), grads.dg[l].begin(), grads.dg[l].end());
    flat.insert(flat.end(), grads.db[l].begin(), grads.db[l].end());
  }
  return flat;
}

}  // namespace

TEST_CASE("positional encoding layout and values") {
  PosEncConfig cfg;
  cfg.octaves = 2;
  cfg.include_raw = true;
  CHECK(cfg.encoded_dim(3) == 15);

  Matrix pts(1, 3);
  pts.at(0, 0) = 0.25;
  pts.at(0, 1) = -0.5;
  pts.at(0, 2) = 1.0;
  const Matrix enc = positional_encode(cfg, pts);
  REQUIRE(enc.rows == 1);
  REQUIRE(enc.cols == 15);
  const double pi = 3.14159265358979323846;
  CHECK(enc.at(0, 0) == doctest::Approx(0.25));
  CHECK(enc.at(0, 1) == doctest::Approx(-0.5));
  CHECK(enc.at(0, 2) == doctest::Approx(1.0));
  // Octave 0: sin(pi x), then cos(pi x), components fastest.
  CHECK(enc.at(0, 3) == doctest::Approx(std::sin(pi * 0.25)));
  CHECK(enc.at(0, 4) == doctest::Approx(std::sin(pi * -0.5)));
  CHECK(enc.at(0, 5) == doctest::Approx(std::sin(pi * 1.0)));
  CHECK(enc.at(0, 6) == doctest::Approx(std::cos(pi * 0.25)));
  CHECK(enc.at(0, 8) == doctest::Approx(std::cos(pi * 1.0)));
  // Octave 1 doubles the frequency.
  CHECK(enc.at(0, 9) == doctest::Approx(std::sin(2.0 * pi * 0.25)));
  CHECK(enc.at(0, 12) == doctest::Approx(std::cos(2.0 * pi * 0.25)));

  PosEncConfig no_raw;
  no_raw.octaves = 1;
  no_raw.include_raw = false;
  CHECK(no_raw.encoded_dim(3) == 6);
  const Matrix enc2 = positional_encode(no_raw, pts);
  CHECK(enc2.cols == 6);
  CHECK(enc2.at(0, 0) == doctest::Approx(std::sin(pi * 0.25)));
}

TEST_CASE("chart network shape and init") {
  Rng rng(11);
  const MlpParams net = make_chart_mlp(16, rng);
  CHECK(net.input_dim == 2);
  REQUIRE(net.layers.size() == 4);
  CHECK(net.layers[0].in_dim == 2);
  CHECK(net.layers[0].out_dim == 16);
  CHECK(net.layers[2].concat_input);
  CHECK(net.layers[2].in_dim == 18);  // second hidden activation plus raw uv
  CHECK(net.layers[3].in_dim == 16);
  CHECK(net.layers[3].out_dim == 3);
  CHECK(net.layers[3].act == Activation::Linear);
  CHECK(net.layers[0].act == Activation::SoftPlus);
  // g starts at the row norms of V, so the effective weights equal V.
  for (const DenseLayer& layer : net.layers) {
    for (int o = 0; o < layer.out_dim; ++o) {
      double norm = 0.0;
      for (int i = 0; i < layer.in_dim; ++i) {
        const double v = layer.V[static_cast<std::size_t>(o) * layer.in_dim + i];
        norm += v * v;
      }
      CHECK(close(layer.g[static_cast<std::size_t>(o)], std::sqrt(norm), 1e-12));
      CHECK(layer.b[static_cast<std::size_t>(o)] == 0.0);
    }
  }
  // Bounded uniform init.
  const double bound0 = std::sqrt(6.0 / (2 + 16));
  for (double v : net.layers[0].V) CHECK(std::abs(v) < bound0);

  Rng rng2(11);
  const MlpParams net2 = make_chart_mlp(16, rng2);
  CHECK(net.layers[1].V == net2.layers[1].V);
}

TEST_CASE("forward pass matches the layer-by-layer oracle") {
  Rng rng(5);
  const MlpParams chart = make_chart_mlp(16, rng);
  PosEncConfig pe;
  const MlpParams field = make_field_mlp(16, pe.encoded_dim(3), rng);

  const Matrix uv = random_inputs(7, 2, rng);
  const Matrix out = mlp_forward(chart, uv);
  REQUIRE(out.rows == 7);
  REQUIRE(out.cols == 3);
  for (std::size_t s = 0; s < 7; ++s) {
    const std::vector<double> in(uv.row(s), uv.row(s) + 2);
    const std::vector<double> ref = testref::mlp_forward_ref(chart, in);
    for (int o = 0; o < 3; ++o) {
      CHECK(close(out.at(s, static_cast<std::size_t>(o)), ref[static_cast<std::size_t>(o)], 1e-10));
    }
  }

  const Matrix pts = random_inputs(5, 39, rng);
  const Matrix fout = mlp_forward(field, pts);
  REQUIRE(fout.cols == 1);
  for (std::size_t s = 0; s < 5; ++s) {
    const std::vector<double> in(pts.row(s), pts.row(s) + 39);
    const std::vector<double> ref = testref::mlp_forward_ref(field, in);
    CHECK(close(fout.at(s, 0), ref[0], 1e-10));
    CHECK(fout.at(s, 0) > 0.0);
    CHECK(fout.at(s, 0) < 1.0);
  }
}

TEST_CASE("explicit weights round-trip through weight normalization") {
  Rng rng(3);
  Matrix W(3, 2);
  for (double& v : W.data) v = uniform_open(rng, -2.0, 2.0);
  W.at(1, 0) = 0.0;
  W.at(1, 1) = 0.0;  // zero row must survive exactly
  const std::vector<double> bias = {0.5, -1.0, 0.25};
  MlpParams net;
  net.input_dim = 2;
  net.layers.push_back(layer_from_weights(W, bias, Activation::Linear));

  Matrix in(1, 2);
  in.at(0, 0) = 0.3;
  in.at(0, 1) = -0.7;
  const Matrix out = mlp_forward(net, in);
  for (int o = 0; o < 3; ++o) {
    const double expect = W.at(static_cast<std::size_t>(o), 0) * 0.3 +
                          W.at(static_cast<std::size_t>(o), 1) * -0.7 +
                          bias[static_cast<std::size_t>(o)];
    CHECK(close(out.at(0, static_cast<std::size_t>(o)), expect, 1e-14));
  }
}

TEST_CASE("softplus stays finite and linear far from the origin") {
  Matrix W(1, 1);
  W.at(0, 0) = 1.0;
  MlpParams net;
  net.input_dim = 1;
  net.layers.push_back(layer_from_weights(W, {0.0}, Activation::SoftPlus));

  Matrix in(3, 1);
  in.at(0, 0) = 1000.0;
  in.at(1, 0) = -200.0;
  in.at(2, 0) = 0.0;
  const Matrix out = mlp_forward(net, in);
  CHECK(out.at(0, 0) == doctest::Approx(1000.0));
  CHECK(std::isfinite(out.at(1, 0)));
  CHECK(out.at(1, 0) >= 0.0);
  // softplus(0) = log(2)/beta
  CHECK(out.at(2, 0) == doctest::Approx(std::log(2.0) / 100.0));
}

TEST_CASE("parameter gradients match finite differences") {
  Rng rng(17);
  MlpParams chart = make_chart_mlp(8, rng);
  const Matrix uv = random_inputs(5, 2, rng);
  Matrix cot(5, 3);
  for (double& v : cot.data) v = uniform_open(rng, -1.0, 1.0);

  Tape tape;
  mlp_forward(chart, uv, &tape);
  MlpGrads grads = make_grads(chart);
  mlp_backward_params(chart, tape, cot, grads, 1.0);
  const std::vector<double> flat = flat_grads(grads);

  std::vector<double*> slots = testref::param_slots(chart);
  REQUIRE(slots.size() == flat.size());
  const auto value = [&]() { return weighted_output_sum(chart, uv, cot); };
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double fd = testref::fd_slot(value, slots[i], 1e-4);
    CHECK(close(flat[i], fd, 1e-3, 1e-8));
  }
}

TEST_CASE("field gradients match finite differences through relu and sigmoid") {
  Rng rng(29);
  PosEncConfig pe;
  pe.octaves = 2;
  MlpParams field = make_field_mlp(8, pe.encoded_dim(3), rng);
  Rng prng(9);
  Matrix pts = random_inputs(4, 3, prng);
  const Matrix enc = positional_encode(pe, pts);
  Matrix cot(4, 1);
  for (double& v : cot.data) v = uniform_open(prng, -1.0, 1.0);

  // Finite differences lie near a relu kink; this fixture must sit clear of
  // every kink for the step size used below.
  Tape probe;
  mlp_forward(field, enc, &probe);
  for (std::size_t l = 0; l < field.layers.size(); ++l) {
    if (field.layers[l].act != Activation::ReLU) continue;
    // The finite-difference step below moves each preactivation by at most
    // ~1.4e-5, far inside this margin.
    for (double z : probe.preact[l].data) REQUIRE(std::abs(z) > 2e-2);
  }

  Tape tape;
  mlp_forward(field, enc, &tape);
  MlpGrads grads = make_grads(field);
  mlp_backward_params(field, tape, cot, grads, 1.0);
  const std::vector<double> flat = flat_grads(grads);

  std::vector<double*> slots = testref::param_slots(field);
  const auto value = [&]() { return weighted_output_sum(field, enc, cot); };
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double fd = testref::fd_slot(value, slots[i], 1e-6);
    CHECK(close(flat[i], fd, 1e-4, 1e-8));
  }
}

TEST_CASE("backward scale factor and accumulation") {
  Rng rng(7);
  MlpParams chart = make_chart_mlp(6, rng);
  const Matrix uv = random_inputs(3, 2, rng);
  Matrix cot(3, 3);
  for (double& v : cot.data) v = uniform_open(rng, -1.0, 1.0);

  Tape t1;
  mlp_forward(chart, uv, &t1);
  MlpGrads g1 = make_grads(chart);
  mlp_backward_params(chart, t1, cot, g1, 2.5);

  Tape t2;
  mlp_forward(chart, uv, &t2);
  Tape t3;
  mlp_forward(chart, uv, &t3);
  MlpGrads g2 = make_grads(chart);
  mlp_backward_params(chart, t2, cot, g2, 1.0);
  mlp_backward_params(chart, t3, cot, g2, 1.5);  // accumulates on top

  const std::vector<double> f1 = flat_grads(g1);
  const std::vector<double> f2 = flat_grads(g2);
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(close(f1[i], f2[i], 1e-12));
}

TEST_CASE("a tape cannot be consumed twice") {
  Rng rng(9);
  MlpParams chart = make_chart_mlp(4, rng);
  const Matrix uv = random_inputs(2, 2, rng);
  Tape tape;
  mlp_forward(chart, uv, &tape);
  Matrix cot(2, 3);
  MlpGrads grads = make_grads(chart);
  mlp_backward_params(chart, tape, cot, grads);
  CHECK_THROWS_AS(mlp_backward_params(chart, tape, cot, grads), Error);
  try {
    mlp_backward_params(chart, tape, cot, grads);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UsageError);
  }
}

TEST_CASE("input jacobians match finite differences") {
  Rng rng(23);
  const MlpParams chart = make_chart_mlp(8, rng);
  Matrix uv = random_inputs(4, 2, rng);
  const std::vector<double> jac = mlp_input_jacobians(chart, uv);
  REQUIRE(jac.size() == 4 * 6);

  for (std::size_t s = 0; s < 4; ++s) {
    for (int c = 0; c < 2; ++c) {
      double* slot = &uv.at(s, static_cast<std::size_t>(c));
      for (int o = 0; o < 3; ++o) {
        const auto value = [&]() { return mlp_forward(chart, uv).at(s, static_cast<std::size_t>(o)); };
        const double fd = testref::fd_slot(value, slot, 1e-5);
        CHECK(close(jac[6 * s + static_cast<std::size_t>(2 * o + c)], fd, 1e-4, 1e-9));
      }
    }
  }
}

TEST_CASE("jacobian parameter gradients match finite differences") {
  Rng rng(31);
  MlpParams chart = make_chart_mlp(6, rng);
  const Matrix uv = random_inputs(3, 2, rng);
  std::vector<double> cot(3 * 6);
  for (double& v : cot) v = uniform_open(rng, -1.0, 1.0);

  MlpGrads grads = make_grads(chart);
  mlp_jacobian_backward_params(chart, uv, cot, grads, 1.0);
  const std::vector<double> flat = flat_grads(grads);

  std::vector<double*> slots = testref::param_slots(chart);
  const auto value = [&]() { return weighted_jacobian_sum(chart, uv, cot); };
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double fd = testref::fd_slot(value, slots[i], 1e-4);
    CHECK(close(flat[i], fd, 2e-3, 1e-7));
  }
}

TEST_CASE("adam follows the reference update") {
  Matrix W(2, 2);
  W.at(0, 0) = 1.0;
  W.at(0, 1) = -0.5;
  W.at(1, 0) = 0.25;
  W.at(1, 1) = 2.0;
  MlpParams net;
  net.input_dim = 2;
  net.layers.push_back(layer_from_weights(W, {0.1, -0.2}, Activation::Linear));

  AdamState state = make_adam_state(net);
  MlpGrads grads = make_grads(net);
  Rng rng(2);
  for (double& v : grads.dV[0]) v = uniform_open(rng, -1.0, 1.0);
  for (double& v : grads.dg[0]) v = uniform_open(rng, -1.0, 1.0);
  for (double& v : grads.db[0]) v = uniform_open(rng, -1.0, 1.0);

  // Flatten before the update, then replay the textbook formulas.
  std::vector<double> before;
  for (double v : net.layers[0].V) before.push_back(v);
  for (double v : net.layers[0].g) before.push_back(v);
  for (double v : net.layers[0].b) before.push_back(v);
  std::vector<double> gflat = flat_grads(grads);

  adam_update(state, net, grads, 1e-2);
  CHECK(state.t == 1);

  std::vector<double> after;
  for (double v : net.layers[0].V) after.push_back(v);
  for (double v : net.layers[0].g) after.push_back(v);
  for (double v : net.layers[0].b) after.push_back(v);

  for (std::size_t i = 0; i < before.size(); ++i) {
    const double m = 0.1 * gflat[i];
    const double v = 0.001 * gflat[i] * gflat[i];
    const double mhat = m / (1.0 - 0.9);
    const double vhat = v / (1.0 - 0.999);
    const double expect = before[i] - 1e-2 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(close(after[i], expect, 1e-12));
  }

  // Second step uses both moments.
  MlpGrads g2 = make_grads(net);
  for (double& v : g2.dV[0]) v = 0.5;
  adam_update(state, net, g2, 1e-2);
  CHECK(state.t == 2);
}

TEST_CASE("zero learning rate leaves parameters bitwise untouched") {
  Rng rng(13);
  MlpParams chart = make_chart_mlp(8, rng);
  const MlpParams snapshot = chart;
  AdamState state = make_adam_state(chart);
  MlpGrads grads = make_grads(chart);
  for (auto& layer : grads.dV)
    for (double& v : layer) v = 1.0;
  adam_update(state, chart, grads, 0.0);
  for (std::size_t l = 0; l < chart.layers.size(); ++l) {
    CHECK(chart.layers[l].V == snapshot.layers[l].V);
    CHECK(chart.layers[l].g == snapshot.layers[l].g);
    CHECK(chart.layers[l].b == snapshot.layers[l].b);
  }
}

TEST_CASE("forward is identical across thread counts") {
  Rng rng(41);
  const MlpParams chart = make_chart_mlp(32, rng);
  const Matrix uv = random_inputs(1300, 2, rng);  // spans several reduction blocks

  set_threads(1);
  const Matrix a = mlp_forward(chart, uv);
  set_threads(4);
  const Matrix b = mlp_forward(chart, uv);
  set_threads(1);
  CHECK(a.data == b.data);
}

TEST_CASE("backward is identical across thread counts") {
  Rng rng(43);
  MlpParams chart = make_chart_mlp(16, rng);
  const Matrix uv = random_inputs(1100, 2, rng);
  Matrix cot(1100, 3);
  for (double& v : cot.data) v = uniform_open(rng, -1.0, 1.0);

  set_threads(1);
  Tape t1;
  mlp_forward(chart, uv, &t1);
  MlpGrads g1 = make_grads(chart);
  mlp_backward_params(chart, t1, cot, g1);

  set_threads(4);
  Tape t2;
  mlp_forward(chart, uv, &t2);
  MlpGrads g2 = make_grads(chart);
  mlp_backward_params(chart, t2, cot, g2);
  set_threads(1);

  CHECK(flat_grads(g1) == flat_grads(g2));
}
