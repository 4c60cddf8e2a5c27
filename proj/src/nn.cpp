#include "atlasforge/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "atlasforge/parallel.hpp"

namespace atlasforge {

namespace {

double dot4(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double act_apply(Activation act, double beta, double x) {
  switch (act) {
    case Activation::Linear: return x;
    case Activation::SoftPlus: {
      const double t = beta * x;
      return t > 30.0 ? x : std::log1p(std::exp(t)) / beta;
    }
    case Activation::ReLU: return x > 0.0 ? x : 0.0;
    case Activation::Sigmoid: return sigmoid(x);
  }
  return x;
}

double act_d(Activation act, double beta, double x) {
  switch (act) {
    case Activation::Linear: return 1.0;
    case Activation::SoftPlus: return sigmoid(beta * x);
    case Activation::ReLU: return x > 0.0 ? 1.0 : 0.0;  // subgradient 0 at the kink
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

double act_dd(Activation act, double beta, double x) {
  switch (act) {
    case Activation::Linear: return 0.0;
    case Activation::SoftPlus: {
      const double s = sigmoid(beta * x);
      return beta * s * (1.0 - s);
    }
    case Activation::ReLU: return 0.0;
    case Activation::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
  }
  return 0.0;
}

int prev_width(const MlpParams& net, std::size_t layer) {
  return layer == 0 ? net.input_dim : net.layers[layer - 1].out_dim;
}

int total_in(const MlpParams& net, std::size_t layer) {
  return prev_width(net, layer) + (net.layers[layer].concat_input ? net.input_dim : 0);
}

void validate_net(const MlpParams& net) {
  require(net.input_dim > 0 && !net.layers.empty(), ErrorKind::InvalidInput,
          "mlp: empty network");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    require(layer.in_dim == total_in(net, l), ErrorKind::InvalidInput,
            "mlp: layer input width does not match the wiring");
    require(layer.out_dim > 0, ErrorKind::InvalidInput, "mlp: empty layer");
    const std::size_t w = static_cast<std::size_t>(layer.in_dim) * layer.out_dim;
    require(layer.V.size() == w && layer.g.size() == static_cast<std::size_t>(layer.out_dim) &&
                layer.b.size() == static_cast<std::size_t>(layer.out_dim),
            ErrorKind::InvalidInput, "mlp: parameter shapes do not match layer dims");
  }
}

// Effective weights W = g * V / |V_row| plus the inverse row norms, which the
// backward chain reuses.
struct LayerWeights {
  std::vector<double> W;
  std::vector<double> inv_norm;
};

std::vector<LayerWeights> effective_weights(const MlpParams& net) {
  std::vector<LayerWeights> out(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    const int in = layer.in_dim, on = layer.out_dim;
    out[l].W.resize(static_cast<std::size_t>(in) * on);
    out[l].inv_norm.resize(on);
    for (int o = 0; o < on; ++o) {
      const double* v = layer.V.data() + static_cast<std::size_t>(o) * in;
      const double nrm = std::sqrt(dot4(v, v, in));
      require(nrm > 0.0, ErrorKind::InvalidInput, "mlp: zero direction row");
      const double s = layer.g[o] / nrm;
      double* w = out[l].W.data() + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) w[i] = s * v[i];
      out[l].inv_norm[o] = 1.0 / nrm;
    }
  }
  return out;
}

// dW/db on the effective weights of one layer, chained through the weight
// normalization and accumulated in parameter space.
void chain_weight_norm(const DenseLayer& layer, const LayerWeights& eff, const double* dW,
                       const double* db, double scale, std::vector<double>& dV,
                       std::vector<double>& dg, std::vector<double>& dbias) {
  const int in = layer.in_dim, on = layer.out_dim;
  for (int o = 0; o < on; ++o) {
    const double inv = eff.inv_norm[o];
    const double* v = layer.V.data() + static_cast<std::size_t>(o) * in;
    const double* dw = dW + static_cast<std::size_t>(o) * in;
    double proj = 0.0;  // <dW_row, v/|v|>
    for (int i = 0; i < in; ++i) proj += dw[i] * v[i] * inv;
    dg[o] += scale * proj;
    const double gs = layer.g[o] * inv;
    double* dvr = dV.data() + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) dvr[i] += scale * gs * (dw[i] - proj * v[i] * inv);
    dbias[o] += scale * db[o];
  }
}

}  // namespace

std::size_t MlpParams::param_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers)
    n += static_cast<std::size_t>(l.in_dim) * l.out_dim + 2 * static_cast<std::size_t>(l.out_dim);
  return n;
}

namespace {

DenseLayer init_layer(int in, int out, Activation act, bool concat, Rng& rng) {
  DenseLayer layer;
  layer.in_dim = in;
  layer.out_dim = out;
  layer.act = act;
  layer.concat_input = concat;
  layer.V.resize(static_cast<std::size_t>(in) * out);
  layer.g.resize(out);
  layer.b.assign(out, 0.0);
  const double bound = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (int o = 0; o < out; ++o) {
    double* v = layer.V.data() + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) v[i] = dist(rng);
    layer.g[o] = std::sqrt(dot4(v, v, in));
  }
  return layer;
}

}  // namespace

MlpParams make_chart_mlp(int hidden_width, Rng& rng) {
  require(hidden_width > 0, ErrorKind::InvalidInput, "make_chart_mlp: bad width");
  MlpParams net;
  net.input_dim = 2;
  net.layers.push_back(init_layer(2, hidden_width, Activation::SoftPlus, false, rng));
  net.layers.push_back(init_layer(hidden_width, hidden_width, Activation::SoftPlus, false, rng));
  net.layers.push_back(init_layer(hidden_width + 2, hidden_width, Activation::SoftPlus, true, rng));
  net.layers.push_back(init_layer(hidden_width, 3, Activation::Linear, false, rng));
  return net;
}

MlpParams make_field_mlp(int hidden_width, int input_dim, Rng& rng) {
  require(hidden_width > 0 && input_dim > 0, ErrorKind::InvalidInput, "make_field_mlp: bad dims");
  MlpParams net;
  net.input_dim = input_dim;
  net.layers.push_back(init_layer(input_dim, hidden_width, Activation::ReLU, false, rng));
  net.layers.push_back(init_layer(hidden_width, hidden_width, Activation::ReLU, false, rng));
  net.layers.push_back(
      init_layer(hidden_width + input_dim, hidden_width, Activation::ReLU, true, rng));
  net.layers.push_back(init_layer(hidden_width, 1, Activation::Sigmoid, false, rng));
  return net;
}

DenseLayer layer_from_weights(const Matrix& W, const std::vector<double>& bias, Activation act,
                              bool concat_input, double beta) {
  require(W.rows > 0 && W.cols > 0 && bias.size() == W.rows, ErrorKind::InvalidInput,
          "layer_from_weights: bad shapes");
  DenseLayer layer;
  layer.in_dim = static_cast<int>(W.cols);
  layer.out_dim = static_cast<int>(W.rows);
  layer.act = act;
  layer.beta = beta;
  layer.concat_input = concat_input;
  layer.V.resize(W.data.size());
  layer.g.resize(W.rows);
  layer.b = bias;
  for (std::size_t o = 0; o < W.rows; ++o) {
    const double* w = W.row(o);
    double nrm = std::sqrt(dot4(w, w, static_cast<int>(W.cols)));
    double* v = layer.V.data() + o * W.cols;
    if (nrm > 0.0) {
      std::copy(w, w + W.cols, v);
      layer.g[o] = nrm;
    } else {
      // A zero effective row keeps a unit direction and zero magnitude.
      v[0] = 1.0;
      layer.g[o] = 0.0;
    }
  }
  return layer;
}

Matrix positional_encode(const PosEncConfig& cfg, const Matrix& points) {
  require(cfg.octaves >= 0, ErrorKind::InvalidInput, "positional_encode: bad octaves");
  const int raw = static_cast<int>(points.cols);
  const int out_dim = cfg.encoded_dim(raw);
  Matrix out(points.rows, out_dim);
  parallel_for(points.rows, [&](std::size_t r) {
    const double* p = points.row(r);
    double* o = out.row(r);
    int k = 0;
    if (cfg.include_raw)
      for (int j = 0; j < raw; ++j) o[k++] = p[j];
    double freq = std::numbers::pi;
    for (int i = 0; i < cfg.octaves; ++i) {
      for (int j = 0; j < raw; ++j) o[k++] = std::sin(freq * p[j]);
      for (int j = 0; j < raw; ++j) o[k++] = std::cos(freq * p[j]);
      freq *= 2.0;
    }
  });
  return out;
}

Matrix positional_encode(const PosEncConfig& cfg, const PointCloud3& points) {
  Matrix m(points.size(), 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    m.at(i, 0) = points[i].x;
    m.at(i, 1) = points[i].y;
    m.at(i, 2) = points[i].z;
  }
  return positional_encode(cfg, m);
}

Matrix mlp_forward(const MlpParams& net, const Matrix& inputs, Tape* tape) {
  validate_net(net);
  require(inputs.cols == static_cast<std::size_t>(net.input_dim), ErrorKind::InvalidInput,
          "mlp_forward: input width mismatch");
  const std::vector<LayerWeights> eff = effective_weights(net);
  const std::size_t B = inputs.rows;

  if (tape) {
    tape->inputs.clear();
    tape->preact.clear();
    tape->consumed = false;
  }

  Matrix cur = inputs;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    Matrix layer_in(B, layer.in_dim);
    const std::size_t prev = cur.cols;
    parallel_for(B, [&](std::size_t s) {
      double* dst = layer_in.row(s);
      const double* src = cur.row(s);
      std::copy(src, src + prev, dst);
      if (layer.concat_input) {
        const double* raw = inputs.row(s);
        std::copy(raw, raw + net.input_dim, dst + prev);
      }
    });

    Matrix z(B, layer.out_dim);
    Matrix a(B, layer.out_dim);
    const double* W = eff[l].W.data();
    parallel_for(B, [&](std::size_t s) {
      const double* in = layer_in.row(s);
      double* zs = z.row(s);
      double* as = a.row(s);
      for (int o = 0; o < layer.out_dim; ++o) {
        const double v = dot4(W + static_cast<std::size_t>(o) * layer.in_dim, in, layer.in_dim) +
                         layer.b[o];
        zs[o] = v;
        as[o] = act_apply(layer.act, layer.beta, v);
      }
    });

    if (tape) {
      tape->inputs.push_back(std::move(layer_in));
      tape->preact.push_back(std::move(z));
    }
    cur = std::move(a);
  }
  return cur;
}

MlpGrads make_grads(const MlpParams& net) {
  MlpGrads g;
  g.dV.resize(net.layers.size());
  g.dg.resize(net.layers.size());
  g.db.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    g.dV[l].assign(net.layers[l].V.size(), 0.0);
    g.dg[l].assign(net.layers[l].g.size(), 0.0);
    g.db[l].assign(net.layers[l].b.size(), 0.0);
  }
  return g;
}

void mlp_backward_params(const MlpParams& net, Tape& tape, const Matrix& out_cotangents,
                         MlpGrads& accum, double scale) {
  validate_net(net);
  require(!tape.consumed, ErrorKind::UsageError, "mlp_backward_params: tape already consumed");
  require(tape.inputs.size() == net.layers.size(), ErrorKind::UsageError,
          "mlp_backward_params: tape does not match the network");
  const std::size_t B = out_cotangents.rows;
  require(B == tape.preact.back().rows &&
              out_cotangents.cols == static_cast<std::size_t>(net.output_dim()),
          ErrorKind::InvalidInput, "mlp_backward_params: cotangent shape mismatch");
  tape.consumed = true;

  const std::vector<LayerWeights> eff = effective_weights(net);

  Matrix cot = out_cotangents;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const DenseLayer& layer = net.layers[li];
    const Matrix& z = tape.preact[li];
    const Matrix& a_in = tape.inputs[li];
    const int in = layer.in_dim, on = layer.out_dim;

    // dz = cot * act'(z), with a per-sample liveness flag so all-zero
    // cotangent rows skip the expensive accumulations below.
    Matrix dz(B, on);
    std::vector<std::uint8_t> live(B, 0);
    parallel_for(B, [&](std::size_t s) {
      const double* cs = cot.row(s);
      const double* zs = z.row(s);
      double* ds = dz.row(s);
      std::uint8_t any = 0;
      if (layer.act == Activation::Linear) {
        for (int o = 0; o < on; ++o) {
          ds[o] = cs[o];
          any |= (cs[o] != 0.0);
        }
      } else {
        for (int o = 0; o < on; ++o) {
          ds[o] = cs[o] == 0.0 ? 0.0 : cs[o] * act_d(layer.act, layer.beta, zs[o]);
          any |= (ds[o] != 0.0);
        }
      }
      live[s] = any;
    });

    // Block-deterministic accumulation of dW and db.
    const std::size_t wsize = static_cast<std::size_t>(in) * on;
    const std::size_t nb = block_count(B);
    std::vector<double> blockW(nb * wsize, 0.0);
    std::vector<double> blockB(nb * static_cast<std::size_t>(on), 0.0);
    parallel_blocks(B, [&](std::size_t bi, std::size_t s0, std::size_t s1) {
      double* bw = blockW.data() + bi * wsize;
      double* bb = blockB.data() + bi * on;
      for (std::size_t s = s0; s < s1; ++s) {
        if (!live[s]) continue;
        const double* ds = dz.row(s);
        const double* as = a_in.row(s);
        for (int o = 0; o < on; ++o) {
          const double c = ds[o];
          if (c == 0.0) continue;
          bb[o] += c;
          double* wrow = bw + static_cast<std::size_t>(o) * in;
          for (int i = 0; i < in; ++i) wrow[i] += c * as[i];
        }
      }
    });
    std::vector<double> dW(wsize, 0.0), db(on, 0.0);
    for (std::size_t bi = 0; bi < nb; ++bi) {
      const double* bw = blockW.data() + bi * wsize;
      for (std::size_t j = 0; j < wsize; ++j) dW[j] += bw[j];
      const double* bb = blockB.data() + bi * on;
      for (int o = 0; o < on; ++o) db[o] += bb[o];
    }
    chain_weight_norm(layer, eff[li], dW.data(), db.data(), scale, accum.dV[li], accum.dg[li],
                      accum.db[li]);

    if (li == 0) break;
    const int prev = prev_width(net, li);
    Matrix next_cot(B, prev);
    const double* W = eff[li].W.data();
    parallel_for(B, [&](std::size_t s) {
      double* nc = next_cot.row(s);
      std::fill(nc, nc + prev, 0.0);
      if (!live[s]) return;
      const double* ds = dz.row(s);
      for (int o = 0; o < on; ++o) {
        const double c = ds[o];
        if (c == 0.0) continue;
        const double* wrow = W + static_cast<std::size_t>(o) * in;
        // The concat tail (raw network input) receives no parameter gradient.
        for (int i = 0; i < prev; ++i) nc[i] += c * wrow[i];
      }
    });
    cot = std::move(next_cot);
  }
}

namespace {

// Per-layer storage for one sample's forward-mode sweep (all input columns at
// once). Tangent matrices are row-major width x D.
struct Sweep {
  std::vector<std::vector<double>> in_vec;  // per layer, in_dim
  std::vector<std::vector<double>> tin;     // per layer, in_dim * D
  std::vector<std::vector<double>> z;       // per layer, out_dim
  std::vector<std::vector<double>> tz;      // per layer, out_dim * D (pre-activation tangents)
  std::vector<double> out_tangent;          // out_dim * D
};

void forward_sweep(const MlpParams& net, const std::vector<LayerWeights>& eff, const double* x,
                   Sweep& sw) {
  const int D = net.input_dim;
  const std::size_t L = net.layers.size();
  sw.in_vec.resize(L);
  sw.tin.resize(L);
  sw.z.resize(L);
  sw.tz.resize(L);

  std::vector<double> a(x, x + D);
  std::vector<double> ta(static_cast<std::size_t>(D) * D, 0.0);
  for (int i = 0; i < D; ++i) ta[static_cast<std::size_t>(i) * D + i] = 1.0;

  for (std::size_t l = 0; l < L; ++l) {
    const DenseLayer& layer = net.layers[l];
    const int in = layer.in_dim, on = layer.out_dim;
    const int prev = static_cast<int>(a.size());

    auto& iv = sw.in_vec[l];
    auto& ti = sw.tin[l];
    iv.assign(in, 0.0);
    ti.assign(static_cast<std::size_t>(in) * D, 0.0);
    std::copy(a.begin(), a.end(), iv.begin());
    std::copy(ta.begin(), ta.end(), ti.begin());
    if (layer.concat_input) {
      for (int j = 0; j < D; ++j) {
        iv[prev + j] = x[j];
        ti[static_cast<std::size_t>(prev + j) * D + j] = 1.0;
      }
    }

    auto& zv = sw.z[l];
    auto& tzv = sw.tz[l];
    zv.assign(on, 0.0);
    tzv.assign(static_cast<std::size_t>(on) * D, 0.0);
    const double* W = eff[l].W.data();
    for (int o = 0; o < on; ++o) {
      const double* wrow = W + static_cast<std::size_t>(o) * in;
      zv[o] = dot4(wrow, iv.data(), in) + layer.b[o];
      double* trow = tzv.data() + static_cast<std::size_t>(o) * D;
      for (int i = 0; i < in; ++i) {
        const double w = wrow[i];
        if (w == 0.0) continue;
        const double* tr = ti.data() + static_cast<std::size_t>(i) * D;
        for (int c = 0; c < D; ++c) trow[c] += w * tr[c];
      }
    }

    a.assign(on, 0.0);
    ta.assign(static_cast<std::size_t>(on) * D, 0.0);
    for (int o = 0; o < on; ++o) {
      a[o] = act_apply(layer.act, layer.beta, zv[o]);
      const double d = act_d(layer.act, layer.beta, zv[o]);
      const double* trow = tzv.data() + static_cast<std::size_t>(o) * D;
      double* tar = ta.data() + static_cast<std::size_t>(o) * D;
      for (int c = 0; c < D; ++c) tar[c] = d * trow[c];
    }
  }
  sw.out_tangent = ta;
}

}  // namespace

std::vector<double> mlp_input_jacobians(const MlpParams& net, const Matrix& inputs) {
  validate_net(net);
  require(inputs.cols == static_cast<std::size_t>(net.input_dim), ErrorKind::InvalidInput,
          "mlp_input_jacobians: input width mismatch");
  const std::vector<LayerWeights> eff = effective_weights(net);
  const int D = net.input_dim;
  const int E = net.output_dim();
  std::vector<double> out(inputs.rows * static_cast<std::size_t>(E) * D);
  parallel_blocks(inputs.rows, [&](std::size_t, std::size_t s0, std::size_t s1) {
    Sweep sw;
    for (std::size_t s = s0; s < s1; ++s) {
      forward_sweep(net, eff, inputs.row(s), sw);
      std::copy(sw.out_tangent.begin(), sw.out_tangent.end(),
                out.begin() + s * static_cast<std::size_t>(E) * D);
    }
  });
  return out;
}

void mlp_jacobian_backward_params(const MlpParams& net, const Matrix& inputs,
                                  const std::vector<double>& jac_cotangents, MlpGrads& accum,
                                  double scale) {
  validate_net(net);
  const int D = net.input_dim;
  const int E = net.output_dim();
  const std::size_t B = inputs.rows;
  require(jac_cotangents.size() == B * static_cast<std::size_t>(E) * D, ErrorKind::InvalidInput,
          "mlp_jacobian_backward_params: cotangent size mismatch");
  const std::vector<LayerWeights> eff = effective_weights(net);
  const std::size_t L = net.layers.size();

  std::vector<std::size_t> woff(L + 1, 0);
  std::vector<std::size_t> boff(L + 1, 0);
  for (std::size_t l = 0; l < L; ++l) {
    woff[l + 1] = woff[l] + net.layers[l].V.size();
    boff[l + 1] = boff[l] + net.layers[l].b.size();
  }

  const std::size_t nb = block_count(B);
  std::vector<double> blockW(nb * woff[L], 0.0);
  std::vector<double> blockB(nb * boff[L], 0.0);

  parallel_blocks(B, [&](std::size_t bi, std::size_t s0, std::size_t s1) {
    double* bW = blockW.data() + bi * woff[L];
    double* bB = blockB.data() + bi * boff[L];
    Sweep sw;
    std::vector<double> dt, da, dzt, dz, ndt, nda;
    for (std::size_t s = s0; s < s1; ++s) {
      forward_sweep(net, eff, inputs.row(s), sw);

      // Seed: the cotangent sits on the output tangents (the Jacobian).
      const double* cot = jac_cotangents.data() + s * static_cast<std::size_t>(E) * D;
      dt.assign(cot, cot + static_cast<std::size_t>(E) * D);
      da.assign(E, 0.0);

      for (std::size_t li = L; li-- > 0;) {
        const DenseLayer& layer = net.layers[li];
        const int in = layer.in_dim, on = layer.out_dim;
        const auto& zv = sw.z[li];
        const auto& tzv = sw.tz[li];
        const auto& iv = sw.in_vec[li];
        const auto& ti = sw.tin[li];

        // Through the activation: dzt is the adjoint of the pre-activation
        // tangent, dz the adjoint of the pre-activation itself. The curvature
        // term act''(z) * tz * dt is what makes this second-order.
        dzt.assign(static_cast<std::size_t>(on) * D, 0.0);
        dz.assign(on, 0.0);
        if (layer.act == Activation::Linear) {
          dzt = dt;
          dz = da;
        } else {
          for (int o = 0; o < on; ++o) {
            const double d1 = act_d(layer.act, layer.beta, zv[o]);
            const double d2 = act_dd(layer.act, layer.beta, zv[o]);
            const double* dto = dt.data() + static_cast<std::size_t>(o) * D;
            const double* tzo = tzv.data() + static_cast<std::size_t>(o) * D;
            double* dzto = dzt.data() + static_cast<std::size_t>(o) * D;
            double acc = d1 * da[o];
            for (int c = 0; c < D; ++c) {
              dzto[c] = d1 * dto[c];
              acc += d2 * tzo[c] * dto[c];
            }
            dz[o] = acc;
          }
        }

        double* bWl = bW + woff[li];
        double* bBl = bB + boff[li];
        for (int o = 0; o < on; ++o) {
          bBl[o] += dz[o];
          double* wrow = bWl + static_cast<std::size_t>(o) * in;
          const double* dzto = dzt.data() + static_cast<std::size_t>(o) * D;
          for (int i = 0; i < in; ++i) {
            double w = dz[o] * iv[i];
            const double* tir = ti.data() + static_cast<std::size_t>(i) * D;
            for (int c = 0; c < D; ++c) w += dzto[c] * tir[c];
            wrow[i] += w;
          }
        }

        if (li == 0) break;
        const int prev = prev_width(net, li);
        ndt.assign(static_cast<std::size_t>(prev) * D, 0.0);
        nda.assign(prev, 0.0);
        const double* W = eff[li].W.data();
        for (int o = 0; o < on; ++o) {
          const double* wrow = W + static_cast<std::size_t>(o) * in;
          const double* dzto = dzt.data() + static_cast<std::size_t>(o) * D;
          const double c0 = dz[o];
          for (int i = 0; i < prev; ++i) {
            const double w = wrow[i];
            if (w == 0.0) continue;
            nda[i] += w * c0;
            double* nr = ndt.data() + static_cast<std::size_t>(i) * D;
            for (int c = 0; c < D; ++c) nr[c] += w * dzto[c];
          }
        }
        dt.swap(ndt);
        da.swap(nda);
      }
    }
  });

  for (std::size_t li = 0; li < L; ++li) {
    const std::size_t wsize = net.layers[li].V.size();
    const std::size_t bsize = net.layers[li].b.size();
    std::vector<double> dW(wsize, 0.0), db(bsize, 0.0);
    for (std::size_t bi = 0; bi < nb; ++bi) {
      const double* bw = blockW.data() + bi * woff[L] + woff[li];
      for (std::size_t j = 0; j < wsize; ++j) dW[j] += bw[j];
      const double* bb = blockB.data() + bi * boff[L] + boff[li];
      for (std::size_t j = 0; j < bsize; ++j) db[j] += bb[j];
    }
    chain_weight_norm(net.layers[li], eff[li], dW.data(), db.data(), scale, accum.dV[li],
                      accum.dg[li], accum.db[li]);
  }
}

AdamState make_adam_state(const MlpParams& net) {
  AdamState s;
  s.m.assign(net.param_count(), 0.0);
  s.v.assign(net.param_count(), 0.0);
  return s;
}

void adam_update(AdamState& state, MlpParams& net, const MlpGrads& grads, double lr,
                 const AdamConfig& cfg) {
  require(state.m.size() == net.param_count(), ErrorKind::UsageError,
          "adam_update: state does not match the network");
  require(grads.dV.size() == net.layers.size(), ErrorKind::UsageError,
          "adam_update: gradient does not match the network");
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  std::size_t k = 0;
  auto update = [&](double* p, const double* gr, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i, ++k) {
      const double g = gr[i];
      state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
      state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
      const double mhat = state.m[k] / bc1;
      const double vhat = state.v[k] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    DenseLayer& layer = net.layers[l];
    update(layer.V.data(), grads.dV[l].data(), layer.V.size());
    update(layer.g.data(), grads.dg[l].data(), layer.g.size());
    update(layer.b.data(), grads.db[l].data(), layer.b.size());
  }
}

}  // namespace atlasforge
