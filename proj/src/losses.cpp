#include "atlasforge/losses.hpp"

#include <algorithm>
#include <cmath>

#include "atlasforge/neighbor.hpp"
#include "atlasforge/parallel.hpp"

namespace atlasforge {

std::size_t LabelAssignment::labeled_count() const {
  std::size_t n = 0;
  for (const auto& chart : labels)
    for (std::uint8_t f : chart) n += f;
  return n;
}

LabelAssignment label_nearest(const PointCloud3& target, const std::vector<Matrix>& maximal) {
  require(!target.empty(), ErrorKind::InvalidInput, "label_nearest: empty target");
  std::size_t total = 0;
  for (const Matrix& m : maximal) {
    require(m.cols == 3, ErrorKind::InvalidInput, "label_nearest: maximal points must be 3D");
    total += m.rows;
  }
  require(total > 0, ErrorKind::InvalidInput, "label_nearest: no maximal points");

  PointCloud3 pooled(total);
  std::vector<std::pair<int, int>> origin(total);
  std::size_t k = 0;
  for (std::size_t c = 0; c < maximal.size(); ++c) {
    for (std::size_t s = 0; s < maximal[c].rows; ++s, ++k) {
      const double* r = maximal[c].row(s);
      pooled[k] = {r[0], r[1], r[2]};
      origin[k] = {static_cast<int>(c), static_cast<int>(s)};
    }
  }

  const UniformGridIndex index = build_grid_index(std::move(pooled));
  const std::vector<NearestHit> hits = nearest_batch(index, target);

  LabelAssignment out;
  out.labels.resize(maximal.size());
  for (std::size_t c = 0; c < maximal.size(); ++c) out.labels[c].assign(maximal[c].rows, 0);
  out.nearest.resize(target.size());
  for (std::size_t t = 0; t < target.size(); ++t) {
    const auto [chart, sample] = origin[hits[t].index];
    out.nearest[t] = {chart, sample};
    out.labels[chart][sample] = 1;
  }
  return out;
}

ReconstructionLoss loss_reconstruction(const PointCloud3& target,
                                       const std::vector<Matrix>& maximal,
                                       const LabelAssignment& assign) {
  require(assign.nearest.size() == target.size(), ErrorKind::InvalidInput,
          "loss_reconstruction: assignment does not match the target");
  ReconstructionLoss out;
  out.cotangents.resize(maximal.size());
  for (std::size_t c = 0; c < maximal.size(); ++c)
    out.cotangents[c] = Matrix(maximal[c].rows, 3);

  const double inv_n = 1.0 / static_cast<double>(target.size());
  std::vector<double> terms(target.size());
  parallel_for(target.size(), [&](std::size_t t) {
    const auto [chart, sample] = assign.nearest[t];
    const double* p = maximal[chart].row(sample);
    const Vec3 d{p[0] - target[t].x, p[1] - target[t].y, p[2] - target[t].z};
    terms[t] = sq_norm(d);
  });
  // Cotangents accumulate serially in target order; several targets may share
  // one maximal point.
  for (std::size_t t = 0; t < target.size(); ++t) {
    const auto [chart, sample] = assign.nearest[t];
    const double* p = maximal[chart].row(sample);
    double* c = out.cotangents[chart].row(sample);
    c[0] += 2.0 * (p[0] - target[t].x) * inv_n;
    c[1] += 2.0 * (p[1] - target[t].y) * inv_n;
    c[2] += 2.0 * (p[2] - target[t].z) * inv_n;
  }
  out.value = ordered_sum(terms.data(), terms.size()) * inv_n;
  return out;
}

namespace {

constexpr double kBceClamp = 1e-7;

}  // namespace

OccupancyLoss loss_occupancy(const std::vector<std::vector<std::uint8_t>>& labels,
                             const std::vector<std::vector<double>>& probs) {
  require(labels.size() == probs.size(), ErrorKind::InvalidInput,
          "loss_occupancy: chart count mismatch");
  std::size_t total = 0;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    require(labels[c].size() == probs[c].size(), ErrorKind::InvalidInput,
            "loss_occupancy: per-chart size mismatch");
    total += labels[c].size();
  }
  require(total > 0, ErrorKind::InvalidInput, "loss_occupancy: no samples");

  OccupancyLoss out;
  out.cotangents.resize(probs.size());
  const double inv_n = 1.0 / static_cast<double>(total);
  std::vector<double> terms;
  terms.reserve(total);
  for (std::size_t c = 0; c < probs.size(); ++c) {
    out.cotangents[c].assign(probs[c].size(), 0.0);
    for (std::size_t s = 0; s < probs[c].size(); ++s) {
      const double p = probs[c][s];
      const double y = labels[c][s] ? 1.0 : 0.0;
      const double ph = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
      terms.push_back(-(y * std::log(ph) + (1.0 - y) * std::log1p(-ph)));
      // Inside the clamp the slope is (p-y)/(p(1-p)); a clamped sample sits on
      // the flat part and gets none.
      if (p > kBceClamp && p < 1.0 - kBceClamp)
        out.cotangents[c][s] = (p - y) / (p * (1.0 - p)) * inv_n;
    }
  }
  out.value = ordered_sum(terms.data(), terms.size()) * inv_n;
  return out;
}

namespace {

// The tensor arithmetic alone; validation stays outside parallel regions
// because a thrown exception must not escape them.
MetricTensor2 metric_tensor_raw(const Jac32& j, double eps) {
  // Columns of the 3x2 Jacobian.
  const double c00 = j[0], c01 = j[1];
  const double c10 = j[2], c11 = j[3];
  const double c20 = j[4], c21 = j[5];
  MetricTensor2 g;
  g.a = c00 * c00 + c10 * c10 + c20 * c20 + eps;
  g.b = c00 * c01 + c10 * c11 + c20 * c21;
  g.d = c01 * c01 + c11 * c11 + c21 * c21 + eps;
  return g;
}

}  // namespace

MetricTensor2 metric_tensor(const Jac32& j, double eps) {
  const MetricTensor2 g = metric_tensor_raw(j, eps);
  require(g.det() > 0.0, ErrorKind::NumericalError,
          "metric_tensor: conditioned tensor is not positive definite");
  return g;
}

DistortionLoss loss_distortion(const std::vector<Jac32>& jacobians, double eps) {
  DistortionLoss out;
  if (jacobians.empty()) return out;

  const std::size_t n = jacobians.size();
  std::vector<MetricTensor2> tensors(n);
  std::vector<double> traces(n), traces_inv(n);
  parallel_for(n, [&](std::size_t s) { tensors[s] = metric_tensor_raw(jacobians[s], eps); });
  for (const MetricTensor2& g : tensors) {
    require(g.det() > 0.0, ErrorKind::NumericalError,
            "loss_distortion: conditioned tensor is not positive definite");
  }
  parallel_for(n, [&](std::size_t s) {
    traces[s] = tensors[s].trace();
    traces_inv[s] = tensors[s].trace_inv();
  });
  const double inv_n = 1.0 / static_cast<double>(n);
  const double A = ordered_sum(traces.data(), n) * inv_n;
  const double B = ordered_sum(traces_inv.data(), n) * inv_n;
  require(A > 0.0 && B > 0.0, ErrorKind::NumericalError, "loss_distortion: degenerate tensors");
  out.value = 2.0 * std::sqrt(A * B);

  // d value / d A = sqrt(B/A), d value / d B = sqrt(A/B);
  // d A / d g_s = I/n, d B / d g_s = -g_s^{-2}/n, d(J^T J)/dJ pulls back as 2 J M.
  const double dA = std::sqrt(B / A);
  const double dB = std::sqrt(A / B);
  out.cotangents.resize(n);
  parallel_for(n, [&](std::size_t s) {
    const MetricTensor2& g = tensors[s];
    const double det = g.det();
    // g^{-1} = [[d,-b],[-b,a]]/det, squared while still symmetric.
    const double ia = g.d / det, ib = -g.b / det, id = g.a / det;
    const double q_a = ia * ia + ib * ib;
    const double q_b = ib * (ia + id);
    const double q_d = ib * ib + id * id;
    const double m_a = (dA - dB * q_a) * inv_n;
    const double m_b = (-dB * q_b) * inv_n;
    const double m_d = (dA - dB * q_d) * inv_n;
    const Jac32& j = jacobians[s];
    Jac32& c = out.cotangents[s];
    for (int r = 0; r < 3; ++r) {
      const double j0 = j[2 * r], j1 = j[2 * r + 1];
      c[2 * r] = 2.0 * (j0 * m_a + j1 * m_b);
      c[2 * r + 1] = 2.0 * (j0 * m_b + j1 * m_d);
    }
  });
  return out;
}

double stretch_energy_at_scale(double mean_trace, double mean_trace_inv, double L, double eps) {
  const double s = L * L + eps;
  require(s > 0.0, ErrorKind::InvalidInput, "stretch_energy_at_scale: non-positive scale");
  return mean_trace / s + s * mean_trace_inv;
}

double optimal_scale_sq(double mean_trace, double mean_trace_inv, double eps) {
  require(mean_trace > 0.0 && mean_trace_inv > 0.0, ErrorKind::InvalidInput,
          "optimal_scale_sq: means must be positive");
  return std::max(0.0, std::sqrt(mean_trace / mean_trace_inv) - eps);
}

double total_loss(const LossWeights& w, double rec, double occ, double dist) {
  const double v = w.rec * rec + w.occ * occ + w.dist * dist;
  require(std::isfinite(v), ErrorKind::NumericalError, "total_loss: non-finite loss");
  return v;
}

}  // namespace atlasforge
