#pragma once

#include <array>
#include <utility>
#include <vector>

#include "atlasforge/nn.hpp"
#include "atlasforge/types.hpp"

namespace atlasforge {

struct LossWeights {
  double rec = 1.0;
  double occ = 1.0;
  double dist = 1e-5;
};

// Nearest-neighbor labeling over the pooled maximal points of all charts:
// a sample is labeled when at least one target selects it.
struct LabelAssignment {
  std::vector<std::vector<std::uint8_t>> labels;  // per chart, per sample
  std::vector<std::pair<int, int>> nearest;       // per target: (chart, sample)
  std::size_t labeled_count() const;
};

LabelAssignment label_nearest(const PointCloud3& target, const std::vector<Matrix>& maximal);

// Mean squared distance from each target to its nearest maximal point. The
// nearest indices are held fixed for the gradient (envelope rule), so the
// cotangent on an assigned point is 2*(point - target)/|targets|.
struct ReconstructionLoss {
  double value = 0.0;
  std::vector<Matrix> cotangents;  // per chart, same shape as the maximal points
};

ReconstructionLoss loss_reconstruction(const PointCloud3& target,
                                       const std::vector<Matrix>& maximal,
                                       const LabelAssignment& assign);

// Mean binary cross entropy of the field probabilities against the labels,
// over all samples of all charts. Probabilities enter clamped to
// [1e-7, 1-1e-7]; a clamped sample contributes zero gradient (the clamp is
// flat there). Gradients exist for the field only; the maximal points the
// field was evaluated at are treated as constants.
struct OccupancyLoss {
  double value = 0.0;
  std::vector<std::vector<double>> cotangents;  // per chart, d value / d probability
};

OccupancyLoss loss_occupancy(const std::vector<std::vector<std::uint8_t>>& labels,
                             const std::vector<std::vector<double>>& probs);

// Symmetric 2x2 first fundamental form [[a,b],[b,d]].
struct MetricTensor2 {
  double a = 0.0, b = 0.0, d = 0.0;
  double trace() const { return a + d; }
  double det() const { return a * d - b * b; }
  double trace_inv() const { return trace() / det(); }
};

using Jac32 = std::array<double, 6>;  // row-major 3x2 input Jacobian

// J^T J + eps I. The conditioned determinant must stay positive.
MetricTensor2 metric_tensor(const Jac32& jac, double eps);

// Scale-adaptive symmetric stretch energy over the labeled samples:
// 2*sqrt(mean trace(ghat) * mean trace(ghat^{-1})), minimum 4 exactly when all
// singular values share one scale. Empty input yields 0 with no gradients.
struct DistortionLoss {
  double value = 0.0;
  std::vector<Jac32> cotangents;
};

DistortionLoss loss_distortion(const std::vector<Jac32>& jacobians, double eps);

// The same energy pinned at an explicit scale L: A/(L^2+eps) + (L^2+eps)*B
// for A = mean trace(ghat), B = mean trace(ghat^{-1}).
double stretch_energy_at_scale(double mean_trace, double mean_trace_inv, double L, double eps);

// The squared scale minimizing the energy above: sqrt(A/B) - eps, clamped at 0.
double optimal_scale_sq(double mean_trace, double mean_trace_inv, double eps);

// Weighted sum of the three terms; a non-finite result is a numerical error.
double total_loss(const LossWeights& w, double rec, double occ, double dist);

}  // namespace atlasforge
