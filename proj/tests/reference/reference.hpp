// Independent oracles for the test suites. Everything here is written as the
// obvious slow loop so the optimized library paths have something honest to
// be checked against; none of it calls back into the code under test.
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "atlasforge/nn.hpp"
#include "atlasforge/types.hpp"

namespace testref {

// Exhaustive nearest neighbor: index and squared distance, lowest index wins
// ties.
std::pair<int, double> brute_nn(const atlasforge::PointCloud3& points, const atlasforge::Vec3& q);

// Plain layer-by-layer forward pass of a weight-normalized network, one
// sample at a time.
std::vector<double> mlp_forward_ref(const atlasforge::MlpParams& net,
                                    const std::vector<double>& input);

// Double-loop chamfer distance: sum of both directed mean squared distances.
double chamfer_ref(const atlasforge::PointCloud3& a, const atlasforge::PointCloud3& b);

struct FScoreRef {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

FScoreRef fscore_ref(const atlasforge::PointCloud3& predicted,
                     const atlasforge::PointCloud3& target, double threshold);

// Number of single-linkage clusters when points closer than `threshold` are
// connected.
int cluster_count(const atlasforge::PointCloud3& points, double threshold);

// Central finite difference of `value()` with respect to the double behind
// `slot`.
double fd_slot(std::function<double()> value, double* slot, double h);

// All parameter slots of a network in the fixed (layer; V, g, b) order.
std::vector<double*> param_slots(atlasforge::MlpParams& net);

}  // namespace testref
