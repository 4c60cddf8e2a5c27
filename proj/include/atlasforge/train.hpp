#pragma once

#include <array>
#include <vector>

#include "atlasforge/atlas.hpp"
#include "atlasforge/losses.hpp"
#include "atlasforge/types.hpp"

namespace atlasforge {

struct TrainConfig {
  int charts = 3;
  int hidden_width = 128;
  PosEncConfig posenc;
  double tau = 0.5;
  // Total parametric samples per step, split evenly across charts and redrawn
  // every step.
  int uv_samples_total = 5000;
  int iterations = 2000;
  double lr = 1e-3;
  // The rate decays by lr_decay at these fractions of the run.
  std::array<double, 3> lr_milestones{0.80, 0.93, 0.97};
  double lr_decay = 0.1;
  LossWeights weights;
  double metric_eps = 1e-4;
  unsigned long long seed = 0;
};

struct StepStats {
  double loss_rec = 0.0;
  double loss_occ = 0.0;
  double loss_dist = 0.0;
  double total = 0.0;
  double lr = 0.0;
  std::size_t labeled = 0;
};

double lr_at(const TrainConfig& cfg, int step);

// Owns the atlas, optimizer moments, and sampling stream for one fit. The
// trainer is the only mutator of its atlas; share the atlas across threads
// only after training finishes.
class Trainer {
 public:
  // The target must already be unit-ball normalized.
  Trainer(PointCloud3 target, const TrainConfig& cfg);

  // One optimization step: fresh parametric samples, nearest-neighbor
  // labeling, the three loss terms, one Adam update per network. A non-finite
  // total aborts before any parameter changes.
  StepStats step(double lr);

  const MinimalAtlas& atlas() const { return atlas_; }
  MinimalAtlas& atlas() { return atlas_; }
  const PointCloud3& target() const { return target_; }
  Rng& rng() { return rng_; }

 private:
  TrainConfig cfg_;
  PointCloud3 target_;
  MinimalAtlas atlas_;
  std::vector<AdamState> adam_phi_;
  std::vector<AdamState> adam_field_;
  Rng rng_;
};

struct FitResult {
  MinimalAtlas atlas;
  std::vector<StepStats> history;
};

FitResult fit(const PointCloud3& normalized_target, const TrainConfig& cfg);

}  // namespace atlasforge
