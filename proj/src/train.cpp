#include "atlasforge/train.hpp"

#include <cmath>
#include <cstring>
#include <utility>

#include "atlasforge/geom.hpp"
#include "atlasforge/losses.hpp"
#include "atlasforge/nn.hpp"

namespace atlasforge {

double lr_at(const TrainConfig& cfg, int step) {
  double lr = cfg.lr;
  for (double frac : cfg.lr_milestones) {
    const long long at = std::llround(frac * static_cast<double>(cfg.iterations));
    if (step >= at) lr *= cfg.lr_decay;
  }
  return lr;
}

Trainer::Trainer(PointCloud3 target, const TrainConfig& cfg)
    : cfg_(cfg), target_(std::move(target)), rng_(cfg.seed) {
  require(!target_.empty(), ErrorKind::InvalidInput, "training target is empty");
  require(cfg_.charts >= 1, ErrorKind::InvalidInput, "need at least one chart");
  require(cfg_.uv_samples_total >= cfg_.charts, ErrorKind::InvalidInput,
          "need at least one parametric sample per chart");
  require(cfg_.iterations >= 0, ErrorKind::InvalidInput, "negative iteration count");
  require(cfg_.lr > 0.0, ErrorKind::InvalidInput, "learning rate must be positive");
  require(cfg_.lr_decay > 0.0, ErrorKind::InvalidInput, "lr decay must be positive");
  require(cfg_.metric_eps > 0.0, ErrorKind::InvalidInput, "metric regularizer must be positive");
  const double limit_sq = (1.0 + 1e-6) * (1.0 + 1e-6);
  for (const Vec3& p : target_) {
    require(sq_norm(p) <= limit_sq, ErrorKind::InvalidInput,
            "training target must be unit-ball normalized");
  }

  AtlasConfig ac;
  ac.charts = cfg_.charts;
  ac.hidden_width = cfg_.hidden_width;
  ac.posenc = cfg_.posenc;
  ac.tau = cfg_.tau;
  atlas_ = make_atlas(ac, rng_);

  adam_phi_.reserve(atlas_.charts.size());
  adam_field_.reserve(atlas_.charts.size());
  for (const Chart& chart : atlas_.charts) {
    adam_phi_.push_back(make_adam_state(chart.phi));
    adam_field_.push_back(make_adam_state(chart.field));
  }
}

StepStats Trainer::step(double lr) {
  const int K = cfg_.charts;
  const int base = cfg_.uv_samples_total / K;
  const int rem = cfg_.uv_samples_total % K;

  // Fresh parametric samples, drawn serially so the stream is independent of
  // the thread count.
  std::vector<Matrix> uv(K);
  for (int k = 0; k < K; ++k) {
    const std::size_t nk = static_cast<std::size_t>(base + (k < rem ? 1 : 0));
    uv[k] = uv_matrix(sample_open_square(nk, rng_));
  }

  std::vector<Tape> phi_tape(K);
  std::vector<Matrix> maximal(K);
  for (int k = 0; k < K; ++k) {
    maximal[k] = mlp_forward(atlas_.charts[k].phi, uv[k], &phi_tape[k]);
  }

  const LabelAssignment assign = label_nearest(target_, maximal);
  const ReconstructionLoss rec = loss_reconstruction(target_, maximal, assign);

  // The field sees the maximal points as constants: gradients flow into the
  // field parameters only, never back through phi.
  std::vector<Tape> field_tape(K);
  std::vector<std::vector<double>> probs(K);
  for (int k = 0; k < K; ++k) {
    const Matrix enc = positional_encode(atlas_.config.posenc, maximal[k]);
    const Matrix out = mlp_forward(atlas_.charts[k].field, enc, &field_tape[k]);
    probs[k].assign(out.data.begin(), out.data.end());
  }
  const OccupancyLoss occ = loss_occupancy(assign.labels, probs);

  // Jacobians only at labeled samples, pooled across charts in chart order.
  std::vector<Matrix> labeled_uv(K);
  std::vector<std::size_t> labeled_n(K, 0);
  std::vector<Jac32> jacs;
  std::vector<std::size_t> jac_offset(K, 0);
  for (int k = 0; k < K; ++k) {
    std::size_t count = 0;
    for (std::uint8_t f : assign.labels[k]) count += f;
    labeled_n[k] = count;
    jac_offset[k] = jacs.size();
    if (count == 0) continue;
    Matrix sel(count, 2);
    std::size_t r = 0;
    for (std::size_t s = 0; s < assign.labels[k].size(); ++s) {
      if (!assign.labels[k][s]) continue;
      sel.at(r, 0) = uv[k].at(s, 0);
      sel.at(r, 1) = uv[k].at(s, 1);
      ++r;
    }
    labeled_uv[k] = std::move(sel);
    const std::vector<double> jk = mlp_input_jacobians(atlas_.charts[k].phi, labeled_uv[k]);
    for (std::size_t s = 0; s < count; ++s) {
      Jac32 j;
      std::memcpy(j.data(), jk.data() + 6 * s, 6 * sizeof(double));
      jacs.push_back(j);
    }
  }
  const DistortionLoss dist = loss_distortion(jacs, cfg_.metric_eps);

  // Throws on a non-finite total before any parameter is touched, so the
  // atlas keeps its last good state.
  const double total = total_loss(cfg_.weights, rec.value, occ.value, dist.value);

  for (int k = 0; k < K; ++k) {
    MlpParams& phi = atlas_.charts[k].phi;
    MlpGrads gphi = make_grads(phi);
    mlp_backward_params(phi, phi_tape[k], rec.cotangents[k], gphi, cfg_.weights.rec);
    if (labeled_n[k] > 0) {
      std::vector<double> cot(6 * labeled_n[k]);
      std::memcpy(cot.data(), dist.cotangents[jac_offset[k]].data(),
                  cot.size() * sizeof(double));
      mlp_jacobian_backward_params(phi, labeled_uv[k], cot, gphi, cfg_.weights.dist);
    }
    adam_update(adam_phi_[k], phi, gphi, lr);

    MlpParams& field = atlas_.charts[k].field;
    MlpGrads gfield = make_grads(field);
    Matrix occ_cot(probs[k].size(), 1);
    for (std::size_t s = 0; s < probs[k].size(); ++s) occ_cot.at(s, 0) = occ.cotangents[k][s];
    mlp_backward_params(field, field_tape[k], occ_cot, gfield, cfg_.weights.occ);
    adam_update(adam_field_[k], field, gfield, lr);
  }

  StepStats stats;
  stats.loss_rec = rec.value;
  stats.loss_occ = occ.value;
  stats.loss_dist = dist.value;
  stats.total = total;
  stats.lr = lr;
  stats.labeled = assign.labeled_count();
  return stats;
}

FitResult fit(const PointCloud3& normalized_target, const TrainConfig& cfg) {
  Trainer trainer(normalized_target, cfg);
  FitResult out;
  out.history.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int i = 0; i < cfg.iterations; ++i) {
    out.history.push_back(trainer.step(lr_at(cfg, i)));
  }
  out.atlas = std::move(trainer.atlas());
  return out;
}

}  // namespace atlasforge
