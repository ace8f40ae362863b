#pragma once

#include <functional>
#include <vector>

#include "inkdiff/denoiser.hpp"
#include "inkdiff/schedule.hpp"

namespace inkdiff {

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

// eps_hat = eps_uncond + s (eps_cond - eps_uncond)
Tensor cfg_predict(const Tensor& eps_cond, const Tensor& eps_uncond, double s);

// one ancestral step:
//   x_{t-1} = (x_t - (1-a_t)/sqrt(1-abar_t) eps_hat) / sqrt(a_t) + sigma_t z
// z must be all-zero at t=1 (contract error otherwise)
Tensor p_sample_step(const Tensor& x_t, int t, const Tensor& eps_hat, const Tensor& z,
                     const NoiseSchedule& sched);

// batched denoiser stand-in for the sampler: (x_t [n,c,h,w], t, conditioned?)
using NoisePredictor = std::function<Tensor(const Tensor& x_t, int t, bool conditioned)>;

struct SampleConfig {
    int count = 1;
    double guidance = 1.0; // s; s == 1 skips the unconditional pass
    int batch = 64;        // images denoised per predictor call
    bool clamp_output = true;
};

// image i draws x_T and every z from stream.substream(i), so the result is
// independent of how the loop chunks images into batches
std::vector<Tensor> sample_loop(const NoisePredictor& pred, const std::vector<int>& img_shape,
                                const NoiseSchedule& sched, const RandomStream& stream,
                                const SampleConfig& cfg);

// everything random about one training batch, drawn in a fixed order:
// per sample i, t_i ~ U{1..T} then eps_i ~ N(0,I); afterwards one drop draw
// per sample (see drop_conditioning)
struct TrainingBatch {
    Tensor xt;   // q_sample(x0_i, t_i, eps_i) rows
    Tensor eps;  // the drawn noise (the regression target)
    std::vector<int> ts;
    std::vector<std::vector<int>> ids; // prompts after conditioning dropout
};

// checked mode rejects inputs outside [-1-1e-6, 1+1e-6]
TrainingBatch make_training_batch(const Tensor& x0, const std::vector<std::vector<int>>& prompt_ids,
                                  const NoiseSchedule& sched, RandomStream& rs, double p_drop,
                                  bool checked = true);

// the eq-(1) objective over one batch: mse(eps_theta(x_t, t, c), eps).
// prompt_ids are tokenized rows of length cfg.max_tokens.
NodePtr training_loss(const Tensor& x0, const std::vector<std::vector<int>>& prompt_ids,
                      const ModelParams& params, const DenoiserConfig& cfg,
                      const NoiseSchedule& sched, RandomStream& rs, double p_drop,
                      bool checked = true);

// wraps unet_forward into a NoisePredictor for one prompt (and the null
// prompt for the unconditional branch); params are used as-is, so freeze
// them first for inference-mode memory behavior
NoisePredictor make_denoiser_predictor(const ModelParams& params, const DenoiserConfig& cfg,
                                       const std::vector<int>& prompt_ids);

} // namespace inkdiff
