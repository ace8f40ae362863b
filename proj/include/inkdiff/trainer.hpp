#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>

#include "inkdiff/checkpoint.hpp"
#include "inkdiff/dataset.hpp"
#include "inkdiff/diffusion.hpp"

namespace inkdiff {

struct TrainLoopConfig {
    int64_t steps = 2000;
    int batch = 16;
    double lr = 1e-4;
    double p_drop = 0.1;
    uint64_t seed = 0;
    int64_t log_every = 10;       // final step is always logged
    int64_t checkpoint_every = 0; // 0 = final save only
    std::string checkpoint_path;  // empty = never saved
    std::string class_filter;     // restrict to one style ("" = all)
    bool checked_range = true;
    // runs between backward and the optimizer step; dreambooth uses this to
    // mask token-table gradient rows
    std::function<void(ModelParams&)> post_backward;
    // applied to each image batch before the loss (latent mode encodes here);
    // pair with checked_range = false since latents are not pixel-ranged
    std::function<Tensor(const Tensor&)> transform;
};

struct TrainReport {
    int64_t steps_done = 0;
    double initial_loss = 0; // first executed step
    double final_loss = 0;   // mean over the last min(50, steps_done) steps
};

// Adam over shuffled minibatches of eq-(1) losses. Deterministic given seed:
// batch order comes from substream 0, step randomness from
// substream(1).substream(absolute step), so a run resumed at start_step is
// bit-identical to an uninterrupted one. Loss log lines are "step<TAB>loss".
// Non-finite loss raises NumericError.
TrainReport train_loop(const DatasetManifest& data, ModelParams& params, AdamState& opt,
                       const TokenVocabulary& vocab, const DenoiserConfig& dcfg,
                       const NoiseSchedule& sched, const TrainLoopConfig& tc,
                       CheckpointMeta meta, int64_t start_step = 0, std::ostream* log = nullptr);

} // namespace inkdiff
