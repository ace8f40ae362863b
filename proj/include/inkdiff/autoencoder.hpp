#pragma once

#include <cstdint>
#include <iosfwd>

#include "inkdiff/dataset.hpp"
#include "inkdiff/params.hpp"
#include "inkdiff/rng.hpp"

namespace inkdiff {

// small conv autoencoder: [n,1,s,s] <-> [n,4,s/2,s/2]. halving each spatial
// axis while widening to 4 channels keeps the element count but moves the
// diffusion to a coarser grid.
struct AutoencoderConfig {
    int image_size = 32;
    int in_channels = 1;
    int hidden = 16;
    int latent_channels = 4;
    int groups = 8;

    void validate() const;
};

ModelParams init_autoencoder(const AutoencoderConfig& cfg, RandomStream& rs);

NodePtr ae_encode(const NodePtr& x, const ModelParams& params, const AutoencoderConfig& cfg);
NodePtr ae_decode(const NodePtr& z, const ModelParams& params, const AutoencoderConfig& cfg);

// plain-tensor wrappers for inference plumbing
Tensor ae_encode_t(const Tensor& x, const ModelParams& params, const AutoencoderConfig& cfg);
Tensor ae_decode_t(const Tensor& z, const ModelParams& params, const AutoencoderConfig& cfg);

struct AutoencoderTrainConfig {
    int64_t steps = 600;
    int batch = 32;
    double lr = 1e-3;
    double holdout_frac = 0.1;
    uint64_t seed = 0;
    int64_t log_every = 25;
};

struct TrainedAutoencoder {
    ModelParams params; // frozen on return
    double holdout_mse = 0;
};

// reconstruction-MSE training; log lines are "step<TAB>loss"
TrainedAutoencoder train_autoencoder(const DatasetManifest& manifest,
                                     const AutoencoderConfig& cfg,
                                     const AutoencoderTrainConfig& tc,
                                     std::ostream* log = nullptr);

} // namespace inkdiff
