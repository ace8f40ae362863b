#pragma once

#include <string>
#include <vector>

#include "inkdiff/params.hpp"
#include "inkdiff/rng.hpp"
#include "inkdiff/vocab.hpp"

namespace inkdiff {

struct DenoiserConfig {
    int image_size = 32;
    int in_channels = 1;
    std::vector<int> channels = {32, 64}; // per resolution level, top to bottom
    int res_blocks = 2;                   // per encoder/decoder level
    int groups = 8;
    int temb_dim = 64;
    int embed_dim = 64; // token embedding width
    int max_tokens = TokenVocabulary::kMaxTokens;

    int levels() const { return static_cast<int>(channels.size()); }
    void validate() const;
};

// token embeddings plus the mask that zeroes attention onto PAD positions.
// emb participates in the graph (the table is trainable during pretraining).
struct ConditioningContext {
    NodePtr emb; // [n, max_tokens, embed_dim]
    Tensor mask; // [n, max_tokens]; 1 = attend, 0 = pad
    int n() const { return emb->value.dim(0); }
};

// sinusoidal embedding: component 2i = sin(t*w_i), 2i+1 = cos(t*w_i),
// w_i = 10000^(-2i/dim)
Tensor time_embedding(int t, int dim);

// fresh parameter set. convs/linears Kaiming-uniform U(+-sqrt(6/fan_in)),
// embedding table N(0, 0.02), biases zero, norm gains one.
ModelParams init_denoiser(const DenoiserConfig& cfg, int vocab_size, RandomStream& rs);

// table lookup for a batch of fixed-length id rows
ConditioningContext embed_tokens(const std::vector<std::vector<int>>& ids,
                                 const ModelParams& params, const DenoiserConfig& cfg);

// with probability p_drop replaces a sample's ids with [NULL, PAD, ...];
// one uniform draw per sample, in order
void drop_conditioning(std::vector<std::vector<int>>& ids, RandomStream& rs, double p_drop);

// eps_theta(x_t, t, c). ts holds one timestep per sample (or a single value
// broadcast across the batch). shape in == shape out.
NodePtr unet_forward(const NodePtr& x_t, const std::vector<int>& ts,
                     const ConditioningContext& ctx, const ModelParams& params,
                     const DenoiserConfig& cfg);

// parameter names touched by lora / dreambooth target selection
std::vector<std::string> cross_attention_param_names();
std::vector<std::string> bottleneck_temb_param_names();

} // namespace inkdiff
