#pragma once

#include <string>
#include <vector>

#include "inkdiff/params.hpp"
#include "inkdiff/rng.hpp"

namespace inkdiff {

// low-rank adapter descriptor. the actual tensors live in the same params
// map as the base model, keyed "lora.<target>.{A,B,s}" — the dense forward
// picks them up by name, so nothing else has to know adapters exist.
//   A: [r, d_in]  ~ N(0, 0.02^2)
//   B: [d_out, r] = 0          (delta starts as an exact no-op)
//   s: [1]        = alpha/r    (never trained)
struct LoraAdapter {
    int rank = 4;
    double alpha = 4.0;
    std::vector<std::string> targets; // base weight names, e.g. "mid.attn.q.w"
};

// cross-attention projections + bottleneck time projections
std::vector<std::string> default_lora_targets();

// registers adapter entries for each target into `params`. targets must name
// existing 2-D weights. A is drawn target-by-target in list order.
LoraAdapter lora_init(ModelParams& params, int rank, double alpha,
                      const std::vector<std::string>& targets, RandomStream& rs);

// adapter entry names in the params map, in target order (A, B, s per target)
std::vector<std::string> lora_param_names(const LoraAdapter& a);

// trainable tensor count: sum over targets of r*(d_in + d_out)
int64_t lora_trainable_count(const LoraAdapter& a, const ModelParams& params);

// freezes every param, then re-enables only the adapter A/B entries
void set_lora_trainable(ModelParams& params, const LoraAdapter& a);

// plain-tensor composition for one layer: y = x W^T + scale * (x A^T) B^T,
// row-vector convention; equals (W + scale*B*A) applied to x
Tensor lora_forward(const Tensor& x, const Tensor& w, const Tensor& a, const Tensor& b,
                    double scale);

// deep copy of base with W <- W + (alpha/r) B A per target (accumulated in
// double) and all lora.* entries removed
ModelParams lora_merge(const ModelParams& params, const LoraAdapter& a);

// strips the adapter entries, restoring the untouched base forward
void lora_remove(ModelParams& params, const LoraAdapter& a);

// adapter container: only the lora.* entries, kind "lora-adapter", plus the
// base content hash so a mismatched base is rejected at load time
void save_lora_adapter(const ModelParams& params, const LoraAdapter& a,
                       uint64_t base_hash, const std::string& path);

// inserts the stored entries into `params` (must hash-match unless
// allow_mismatch) and reconstructs the descriptor
LoraAdapter load_lora_adapter(ModelParams& params, const std::string& path,
                              bool allow_mismatch = false);

} // namespace inkdiff
