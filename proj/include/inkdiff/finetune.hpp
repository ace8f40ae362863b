#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "inkdiff/lora.hpp"
#include "inkdiff/trainer.hpp"

namespace inkdiff {

struct DreamBoothConfig {
    std::string identifier = TokenVocabulary::kIdentifierText;
    // the subject's class name, no identifier — this is what priors are
    // sampled with and what the preservation term conditions on
    std::string class_prompt = "A picture of Landscape Painting";
    // identifier spliced in front of the class name
    std::string instance_prompt = "A picture of [V] Landscape Painting";
    double prior_weight = 1.0; // lambda
    int prior_count = 200;     // K
    double lr = 1e-5;
    std::string prior_dir; // cache directory for the sampled prior set

    void validate(const TokenVocabulary& vocab) const;
};

// L_instance + lambda * L_prior; rejects lambda < 0. split out so the
// weighted-sum arithmetic is testable with stub terms
NodePtr combine_dreambooth_terms(const NodePtr& instance_term, const NodePtr& prior_term,
                                 double lambda);

// both terms are eq-(1) losses over their own batches; the stream is consumed
// by the instance batch first, then the prior batch
NodePtr dreambooth_loss(const Tensor& instance_x0, const std::vector<std::vector<int>>& instance_ids,
                        const Tensor& prior_x0, const std::vector<std::vector<int>>& prior_ids,
                        const ModelParams& params, const DenoiserConfig& dcfg,
                        const NoiseSchedule& sched, RandomStream& rs, double lambda,
                        bool checked = true);

// samples K class-prompt images from the frozen model into dir (PGM +
// manifest). A directory already holding a verifiable K-entry manifest is
// reused as-is. The prompt must not contain the identifier.
DatasetManifest prepare_priors(const ModelParams& params, const DenoiserConfig& dcfg,
                               const NoiseSchedule& sched, const TokenVocabulary& vocab,
                               const std::string& class_prompt, int k, uint64_t seed,
                               const std::string& dir, int sample_batch = 64);

struct FinetuneReport {
    std::string method; // full | lora | dreambooth
    int64_t steps = 0;
    double initial_loss = 0;
    double final_loss = 0;
    std::string output_path; // checkpoint (full/dreambooth) or adapter (lora)
};

struct FinetuneConfig {
    std::string method = "lora";
    TrainLoopConfig train;    // lr ignored for dreambooth (db.lr wins)
    std::string output_path;  // final artifact
    int lora_rank = 4;
    double lora_alpha = 4.0;
    DreamBoothConfig db;
};

// trainable sets: full = everything; lora = adapter A/B only (base and token
// table frozen, artifact is the adapter file); dreambooth = denoiser weights
// plus only the identifier's token-table row (other rows bit-frozen via
// gradient masking). params/opt are updated in place; vocab must already
// contain every prompt word.
FinetuneReport finetune_loop(const DatasetManifest& data, ModelParams& params, AdamState& opt,
                             const TokenVocabulary& vocab, const DenoiserConfig& dcfg,
                             const NoiseSchedule& sched, const FinetuneConfig& fc,
                             CheckpointMeta meta, std::ostream* log = nullptr);

} // namespace inkdiff
