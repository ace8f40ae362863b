#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inkdiff/optim.hpp"
#include "inkdiff/params.hpp"

namespace inkdiff {

// PDIF1 container: magic, length-prefixed metadata JSON, length-prefixed
// manifest JSON (name/shape/offset per tensor), then one raw f32
// little-endian block. everything validated strictly on load.
struct CheckpointMeta {
    std::string kind; // denoiser | autoencoder | classifier | lora-adapter
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::string> vocab;
    nlohmann::json schedule; // {T, beta1, betaT, sigma} or null
    int64_t step = 0;
    std::string base_hash; // adapters: content hash of the base params
    nlohmann::json extra = nlohmann::json::object();
};

struct Checkpoint {
    CheckpointMeta meta;
    ModelParams params;
};

void save_checkpoint(const ModelParams& params, const CheckpointMeta& meta,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// content hash over (name, shape, f32 data) in map order; this is what binds
// an adapter to its base (stable across re-saves, unlike a file hash)
uint64_t params_content_hash(const ModelParams& params);

// optimizer state rides along as reserved "opt.m.<name>" / "opt.v.<name>"
// entries so a resumed run is bit-identical to an uninterrupted one
ModelParams merge_opt_state(const ModelParams& params, const AdamState& st);
AdamState split_opt_state(ModelParams& mixed); // strips opt.* entries

} // namespace inkdiff
