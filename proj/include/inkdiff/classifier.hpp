#pragma once

#include <string>
#include <vector>

#include "inkdiff/dataset.hpp"
#include "inkdiff/params.hpp"
#include "inkdiff/rng.hpp"

namespace inkdiff {

// small 2-class style classifier; its penultimate layer doubles as the FID
// feature extractor
struct ClassifierConfig {
    int image_size = 32;
    int in_channels = 1;
    std::vector<int> channels = {16, 32}; // one stride-2 stage per entry
    int feature_dim = 32;                 // penultimate width == FID feature dim
    int classes = 2;                      // chinese = 0, modern = 1
    int groups = 8;
    void validate() const;
};

ModelParams init_classifier(const ClassifierConfig& cfg, RandomStream& rs);

// penultimate activations, [n, feature_dim]
NodePtr classifier_features(const NodePtr& x, const ModelParams& params,
                            const ClassifierConfig& cfg);
// logits over classes, [n, classes]
NodePtr classifier_logits(const NodePtr& x, const ModelParams& params,
                          const ClassifierConfig& cfg);

struct ClassifierTrainConfig {
    int steps = 300;
    int batch = 32;
    double lr = 1e-3;
    double holdout_frac = 0.2;
    uint64_t seed = 0;
};

struct TrainedClassifier {
    ModelParams params;
    double holdout_accuracy = 0;
};

// supervised training on the manifest's style tags with a deterministic
// holdout split; logs "step<TAB>loss" lines to log if non-null
TrainedClassifier train_classifier(const DatasetManifest& manifest, const ClassifierConfig& cfg,
                                   const ClassifierTrainConfig& tc, std::ostream* log = nullptr);

int style_label(const std::string& style); // chinese -> 0, modern -> 1

// batched feature extraction with frozen params; images are [1,s,s] or [c,s,s]
Tensor extract_features(const std::vector<Tensor>& images, const ModelParams& params,
                        const ClassifierConfig& cfg, int batch = 64);
// batched class probabilities (softmax over logits), [n, classes]
Tensor classify_probs(const std::vector<Tensor>& images, const ModelParams& params,
                      const ClassifierConfig& cfg, int batch = 64);

// extractor-free fallback: fixed seeded random parameters (never trained)
ModelParams make_random_extractor(const ClassifierConfig& cfg, uint64_t seed);

} // namespace inkdiff
