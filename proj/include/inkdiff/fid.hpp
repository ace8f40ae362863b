#pragma once

#include <functional>
#include <string>
#include <vector>

#include "inkdiff/rng.hpp"
#include "inkdiff/tensor.hpp"

namespace inkdiff {

struct FeatureGaussian {
    std::vector<double> mu;    // d
    std::vector<double> sigma; // d x d, symmetric
    int n = 0;
    int d = 0;
};

// mu = sample mean, sigma = unbiased sample covariance (symmetrized).
// features is [n, d]; n >= 2 required.
FeatureGaussian fit_gaussian(const Tensor& features);

// Tr((S1 S2)^(1/2)) via S = S1^(1/2) S2 S1^(1/2) and a symmetric Jacobi
// eigendecomposition; eigenvalues below 1e-10 * lambda_max clamp to zero.
// throws on asymmetry beyond 1e-6 or clearly non-PSD input.
double sqrt_trace(const std::vector<double>& s1, const std::vector<double>& s2, int d);

// |mu1-mu2|^2 + Tr S1 + Tr S2 - 2 sqrt_trace(S1,S2); tiny negatives
// (>= -1e-9) clamp to 0, anything worse is a numeric failure
double frechet_distance(const FeatureGaussian& g1, const FeatureGaussian& g2);

// exp(mean_x KL(p(y|x) || p(y))) over probs [n, k]
double inception_score(const Tensor& probs);

struct FidReport {
    std::vector<double> fids; // length R
    double mean = 0;
    double stddev = 0; // unbiased (n-1); 0 when R == 1
    std::string model_tag;
    std::string prompt;
    int n_per_repeat = 0;
};

struct FidProtocolConfig {
    int repeats = 10; // paper protocol
    int n = 256;      // generated and real images per repeat
};

using ImageGenerator = std::function<std::vector<Tensor>(int count, const RandomStream& stream)>;
using FeatureFn = std::function<Tensor(const std::vector<Tensor>& images)>; // -> [n, d]

// per repeat r: generate cfg.n images with stream.substream(r).substream(0),
// draw cfg.n reals uniformly (with replacement) using ...substream(1),
// fit both Gaussians and take the Frechet distance
FidReport fid_protocol(const ImageGenerator& gen, const std::vector<Tensor>& reals,
                       const FeatureFn& features, const FidProtocolConfig& cfg,
                       const RandomStream& stream, const std::string& model_tag,
                       const std::string& prompt);

} // namespace inkdiff
