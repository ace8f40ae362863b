#pragma once

#include <vector>

namespace inkdiff {

// which sigma_t the sampler uses; beta_sqrt is the default, posterior is the
// beta-tilde alternative behind a config flag
enum class SigmaKind { beta_sqrt, posterior };

// all arrays are double regardless of the library's real type: the schedule
// identities are checked exactly and feed the sampler's scalar coefficients.
// arrays are 0-indexed by t-1; use the 1-based accessors.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;      // 1 - beta_t
    std::vector<double> alpha_bar;  // running product of alpha
    std::vector<double> sigma;
    SigmaKind sigma_kind = SigmaKind::beta_sqrt;

    double b(int t) const { return beta[static_cast<size_t>(t - 1)]; }
    double a(int t) const { return alpha[static_cast<size_t>(t - 1)]; }
    double abar(int t) const { return alpha_bar[static_cast<size_t>(t - 1)]; }
    double sig(int t) const { return sigma[static_cast<size_t>(t - 1)]; }
    void require_valid_t(int t) const;
};

// linear beta interpolation between beta1 and betaT inclusive
NoiseSchedule make_schedule(int T = 1000, double beta1 = 1e-4, double betaT = 0.02,
                            SigmaKind kind = SigmaKind::beta_sqrt);

} // namespace inkdiff
