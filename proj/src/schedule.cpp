#include "inkdiff/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace inkdiff {

void NoiseSchedule::require_valid_t(int t) const {
    if (t < 1 || t > T)
        throw std::invalid_argument("schedule: t=" + std::to_string(t) + " outside [1," +
                                    std::to_string(T) + "]");
}

NoiseSchedule make_schedule(int T, double beta1, double betaT, SigmaKind kind) {
    if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
    if (!(beta1 > 0 && beta1 <= betaT && betaT < 1))
        throw std::invalid_argument("make_schedule: need 0 < beta1 <= betaT < 1");
    NoiseSchedule s;
    s.T = T;
    s.sigma_kind = kind;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    s.sigma.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        double b = beta1 + (betaT - beta1) * frac;
        double a = 1.0 - b;
        prod *= a; // abar_t = abar_{t-1} * a_t, exactly, by construction
        s.beta[static_cast<size_t>(t - 1)] = b;
        s.alpha[static_cast<size_t>(t - 1)] = a;
        s.alpha_bar[static_cast<size_t>(t - 1)] = prod;
        if (kind == SigmaKind::beta_sqrt) {
            s.sigma[static_cast<size_t>(t - 1)] = std::sqrt(b);
        } else {
            // beta-tilde: (1 - abar_{t-1}) / (1 - abar_t) * beta_t, zero at t=1
            double abar_prev = t == 1 ? 1.0 : s.alpha_bar[static_cast<size_t>(t - 2)];
            s.sigma[static_cast<size_t>(t - 1)] = std::sqrt((1.0 - abar_prev) / (1.0 - prod) * b);
        }
    }
    for (int t = 2; t <= T; ++t)
        if (s.b(t) < s.b(t - 1)) throw std::logic_error("make_schedule: beta not monotone");
    return s;
}

} // namespace inkdiff
