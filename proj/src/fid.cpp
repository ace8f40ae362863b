#include "inkdiff/fid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "inkdiff/errors.hpp"
#include "inkdiff/linalg.hpp"

namespace inkdiff {

FeatureGaussian fit_gaussian(const Tensor& features) {
    if (features.rank() != 2) throw std::invalid_argument("fit_gaussian: features must be [n,d]");
    int n = features.dim(0), d = features.dim(1);
    if (n < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples");
    FeatureGaussian g;
    g.n = n;
    g.d = d;
    g.mu.assign(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            g.mu[static_cast<size_t>(j)] += static_cast<double>(features[static_cast<int64_t>(i) * d + j]);
    for (double& m : g.mu) m /= static_cast<double>(n);

    g.sigma.assign(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            double cj = static_cast<double>(features[static_cast<int64_t>(i) * d + j]) - g.mu[static_cast<size_t>(j)];
            for (int k = j; k < d; ++k) {
                double ck = static_cast<double>(features[static_cast<int64_t>(i) * d + k]) - g.mu[static_cast<size_t>(k)];
                g.sigma[static_cast<size_t>(j) * d + k] += cj * ck;
            }
        }
    }
    for (int j = 0; j < d; ++j)
        for (int k = j; k < d; ++k) {
            double v = g.sigma[static_cast<size_t>(j) * d + k] / static_cast<double>(n - 1);
            g.sigma[static_cast<size_t>(j) * d + k] = v;
            g.sigma[static_cast<size_t>(k) * d + j] = v;
        }
    return g;
}

namespace {

void require_symmetric(const std::vector<double>& s, int d, const char* name) {
    if (static_cast<int>(s.size()) != d * d)
        throw std::invalid_argument(std::string(name) + ": bad matrix size");
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            if (std::abs(s[static_cast<size_t>(i) * d + j] - s[static_cast<size_t>(j) * d + i]) > 1e-6)
                throw NumericError(std::string(name) + ": matrix asymmetry beyond 1e-6");
}

std::vector<double> symmetrized(const std::vector<double>& s, int d) {
    std::vector<double> out(s);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            double m = 0.5 * (s[static_cast<size_t>(i) * d + j] + s[static_cast<size_t>(j) * d + i]);
            out[static_cast<size_t>(i) * d + j] = m;
            out[static_cast<size_t>(j) * d + i] = m;
        }
    return out;
}

void require_psd_within_tol(const std::vector<double>& s, int d, const char* name) {
    SymEig e = jacobi_eig(s, d);
    double lmax = 0;
    for (double l : e.values) lmax = std::max(lmax, l);
    double floor = -1e-6 * std::max(1.0, lmax);
    for (double l : e.values)
        if (l < floor) throw NumericError(std::string(name) + ": covariance is not PSD");
}

} // namespace

double sqrt_trace(const std::vector<double>& s1, const std::vector<double>& s2, int d) {
    require_symmetric(s1, d, "sqrt_trace(S1)");
    require_symmetric(s2, d, "sqrt_trace(S2)");
    std::vector<double> a = symmetrized(s1, d);
    std::vector<double> b = symmetrized(s2, d);
    require_psd_within_tol(a, d, "sqrt_trace(S1)");
    require_psd_within_tol(b, d, "sqrt_trace(S2)");

    std::vector<double> r1 = sym_sqrt(a, d);
    std::vector<double> s = mat_mul_d(mat_mul_d(r1, b, d), r1, d);
    s = symmetrized(s, d);
    SymEig e = jacobi_eig(std::move(s), d);
    double lmax = 0;
    for (double l : e.values) lmax = std::max(lmax, l);
    double clamp_below = 1e-10 * lmax;
    double total = 0;
    for (double l : e.values) {
        if (l <= clamp_below || l <= 0) continue;
        total += std::sqrt(l);
    }
    return total;
}

double frechet_distance(const FeatureGaussian& g1, const FeatureGaussian& g2) {
    if (g1.d != g2.d) throw std::invalid_argument("frechet_distance: dimension mismatch");
    int d = g1.d;
    double mu2 = 0;
    for (int i = 0; i < d; ++i) {
        double diff = g1.mu[static_cast<size_t>(i)] - g2.mu[static_cast<size_t>(i)];
        mu2 += diff * diff;
    }
    double val = mu2 + trace_d(g1.sigma, d) + trace_d(g2.sigma, d) - 2.0 * sqrt_trace(g1.sigma, g2.sigma, d);
    if (val < 0) {
        if (val < -1e-9) throw NumericError("frechet_distance: negative beyond numerical floor");
        val = 0;
    }
    return val;
}

double inception_score(const Tensor& probs) {
    if (probs.rank() != 2 || probs.dim(0) < 1)
        throw std::invalid_argument("inception_score: probs must be non-empty [n,k]");
    int n = probs.dim(0), k = probs.dim(1);
    std::vector<double> marginal(static_cast<size_t>(k), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
            marginal[static_cast<size_t>(j)] += static_cast<double>(probs[static_cast<int64_t>(i) * k + j]);
    for (double& m : marginal) m /= static_cast<double>(n);

    double mean_kl = 0;
    for (int i = 0; i < n; ++i) {
        double kl = 0;
        for (int j = 0; j < k; ++j) {
            double p = static_cast<double>(probs[static_cast<int64_t>(i) * k + j]);
            if (p <= 0) continue;
            kl += p * std::log(p / std::max(marginal[static_cast<size_t>(j)], 1e-300));
        }
        mean_kl += kl;
    }
    return std::exp(mean_kl / static_cast<double>(n));
}

FidReport fid_protocol(const ImageGenerator& gen, const std::vector<Tensor>& reals,
                       const FeatureFn& features, const FidProtocolConfig& cfg,
                       const RandomStream& stream, const std::string& model_tag,
                       const std::string& prompt) {
    if (cfg.repeats < 1) throw std::invalid_argument("fid_protocol: repeats must be >= 1");
    if (reals.empty()) throw std::invalid_argument("fid_protocol: empty real set");

    FidReport rep;
    rep.model_tag = model_tag;
    rep.prompt = prompt;
    rep.n_per_repeat = cfg.n;

    for (int r = 0; r < cfg.repeats; ++r) {
        RandomStream rs = stream.substream(static_cast<uint64_t>(r));
        std::vector<Tensor> fake = gen(cfg.n, rs.substream(0));
        if (static_cast<int>(fake.size()) != cfg.n)
            throw std::logic_error("fid_protocol: generator returned wrong count");
        RandomStream pick = rs.substream(1);
        std::vector<Tensor> real_draw;
        real_draw.reserve(static_cast<size_t>(cfg.n));
        for (int i = 0; i < cfg.n; ++i)
            real_draw.push_back(reals[static_cast<size_t>(pick.next_index(static_cast<int64_t>(reals.size())))]);

        Tensor ff = features(fake);
        Tensor rf = features(real_draw);
        if (ff.dim(0) < ff.dim(1) + 2 || rf.dim(0) < rf.dim(1) + 2)
            throw std::invalid_argument("fid_protocol: n must be >= feature dim + 2");
        rep.fids.push_back(frechet_distance(fit_gaussian(ff), fit_gaussian(rf)));
    }

    double s = 0;
    for (double v : rep.fids) s += v;
    rep.mean = s / static_cast<double>(rep.fids.size());
    if (rep.fids.size() > 1) {
        double acc = 0;
        for (double v : rep.fids) acc += (v - rep.mean) * (v - rep.mean);
        rep.stddev = std::sqrt(acc / static_cast<double>(rep.fids.size() - 1));
    }
    return rep;
}

} // namespace inkdiff
