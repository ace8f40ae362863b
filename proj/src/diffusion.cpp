#include "inkdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "inkdiff/errors.hpp"

namespace inkdiff {

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    sched.require_valid_t(t);
    require_same_shape(x0, eps, "q_sample");
    double ab = sched.abar(t);
    double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
    Tensor out(x0.shape);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<real>(c0 * static_cast<double>(x0[i]) + c1 * static_cast<double>(eps[i]));
    return out;
}

Tensor cfg_predict(const Tensor& eps_cond, const Tensor& eps_uncond, double s) {
    require_same_shape(eps_cond, eps_uncond, "cfg_predict");
    if (s < 0) throw std::invalid_argument("cfg_predict: s must be >= 0");
    Tensor out(eps_cond.shape);
    for (int64_t i = 0; i < out.numel(); ++i) {
        double u = static_cast<double>(eps_uncond[i]);
        out[i] = static_cast<real>(u + s * (static_cast<double>(eps_cond[i]) - u));
    }
    return out;
}

Tensor p_sample_step(const Tensor& x_t, int t, const Tensor& eps_hat, const Tensor& z,
                     const NoiseSchedule& sched) {
    sched.require_valid_t(t);
    require_same_shape(x_t, eps_hat, "p_sample_step(eps)");
    require_same_shape(x_t, z, "p_sample_step(z)");
    if (t == 1 && !all_zero(z))
        throw std::invalid_argument("p_sample_step: z must be zero at t=1");
    double a = sched.a(t), ab = sched.abar(t), sig = sched.sig(t);
    double inv_sqrt_a = 1.0 / std::sqrt(a);
    // a=1 (degenerate no-noise schedule) makes this 0/0; the limit is 0
    double coef = a == 1.0 ? 0.0 : (1.0 - a) / std::sqrt(1.0 - ab);
    Tensor out(x_t.shape);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = static_cast<real>(
            inv_sqrt_a * (static_cast<double>(x_t[i]) - coef * static_cast<double>(eps_hat[i])) +
            sig * static_cast<double>(z[i]));
    return out;
}

std::vector<Tensor> sample_loop(const NoisePredictor& pred, const std::vector<int>& img_shape,
                                const NoiseSchedule& sched, const RandomStream& stream,
                                const SampleConfig& cfg) {
    if (cfg.count < 0) throw std::invalid_argument("sample_loop: count must be >= 0");
    if (cfg.guidance < 0) throw std::invalid_argument("sample_loop: guidance must be >= 0");
    if (cfg.batch < 1) throw std::invalid_argument("sample_loop: batch must be >= 1");
    if (img_shape.size() != 3) throw std::invalid_argument("sample_loop: img_shape must be [c,h,w]");
    int64_t chw = shape_numel(img_shape);

    std::vector<Tensor> images;
    images.reserve(static_cast<size_t>(cfg.count));
    for (int i0 = 0; i0 < cfg.count; i0 += cfg.batch) {
        int n = std::min(cfg.batch, cfg.count - i0);
        std::vector<RandomStream> subs;
        subs.reserve(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i)
            subs.push_back(stream.substream(static_cast<uint64_t>(i0 + i)));

        Tensor x({n, img_shape[0], img_shape[1], img_shape[2]});
        for (int i = 0; i < n; ++i)
            subs[static_cast<size_t>(i)].fill_normal(x.ptr() + i * chw, chw);

        Tensor z(x.shape);
        for (int t = sched.T; t >= 1; --t) {
            Tensor eps = pred(x, t, true);
            require_same_shape(eps, x, "sample_loop(predictor)");
            if (cfg.guidance != 1.0) eps = cfg_predict(eps, pred(x, t, false), cfg.guidance);
            if (t > 1) {
                for (int i = 0; i < n; ++i)
                    subs[static_cast<size_t>(i)].fill_normal(z.ptr() + i * chw, chw);
            } else {
                z.zero();
            }
            x = p_sample_step(x, t, eps, z, sched);
        }
        if (!all_finite(x)) throw NumericError("sample_loop: non-finite sample");
        for (int i = 0; i < n; ++i) {
            Tensor img(img_shape);
            const real* src = x.ptr() + i * chw;
            for (int64_t j = 0; j < chw; ++j) {
                real v = src[j];
                if (cfg.clamp_output) v = std::clamp(v, static_cast<real>(-1), static_cast<real>(1));
                img[j] = v;
            }
            images.push_back(std::move(img));
        }
    }
    return images;
}

TrainingBatch make_training_batch(const Tensor& x0, const std::vector<std::vector<int>>& prompt_ids,
                                  const NoiseSchedule& sched, RandomStream& rs, double p_drop,
                                  bool checked) {
    if (x0.rank() != 4) throw std::invalid_argument("make_training_batch: x0 must be [n,c,h,w]");
    int n = x0.dim(0);
    if (static_cast<int>(prompt_ids.size()) != n)
        throw std::invalid_argument("make_training_batch: prompt count != batch size");
    if (checked) {
        for (int64_t i = 0; i < x0.numel(); ++i) {
            double v = static_cast<double>(x0[i]);
            if (v < -1.0 - 1e-6 || v > 1.0 + 1e-6)
                throw DataError("make_training_batch: input not normalized to [-1,1]");
        }
    }
    int64_t chw = x0.numel() / n;

    TrainingBatch b;
    b.eps = Tensor(x0.shape);
    b.xt = Tensor(x0.shape);
    b.ts.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int t = static_cast<int>(rs.next_index(sched.T)) + 1;
        b.ts[static_cast<size_t>(i)] = t;
        rs.fill_normal(b.eps.ptr() + i * chw, chw);
        double ab = sched.abar(t);
        double c0 = std::sqrt(ab), c1 = std::sqrt(1.0 - ab);
        const real* x0p = x0.ptr() + i * chw;
        const real* ep = b.eps.ptr() + i * chw;
        real* xp = b.xt.ptr() + i * chw;
        for (int64_t j = 0; j < chw; ++j)
            xp[j] = static_cast<real>(c0 * static_cast<double>(x0p[j]) +
                                      c1 * static_cast<double>(ep[j]));
    }

    b.ids = prompt_ids;
    drop_conditioning(b.ids, rs, p_drop);
    return b;
}

NodePtr training_loss(const Tensor& x0, const std::vector<std::vector<int>>& prompt_ids,
                      const ModelParams& params, const DenoiserConfig& cfg,
                      const NoiseSchedule& sched, RandomStream& rs, double p_drop,
                      bool checked) {
    TrainingBatch b = make_training_batch(x0, prompt_ids, sched, rs, p_drop, checked);
    ConditioningContext ctx = embed_tokens(b.ids, params, cfg);
    NodePtr eps_hat = unet_forward(ag::constant(std::move(b.xt)), b.ts, ctx, params, cfg);
    return ag::mse(eps_hat, ag::constant(std::move(b.eps)));
}

NoisePredictor make_denoiser_predictor(const ModelParams& params, const DenoiserConfig& cfg,
                                       const std::vector<int>& prompt_ids) {
    if (static_cast<int>(prompt_ids.size()) != cfg.max_tokens)
        throw std::invalid_argument("make_denoiser_predictor: prompt row length != max_tokens");
    return [&params, cfg, prompt_ids](const Tensor& x_t, int t, bool conditioned) {
        int n = x_t.dim(0);
        std::vector<std::vector<int>> ids(
            static_cast<size_t>(n), conditioned ? prompt_ids : TokenVocabulary::null_ids());
        ConditioningContext ctx = embed_tokens(ids, params, cfg);
        NodePtr out = unet_forward(ag::constant(x_t), {t}, ctx, params, cfg);
        return out->value;
    };
}

} // namespace inkdiff
