#include "inkdiff/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "inkdiff/errors.hpp"
#include "inkdiff/init.hpp"
#include "inkdiff/optim.hpp"

namespace inkdiff {

namespace {
constexpr double kGnEps = 1e-5;
}

void AutoencoderConfig::validate() const {
    if (image_size < 2 || image_size % 2 != 0)
        throw std::invalid_argument("autoencoder: image_size must be even");
    if (in_channels < 1 || latent_channels < 1)
        throw std::invalid_argument("autoencoder: bad channel counts");
    if (hidden < 1 || hidden % groups != 0)
        throw std::invalid_argument("autoencoder: hidden must be a positive multiple of groups");
}

ModelParams init_autoencoder(const AutoencoderConfig& cfg, RandomStream& rs) {
    cfg.validate();
    ModelParams p;
    add_conv_param(p, "enc.conv1", cfg.hidden, cfg.in_channels, 3, rs);
    add_norm_param(p, "enc.gn1", cfg.hidden);
    add_conv_param(p, "enc.down", cfg.hidden, cfg.hidden, 2, rs);
    add_norm_param(p, "enc.gn2", cfg.hidden);
    add_conv_param(p, "enc.head", cfg.latent_channels, cfg.hidden, 3, rs);
    add_conv_param(p, "dec.conv1", cfg.hidden, cfg.latent_channels, 3, rs);
    add_norm_param(p, "dec.gn1", cfg.hidden);
    add_conv_param(p, "dec.conv2", cfg.hidden, cfg.hidden, 3, rs);
    add_norm_param(p, "dec.gn2", cfg.hidden);
    add_conv_param(p, "dec.head", cfg.in_channels, cfg.hidden, 3, rs);
    return p;
}

NodePtr ae_encode(const NodePtr& x, const ModelParams& p, const AutoencoderConfig& cfg) {
    const Tensor& xv = x->value;
    if (xv.rank() != 4 || xv.dim(1) != cfg.in_channels || xv.dim(2) != cfg.image_size ||
        xv.dim(3) != cfg.image_size)
        throw std::invalid_argument("ae_encode: input shape " + shape_str(xv.shape) +
                                    " does not match config");
    NodePtr h = ag::conv2d(x, get_param(p, "enc.conv1.w"), get_param(p, "enc.conv1.b"), 1, 1);
    h = ag::silu(ag::group_norm(h, get_param(p, "enc.gn1.g"), get_param(p, "enc.gn1.b"),
                                cfg.groups, kGnEps));
    h = ag::conv2d(h, get_param(p, "enc.down.w"), get_param(p, "enc.down.b"), 2, 0);
    h = ag::silu(ag::group_norm(h, get_param(p, "enc.gn2.g"), get_param(p, "enc.gn2.b"),
                                cfg.groups, kGnEps));
    return ag::conv2d(h, get_param(p, "enc.head.w"), get_param(p, "enc.head.b"), 1, 1);
}

NodePtr ae_decode(const NodePtr& z, const ModelParams& p, const AutoencoderConfig& cfg) {
    const Tensor& zv = z->value;
    if (zv.rank() != 4 || zv.dim(1) != cfg.latent_channels || zv.dim(2) != cfg.image_size / 2 ||
        zv.dim(3) != cfg.image_size / 2)
        throw std::invalid_argument("ae_decode: latent shape " + shape_str(zv.shape) +
                                    " does not match config");
    NodePtr h = ag::conv2d(z, get_param(p, "dec.conv1.w"), get_param(p, "dec.conv1.b"), 1, 1);
    h = ag::silu(ag::group_norm(h, get_param(p, "dec.gn1.g"), get_param(p, "dec.gn1.b"),
                                cfg.groups, kGnEps));
    h = ag::upsample_nearest2x(h);
    h = ag::conv2d(h, get_param(p, "dec.conv2.w"), get_param(p, "dec.conv2.b"), 1, 1);
    h = ag::silu(ag::group_norm(h, get_param(p, "dec.gn2.g"), get_param(p, "dec.gn2.b"),
                                cfg.groups, kGnEps));
    return ag::conv2d(h, get_param(p, "dec.head.w"), get_param(p, "dec.head.b"), 1, 1);
}

Tensor ae_encode_t(const Tensor& x, const ModelParams& params, const AutoencoderConfig& cfg) {
    return ae_encode(ag::constant(Tensor(x)), params, cfg)->value;
}

Tensor ae_decode_t(const Tensor& z, const ModelParams& params, const AutoencoderConfig& cfg) {
    return ae_decode(ag::constant(Tensor(z)), params, cfg)->value;
}

TrainedAutoencoder train_autoencoder(const DatasetManifest& manifest,
                                     const AutoencoderConfig& cfg,
                                     const AutoencoderTrainConfig& tc, std::ostream* log) {
    cfg.validate();
    if (tc.steps < 1 || tc.batch < 1 || tc.lr <= 0 || tc.holdout_frac < 0 || tc.holdout_frac >= 1)
        throw std::invalid_argument("train_autoencoder: bad train config");
    if (manifest.records.empty()) throw DataError("train_autoencoder: empty dataset");

    std::vector<Tensor> images;
    for (const DatasetRecord& r : manifest.records)
        images.push_back(normalize(read_pgm(manifest.root + "/" + r.file)));
    int n = static_cast<int>(images.size());
    int64_t chw = images[0].numel();

    RandomStream root(tc.seed, 14);
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    RandomStream split_rs = root.substream(0);
    split_rs.shuffle(order);
    int n_hold = std::clamp(static_cast<int>(std::lround(tc.holdout_frac * n)), 0, n - 2);
    std::vector<int> train_idx(order.begin(), order.end() - n_hold);
    std::vector<int> hold_idx(order.end() - n_hold, order.end());

    RandomStream init_rs = root.substream(1);
    ModelParams params = init_autoencoder(cfg, init_rs);
    AdamState opt;
    AdamConfig ocfg;
    ocfg.lr = tc.lr;

    auto stack = [&](const std::vector<int>& idx) {
        Tensor out({static_cast<int>(idx.size()), cfg.in_channels, cfg.image_size, cfg.image_size});
        for (size_t i = 0; i < idx.size(); ++i)
            std::copy(images[static_cast<size_t>(idx[i])].data.begin(),
                      images[static_cast<size_t>(idx[i])].data.end(),
                      out.data.begin() + static_cast<int64_t>(i) * chw);
        return out;
    };

    for (int64_t step = 0; step < tc.steps; ++step) {
        RandomStream srs = root.substream(2).substream(static_cast<uint64_t>(step));
        int m = std::min<int>(tc.batch, static_cast<int>(train_idx.size()));
        std::vector<int> pick(static_cast<size_t>(m));
        for (int i = 0; i < m; ++i)
            pick[static_cast<size_t>(i)] =
                train_idx[static_cast<size_t>(srs.next_index(static_cast<int64_t>(train_idx.size())))];
        NodePtr x = ag::constant(stack(pick));
        NodePtr loss = ag::mse(ae_decode(ae_encode(x, params, cfg), params, cfg), x);
        double lv = static_cast<double>(loss->value.item());
        if (!std::isfinite(lv)) throw NumericError("train_autoencoder: non-finite loss");
        if (log && tc.log_every > 0 && (step % tc.log_every == 0 || step == tc.steps - 1))
            (*log) << step << "\t" << lv << "\n";
        zero_grads(params);
        ag::backward(loss);
        adam_step(params, opt, ocfg);
    }

    set_trainable(params, false);
    TrainedAutoencoder out;
    if (!hold_idx.empty()) {
        double acc = 0;
        for (size_t lo = 0; lo < hold_idx.size(); lo += 64) {
            size_t hi = std::min(hold_idx.size(), lo + 64);
            std::vector<int> chunk(hold_idx.begin() + static_cast<int64_t>(lo),
                                   hold_idx.begin() + static_cast<int64_t>(hi));
            NodePtr x = ag::constant(stack(chunk));
            NodePtr rec = ae_decode(ae_encode(x, params, cfg), params, cfg);
            acc += static_cast<double>(ag::mse(rec, x)->value.item()) *
                   static_cast<double>(chunk.size());
        }
        out.holdout_mse = acc / static_cast<double>(hold_idx.size());
    }
    out.params = std::move(params);
    return out;
}

} // namespace inkdiff
