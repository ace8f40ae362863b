#include "inkdiff/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "inkdiff/errors.hpp"
#include "inkdiff/init.hpp"
#include "inkdiff/optim.hpp"

namespace inkdiff {

void ClassifierConfig::validate() const {
    if (image_size < 4 || in_channels < 1) throw std::invalid_argument("classifier: bad input dims");
    if (channels.empty()) throw std::invalid_argument("classifier: channels empty");
    int factor = 1 << static_cast<int>(channels.size());
    if (image_size % factor != 0)
        throw std::invalid_argument("classifier: image_size not divisible by 2^levels");
    for (int c : channels)
        if (c < 1 || c % groups != 0)
            throw std::invalid_argument("classifier: channels must be positive multiples of groups");
    if (feature_dim < 1 || classes < 2) throw std::invalid_argument("classifier: bad head dims");
}

ModelParams init_classifier(const ClassifierConfig& cfg, RandomStream& rs) {
    cfg.validate();
    ModelParams p;
    int prev = cfg.in_channels;
    for (size_t l = 0; l < cfg.channels.size(); ++l) {
        int c = cfg.channels[l];
        add_conv_param(p, "conv" + std::to_string(l), c, prev, 3, rs);
        add_norm_param(p, "gn" + std::to_string(l), c);
        add_conv_param(p, "pool" + std::to_string(l), c, c, 2, rs);
        prev = c;
    }
    add_linear_param(p, "fc1", cfg.feature_dim, prev, rs);
    add_linear_param(p, "head", cfg.classes, cfg.feature_dim, rs);
    return p;
}

namespace {

constexpr double kGnEps = 1e-5;

NodePtr global_avg_pool(const NodePtr& x) {
    int n = x->value.dim(0), c = x->value.dim(1);
    int64_t hw = static_cast<int64_t>(x->value.dim(2)) * x->value.dim(3);
    NodePtr flat = ag::reshape(x, {n * c, static_cast<int>(hw)});
    Tensor w({static_cast<int>(hw), 1});
    w.fill(static_cast<real>(1.0 / static_cast<double>(hw)));
    return ag::reshape(ag::matmul(flat, ag::constant(std::move(w))), {n, c});
}

NodePtr backbone(const NodePtr& x, const ModelParams& p, const ClassifierConfig& cfg) {
    const Tensor& xv = x->value;
    if (xv.rank() != 4 || xv.dim(1) != cfg.in_channels || xv.dim(2) != cfg.image_size ||
        xv.dim(3) != cfg.image_size)
        throw std::invalid_argument("classifier: input shape " + shape_str(xv.shape) +
                                    " does not match config");
    NodePtr h = x;
    for (size_t l = 0; l < cfg.channels.size(); ++l) {
        std::string ls = std::to_string(l);
        h = ag::conv2d(h, get_param(p, "conv" + ls + ".w"), get_param(p, "conv" + ls + ".b"), 1, 1);
        h = ag::group_norm(h, get_param(p, "gn" + ls + ".g"), get_param(p, "gn" + ls + ".b"),
                           cfg.groups, kGnEps);
        h = ag::silu(h);
        h = ag::conv2d(h, get_param(p, "pool" + ls + ".w"), get_param(p, "pool" + ls + ".b"), 2, 0);
    }
    return h;
}

} // namespace

NodePtr classifier_features(const NodePtr& x, const ModelParams& params,
                            const ClassifierConfig& cfg) {
    NodePtr h = global_avg_pool(backbone(x, params, cfg));
    return ag::silu(ag::linear(h, get_param(params, "fc1.w"), get_param(params, "fc1.b")));
}

NodePtr classifier_logits(const NodePtr& x, const ModelParams& params,
                          const ClassifierConfig& cfg) {
    NodePtr f = classifier_features(x, params, cfg);
    return ag::linear(f, get_param(params, "head.w"), get_param(params, "head.b"));
}

int style_label(const std::string& style) {
    if (style == "chinese") return 0;
    if (style == "modern") return 1;
    throw std::invalid_argument("style_label: unknown style " + style);
}

namespace {

Tensor stack_images(const std::vector<Tensor>& images, size_t lo, size_t hi) {
    const Tensor& first = images[lo];
    std::vector<int> shape;
    if (first.rank() == 3) {
        shape = {static_cast<int>(hi - lo), first.dim(0), first.dim(1), first.dim(2)};
    } else {
        throw std::invalid_argument("stack_images: each image must be [c,h,w]");
    }
    Tensor out(shape);
    int64_t chw = first.numel();
    for (size_t i = lo; i < hi; ++i) {
        require_same_shape(images[i], first, "stack_images");
        std::copy(images[i].data.begin(), images[i].data.end(),
                  out.data.begin() + static_cast<int64_t>(i - lo) * chw);
    }
    return out;
}

} // namespace

TrainedClassifier train_classifier(const DatasetManifest& manifest, const ClassifierConfig& cfg,
                                   const ClassifierTrainConfig& tc, std::ostream* log) {
    cfg.validate();
    if (tc.steps < 1 || tc.batch < 1 || tc.lr <= 0 || tc.holdout_frac < 0 || tc.holdout_frac >= 1)
        throw std::invalid_argument("train_classifier: bad train config");
    if (manifest.records.empty()) throw DataError("train_classifier: empty dataset");

    std::vector<Tensor> images;
    std::vector<int> labels;
    for (const DatasetRecord& r : manifest.records) {
        images.push_back(normalize(read_pgm(manifest.root + "/" + r.file)));
        labels.push_back(style_label(r.style));
    }
    int n = static_cast<int>(images.size());

    RandomStream root(tc.seed, 0);
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    RandomStream split_rs = root.substream(1);
    split_rs.shuffle(order);
    int n_hold = static_cast<int>(std::lround(tc.holdout_frac * n));
    n_hold = std::clamp(n_hold, 0, n - 2);
    std::vector<int> train_idx(order.begin(), order.end() - n_hold);
    std::vector<int> hold_idx(order.end() - n_hold, order.end());
    if (train_idx.empty()) throw DataError("train_classifier: no training rows after split");

    RandomStream init_rs = root.substream(2);
    ModelParams params = init_classifier(cfg, init_rs);
    AdamState opt;
    AdamConfig ocfg;
    ocfg.lr = tc.lr;

    for (int step = 0; step < tc.steps; ++step) {
        RandomStream srs = root.substream(3).substream(static_cast<uint64_t>(step));
        int m = std::min<int>(tc.batch, static_cast<int>(train_idx.size()));
        std::vector<Tensor> batch;
        Tensor onehot({m, cfg.classes});
        for (int i = 0; i < m; ++i) {
            int idx = train_idx[static_cast<size_t>(srs.next_index(static_cast<int64_t>(train_idx.size())))];
            batch.push_back(images[static_cast<size_t>(idx)]);
            onehot[static_cast<int64_t>(i) * cfg.classes + labels[static_cast<size_t>(idx)]] =
                static_cast<real>(1);
        }
        NodePtr x = ag::constant(stack_images(batch, 0, batch.size()));
        NodePtr loss = ag::cross_entropy_logits(classifier_logits(x, params, cfg), onehot);
        double lv = static_cast<double>(loss->value.item());
        if (!std::isfinite(lv)) throw NumericError("train_classifier: non-finite loss");
        if (log) (*log) << step << "\t" << lv << "\n";
        zero_grads(params);
        ag::backward(loss);
        adam_step(params, opt, ocfg);
    }

    set_trainable(params, false);
    TrainedClassifier out;
    int correct = 0;
    if (!hold_idx.empty()) {
        for (size_t lo = 0; lo < hold_idx.size(); lo += 64) {
            size_t hi = std::min(hold_idx.size(), lo + 64);
            std::vector<Tensor> chunk;
            for (size_t i = lo; i < hi; ++i) chunk.push_back(images[static_cast<size_t>(hold_idx[i])]);
            NodePtr logits = classifier_logits(ag::constant(stack_images(chunk, 0, chunk.size())),
                                               params, cfg);
            for (size_t i = lo; i < hi; ++i) {
                const real* row = logits->value.ptr() + static_cast<int64_t>(i - lo) * cfg.classes;
                int pred = 0;
                for (int c = 1; c < cfg.classes; ++c)
                    if (row[c] > row[pred]) pred = c;
                if (pred == labels[static_cast<size_t>(hold_idx[i])]) ++correct;
            }
        }
        out.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(hold_idx.size());
    }
    out.params = std::move(params);
    return out;
}

Tensor extract_features(const std::vector<Tensor>& images, const ModelParams& params,
                        const ClassifierConfig& cfg, int batch) {
    if (images.empty()) throw std::invalid_argument("extract_features: no images");
    if (batch < 1) throw std::invalid_argument("extract_features: batch must be >= 1");
    Tensor out({static_cast<int>(images.size()), cfg.feature_dim});
    for (size_t lo = 0; lo < images.size(); lo += static_cast<size_t>(batch)) {
        size_t hi = std::min(images.size(), lo + static_cast<size_t>(batch));
        NodePtr f = classifier_features(ag::constant(stack_images(images, lo, hi)), params, cfg);
        std::copy(f->value.data.begin(), f->value.data.end(),
                  out.data.begin() + static_cast<int64_t>(lo) * cfg.feature_dim);
    }
    return out;
}

Tensor classify_probs(const std::vector<Tensor>& images, const ModelParams& params,
                      const ClassifierConfig& cfg, int batch) {
    if (images.empty()) throw std::invalid_argument("classify_probs: no images");
    Tensor out({static_cast<int>(images.size()), cfg.classes});
    for (size_t lo = 0; lo < images.size(); lo += static_cast<size_t>(batch)) {
        size_t hi = std::min(images.size(), lo + static_cast<size_t>(batch));
        NodePtr logits = classifier_logits(ag::constant(stack_images(images, lo, hi)), params, cfg);
        NodePtr probs = ag::softmax(logits, 1);
        std::copy(probs->value.data.begin(), probs->value.data.end(),
                  out.data.begin() + static_cast<int64_t>(lo) * cfg.classes);
    }
    return out;
}

ModelParams make_random_extractor(const ClassifierConfig& cfg, uint64_t seed) {
    RandomStream rs(seed, 0xF1D0);
    ModelParams p = init_classifier(cfg, rs);
    set_trainable(p, false);
    return p;
}

} // namespace inkdiff
