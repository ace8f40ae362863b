#include "inkdiff/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "inkdiff/init.hpp"

namespace inkdiff {

void DenoiserConfig::validate() const {
    if (image_size < 4) throw std::invalid_argument("denoiser: image_size too small");
    if (in_channels < 1) throw std::invalid_argument("denoiser: in_channels must be >= 1");
    if (channels.empty()) throw std::invalid_argument("denoiser: channels empty");
    int down_factor = 1 << (levels() - 1);
    if (image_size % down_factor != 0)
        throw std::invalid_argument("denoiser: image_size not divisible by 2^(levels-1)");
    for (int c : channels)
        if (c < 1 || c % groups != 0)
            throw std::invalid_argument("denoiser: channels must be positive multiples of groups");
    if (temb_dim < 2 || temb_dim % 2 != 0)
        throw std::invalid_argument("denoiser: temb_dim must be even and >= 2");
    if (embed_dim < 1 || max_tokens < 1)
        throw std::invalid_argument("denoiser: embed_dim/max_tokens must be positive");
}

Tensor time_embedding(int t, int dim) {
    if (t < 0) throw std::invalid_argument("time_embedding: t must be >= 0");
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be even");
    Tensor out({dim});
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double w = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        out[2 * i] = static_cast<real>(std::sin(static_cast<double>(t) * w));
        out[2 * i + 1] = static_cast<real>(std::cos(static_cast<double>(t) * w));
    }
    return out;
}

namespace {

constexpr double kGnEps = 1e-5;

void add_res_block(ModelParams& p, const std::string& prefix, int cin, int cout, int temb_dim,
                   RandomStream& rs) {
    add_norm_param(p, prefix + "gn1", cin);
    add_conv_param(p, prefix + "conv1", cout, cin, 3, rs);
    add_linear_param(p, prefix + "temb", cout, temb_dim, rs);
    add_norm_param(p, prefix + "gn2", cout);
    add_conv_param(p, prefix + "conv2", cout, cout, 3, rs);
    if (cin != cout)
        add_param(p, prefix + "skip.w",
                  kaiming_uniform({cout, cin, 1, 1}, cin, rs));
}

// y = x W^T + b with an optional low-rank delta registered under
// "lora.<stem>.w.{A,B,s}"; presence of the A entry activates the path
NodePtr lora_aware_linear(const ModelParams& p, const std::string& stem, const NodePtr& x) {
    NodePtr y = ag::linear(x, get_param(p, stem + ".w"), get_param(p, stem + ".b"));
    auto itA = p.find("lora." + stem + ".w.A");
    if (itA == p.end()) return y;
    const NodePtr& A = itA->second;
    const NodePtr& B = get_param(p, "lora." + stem + ".w.B");
    const NodePtr& s = get_param(p, "lora." + stem + ".w.s");
    // (alpha/r) * (x A^T) B^T
    NodePtr down = ag::linear(x, A, nullptr);
    NodePtr up = ag::linear(down, B, nullptr);
    return ag::add(y, ag::scale(up, static_cast<double>(s->value.item())));
}

struct ForwardCtx {
    const ModelParams& p;
    const DenoiserConfig& cfg;
    NodePtr temb; // [n, temb_dim], post-MLP
    int n;
};

NodePtr res_block(ForwardCtx& fc, const std::string& prefix, const NodePtr& h) {
    const DenoiserConfig& cfg = fc.cfg;
    NodePtr r = ag::group_norm(h, get_param(fc.p, prefix + "gn1.g"), get_param(fc.p, prefix + "gn1.b"),
                               cfg.groups, kGnEps);
    r = ag::silu(r);
    r = ag::conv2d(r, get_param(fc.p, prefix + "conv1.w"), get_param(fc.p, prefix + "conv1.b"), 1, 1);
    NodePtr tv = lora_aware_linear(fc.p, prefix + "temb", ag::silu(fc.temb));
    r = ag::add_channel_vec(r, tv);
    r = ag::group_norm(r, get_param(fc.p, prefix + "gn2.g"), get_param(fc.p, prefix + "gn2.b"),
                       cfg.groups, kGnEps);
    r = ag::silu(r);
    r = ag::conv2d(r, get_param(fc.p, prefix + "conv2.w"), get_param(fc.p, prefix + "conv2.b"), 1, 1);
    NodePtr skip = h;
    auto it = fc.p.find(prefix + "skip.w");
    if (it != fc.p.end()) skip = ag::conv2d(h, it->second, nullptr, 1, 0);
    return ag::add(skip, r);
}

NodePtr cross_attention(ForwardCtx& fc, const std::string& prefix, const NodePtr& h,
                        const ConditioningContext& ctx) {
    const DenoiserConfig& cfg = fc.cfg;
    int c = h->value.dim(1);
    int hh = h->value.dim(2), ww = h->value.dim(3);
    int hw = hh * ww;
    int n = fc.n;
    int L = cfg.max_tokens;

    NodePtr hn = ag::group_norm(h, get_param(fc.p, prefix + "gn.g"), get_param(fc.p, prefix + "gn.b"),
                                cfg.groups, kGnEps);
    NodePtr q = ag::reshape(ag::nchw_to_nlc(hn), {n * hw, c});
    q = ag::reshape(lora_aware_linear(fc.p, prefix + "q", q), {n, hw, c});
    NodePtr kv_in = ag::reshape(ctx.emb, {n * L, cfg.embed_dim});
    NodePtr k = ag::reshape(lora_aware_linear(fc.p, prefix + "k", kv_in), {n, L, c});
    NodePtr v = ag::reshape(lora_aware_linear(fc.p, prefix + "v", kv_in), {n, L, c});

    NodePtr scores = ag::scale(ag::bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(c)));
    NodePtr w = ag::masked_softmax_lastdim(scores, ctx.mask); // [n, hw, L]
    NodePtr att = ag::bmm(w, v);                              // [n, hw, c]
    NodePtr out = ag::reshape(att, {n * hw, c});
    out = ag::reshape(lora_aware_linear(fc.p, prefix + "o", out), {n, hw, c});
    return ag::add(h, ag::nlc_to_nchw(out, hh, ww));
}

} // namespace

ModelParams init_denoiser(const DenoiserConfig& cfg, int vocab_size, RandomStream& rs) {
    cfg.validate();
    if (vocab_size < 4) throw std::invalid_argument("init_denoiser: vocab too small");
    ModelParams p;

    Tensor table({vocab_size, cfg.embed_dim});
    rs.fill_normal(table.ptr(), table.numel());
    for (int64_t i = 0; i < table.numel(); ++i) table[i] *= static_cast<real>(0.02);
    add_param(p, "tok.table", std::move(table));

    add_linear_param(p, "temb.l1", cfg.temb_dim, cfg.temb_dim, rs);
    add_linear_param(p, "temb.l2", cfg.temb_dim, cfg.temb_dim, rs);
    add_conv_param(p, "stem", cfg.channels[0], cfg.in_channels, 3, rs);

    int L = cfg.levels();
    for (int l = 0; l + 1 < L; ++l) {
        int c = cfg.channels[static_cast<size_t>(l)];
        for (int b = 0; b < cfg.res_blocks; ++b)
            add_res_block(p, "down." + std::to_string(l) + ".res." + std::to_string(b) + ".",
                          c, c, cfg.temb_dim, rs);
        // 2x2/stride-2: halves the grid exactly (3x3/stride-2 would not)
        add_conv_param(p, "down." + std::to_string(l) + ".pool",
                 cfg.channels[static_cast<size_t>(l + 1)], c, 2, rs);
    }

    int cb = cfg.channels.back();
    add_res_block(p, "mid.res1.", cb, cb, cfg.temb_dim, rs);
    add_norm_param(p, "mid.attn.gn", cb);
    add_linear_param(p, "mid.attn.q", cb, cb, rs);
    add_linear_param(p, "mid.attn.k", cb, cfg.embed_dim, rs);
    add_linear_param(p, "mid.attn.v", cb, cfg.embed_dim, rs);
    add_linear_param(p, "mid.attn.o", cb, cb, rs);
    add_res_block(p, "mid.res2.", cb, cb, cfg.temb_dim, rs);

    for (int l = L - 2; l >= 0; --l) {
        int c = cfg.channels[static_cast<size_t>(l)];
        add_conv_param(p, "up." + std::to_string(l) + ".unpool",
                 c, cfg.channels[static_cast<size_t>(l + 1)], 3, rs);
        for (int b = 0; b < cfg.res_blocks; ++b)
            add_res_block(p, "up." + std::to_string(l) + ".res." + std::to_string(b) + ".",
                          b == 0 ? 2 * c : c, c, cfg.temb_dim, rs);
    }

    add_norm_param(p, "head.gn", cfg.channels[0]);
    add_conv_param(p, "head", cfg.in_channels, cfg.channels[0], 3, rs);
    return p;
}

ConditioningContext embed_tokens(const std::vector<std::vector<int>>& ids,
                                 const ModelParams& params, const DenoiserConfig& cfg) {
    if (ids.empty()) throw std::invalid_argument("embed_tokens: empty batch");
    int n = static_cast<int>(ids.size());
    std::vector<int> flat;
    flat.reserve(static_cast<size_t>(n) * cfg.max_tokens);
    Tensor mask({n, cfg.max_tokens});
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(ids[static_cast<size_t>(i)].size()) != cfg.max_tokens)
            throw std::invalid_argument("embed_tokens: id row length != max_tokens");
        for (int j = 0; j < cfg.max_tokens; ++j) {
            int id = ids[static_cast<size_t>(i)][static_cast<size_t>(j)];
            flat.push_back(id);
            mask[static_cast<int64_t>(i) * cfg.max_tokens + j] =
                id == TokenVocabulary::kPad ? static_cast<real>(0) : static_cast<real>(1);
        }
    }
    ConditioningContext ctx;
    ctx.emb = ag::embedding(get_param(params, "tok.table"), flat, n, cfg.max_tokens);
    ctx.mask = std::move(mask);
    return ctx;
}

void drop_conditioning(std::vector<std::vector<int>>& ids, RandomStream& rs, double p_drop) {
    if (p_drop < 0 || p_drop > 1) throw std::invalid_argument("drop_conditioning: p_drop outside [0,1]");
    for (auto& row : ids)
        if (rs.next_uniform() < p_drop) row = TokenVocabulary::null_ids();
}

NodePtr unet_forward(const NodePtr& x_t, const std::vector<int>& ts,
                     const ConditioningContext& ctx, const ModelParams& params,
                     const DenoiserConfig& cfg) {
    const Tensor& xv = x_t->value;
    if (xv.rank() != 4 || xv.dim(1) != cfg.in_channels || xv.dim(2) != cfg.image_size ||
        xv.dim(3) != cfg.image_size)
        throw std::invalid_argument("unet_forward: input shape " + shape_str(xv.shape) +
                                    " does not match config");
    int n = xv.dim(0);
    if (ctx.n() != n) throw std::invalid_argument("unet_forward: context batch mismatch");
    if (ts.size() != static_cast<size_t>(n) && ts.size() != 1)
        throw std::invalid_argument("unet_forward: ts must have batch size or 1 entries");

    ForwardCtx fc{params, cfg, nullptr, n};

    Tensor tb({n, cfg.temb_dim});
    for (int i = 0; i < n; ++i) {
        Tensor row = time_embedding(ts.size() == 1 ? ts[0] : ts[static_cast<size_t>(i)], cfg.temb_dim);
        std::copy(row.data.begin(), row.data.end(),
                  tb.data.begin() + static_cast<int64_t>(i) * cfg.temb_dim);
    }
    NodePtr temb = ag::constant(std::move(tb));
    temb = lora_aware_linear(params, "temb.l1", temb);
    temb = lora_aware_linear(params, "temb.l2", ag::silu(temb));
    fc.temb = temb;

    NodePtr h = ag::conv2d(x_t, get_param(params, "stem.w"), get_param(params, "stem.b"), 1, 1);

    int L = cfg.levels();
    std::vector<NodePtr> skips;
    for (int l = 0; l + 1 < L; ++l) {
        for (int b = 0; b < cfg.res_blocks; ++b)
            h = res_block(fc, "down." + std::to_string(l) + ".res." + std::to_string(b) + ".", h);
        skips.push_back(h);
        h = ag::conv2d(h, get_param(params, "down." + std::to_string(l) + ".pool.w"),
                       get_param(params, "down." + std::to_string(l) + ".pool.b"), 2, 0);
    }

    h = res_block(fc, "mid.res1.", h);
    h = cross_attention(fc, "mid.attn.", h, ctx);
    h = res_block(fc, "mid.res2.", h);

    for (int l = L - 2; l >= 0; --l) {
        h = ag::upsample_nearest2x(h);
        h = ag::conv2d(h, get_param(params, "up." + std::to_string(l) + ".unpool.w"),
                       get_param(params, "up." + std::to_string(l) + ".unpool.b"), 1, 1);
        h = ag::concat_channels(h, skips[static_cast<size_t>(l)]);
        for (int b = 0; b < cfg.res_blocks; ++b)
            h = res_block(fc, "up." + std::to_string(l) + ".res." + std::to_string(b) + ".", h);
    }

    h = ag::group_norm(h, get_param(params, "head.gn.g"), get_param(params, "head.gn.b"),
                       cfg.groups, kGnEps);
    h = ag::silu(h);
    return ag::conv2d(h, get_param(params, "head.w"), get_param(params, "head.b"), 1, 1);
}

std::vector<std::string> cross_attention_param_names() {
    return {"mid.attn.q.w", "mid.attn.k.w", "mid.attn.v.w", "mid.attn.o.w"};
}

std::vector<std::string> bottleneck_temb_param_names() {
    return {"mid.res1.temb.w", "mid.res2.temb.w"};
}

} // namespace inkdiff
