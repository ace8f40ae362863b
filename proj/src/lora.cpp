#include "inkdiff/lora.hpp"

#include <stdexcept>

#include "inkdiff/checkpoint.hpp"
#include "inkdiff/denoiser.hpp"
#include "inkdiff/errors.hpp"
#include "inkdiff/hash.hpp"
#include "inkdiff/kernels.hpp"

namespace inkdiff {

std::vector<std::string> default_lora_targets() {
    std::vector<std::string> t = cross_attention_param_names();
    std::vector<std::string> b = bottleneck_temb_param_names();
    t.insert(t.end(), b.begin(), b.end());
    return t;
}

LoraAdapter lora_init(ModelParams& params, int rank, double alpha,
                      const std::vector<std::string>& targets, RandomStream& rs) {
    if (rank < 1) throw std::invalid_argument("lora_init: rank must be >= 1");
    if (alpha <= 0) throw std::invalid_argument("lora_init: alpha must be > 0");
    if (targets.empty()) throw std::invalid_argument("lora_init: no targets");
    LoraAdapter a;
    a.rank = rank;
    a.alpha = alpha;
    a.targets = targets;
    double scale = alpha / static_cast<double>(rank);
    for (const std::string& t : targets) {
        auto it = params.find(t);
        if (it == params.end()) throw std::invalid_argument("lora_init: unknown target " + t);
        const Tensor& w = it->second->value;
        if (w.rank() != 2)
            throw std::invalid_argument("lora_init: target " + t + " is not a 2-D weight");
        int d_out = w.dim(0), d_in = w.dim(1);
        Tensor A({rank, d_in});
        rs.fill_normal(A.ptr(), A.numel());
        for (real& v : A.data) v = static_cast<real>(v * static_cast<real>(0.02));
        add_param(params, "lora." + t + ".A", std::move(A));
        add_param(params, "lora." + t + ".B", Tensor::zeros({d_out, rank}));
        NodePtr s = add_param(params, "lora." + t + ".s", Tensor::full({1}, static_cast<real>(scale)));
        s->requires_grad = false;
    }
    return a;
}

std::vector<std::string> lora_param_names(const LoraAdapter& a) {
    std::vector<std::string> names;
    for (const std::string& t : a.targets) {
        names.push_back("lora." + t + ".A");
        names.push_back("lora." + t + ".B");
        names.push_back("lora." + t + ".s");
    }
    return names;
}

int64_t lora_trainable_count(const LoraAdapter& a, const ModelParams& params) {
    int64_t n = 0;
    for (const std::string& t : a.targets) {
        n += get_param(params, "lora." + t + ".A")->value.numel();
        n += get_param(params, "lora." + t + ".B")->value.numel();
    }
    return n;
}

void set_lora_trainable(ModelParams& params, const LoraAdapter& a) {
    set_trainable(params, false);
    for (const std::string& t : a.targets) {
        get_param(params, "lora." + t + ".A")->requires_grad = true;
        get_param(params, "lora." + t + ".B")->requires_grad = true;
    }
}

Tensor lora_forward(const Tensor& x, const Tensor& w, const Tensor& a, const Tensor& b,
                    double scale) {
    if (x.rank() != 2 || w.rank() != 2 || a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("lora_forward: all inputs must be 2-D");
    int n = x.dim(0), d_in = x.dim(1);
    int d_out = w.dim(0), r = a.dim(0);
    if (w.dim(1) != d_in || a.dim(1) != d_in || b.dim(0) != d_out || b.dim(1) != r)
        throw std::invalid_argument("lora_forward: shape mismatch");
    Tensor y({n, d_out});
    gemm_nt_acc(x.ptr(), w.ptr(), y.ptr(), n, d_in, d_out);
    Tensor down({n, r});
    gemm_nt_acc(x.ptr(), a.ptr(), down.ptr(), n, d_in, r);
    Tensor up({n, d_out});
    gemm_nt_acc(down.ptr(), b.ptr(), up.ptr(), n, r, d_out);
    for (int64_t i = 0; i < y.numel(); ++i)
        y[i] += static_cast<real>(scale * static_cast<double>(up[i]));
    return y;
}

ModelParams lora_merge(const ModelParams& params, const LoraAdapter& a) {
    ModelParams out = clone_params(params);
    double scale = a.alpha / static_cast<double>(a.rank);
    for (const std::string& t : a.targets) {
        Tensor& w = get_param(out, t)->value;
        const Tensor& A = get_param(out, "lora." + t + ".A")->value;
        const Tensor& B = get_param(out, "lora." + t + ".B")->value;
        int d_out = w.dim(0), d_in = w.dim(1), r = A.dim(0);
        if (B.dim(0) != d_out || B.dim(1) != r || A.dim(1) != d_in)
            throw std::invalid_argument("lora_merge: adapter/base shape mismatch at " + t);
        for (int i = 0; i < d_out; ++i)
            for (int j = 0; j < d_in; ++j) {
                double acc = 0;
                for (int k = 0; k < r; ++k)
                    acc += static_cast<double>(B[static_cast<int64_t>(i) * r + k]) *
                           static_cast<double>(A[static_cast<int64_t>(k) * d_in + j]);
                int64_t idx = static_cast<int64_t>(i) * d_in + j;
                w[idx] = static_cast<real>(static_cast<double>(w[idx]) + scale * acc);
            }
    }
    for (const std::string& name : lora_param_names(a)) out.erase(name);
    return out;
}

void lora_remove(ModelParams& params, const LoraAdapter& a) {
    for (const std::string& name : lora_param_names(a)) params.erase(name);
}

void save_lora_adapter(const ModelParams& params, const LoraAdapter& a,
                       uint64_t base_hash, const std::string& path) {
    ModelParams only;
    for (const std::string& name : lora_param_names(a))
        only.emplace(name, get_param(params, name));
    CheckpointMeta meta;
    meta.kind = "lora-adapter";
    meta.base_hash = hash_hex(base_hash);
    meta.extra["rank"] = a.rank;
    meta.extra["alpha"] = a.alpha;
    meta.extra["targets"] = a.targets;
    save_checkpoint(only, meta, path);
}

LoraAdapter load_lora_adapter(ModelParams& params, const std::string& path,
                              bool allow_mismatch) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.meta.kind != "lora-adapter")
        throw DataError("load_lora_adapter: " + path + " has kind '" + ck.meta.kind +
                        "', expected 'lora-adapter'");
    if (!ck.meta.extra.contains("rank") || !ck.meta.extra.contains("alpha") ||
        !ck.meta.extra.contains("targets"))
        throw DataError("load_lora_adapter: adapter metadata incomplete");
    if (!allow_mismatch) {
        uint64_t have = params_content_hash(params);
        uint64_t want = parse_hash_hex(ck.meta.base_hash);
        if (have != want)
            throw DataError("load_lora_adapter: base hash mismatch (adapter built against " +
                            ck.meta.base_hash + ", loaded base is " + hash_hex(have) + ")");
    }
    LoraAdapter a;
    a.rank = ck.meta.extra.at("rank").get<int>();
    a.alpha = ck.meta.extra.at("alpha").get<double>();
    a.targets = ck.meta.extra.at("targets").get<std::vector<std::string>>();
    if (a.rank < 1 || a.alpha <= 0 || a.targets.empty())
        throw DataError("load_lora_adapter: invalid adapter metadata");
    for (const std::string& t : a.targets) {
        auto it = params.find(t);
        if (it == params.end())
            throw DataError("load_lora_adapter: base lacks target " + t);
        const Tensor& w = it->second->value;
        const NodePtr& A = get_param(ck.params, "lora." + t + ".A");
        const NodePtr& B = get_param(ck.params, "lora." + t + ".B");
        get_param(ck.params, "lora." + t + ".s");
        if (A->value.rank() != 2 || B->value.rank() != 2 || A->value.dim(0) != a.rank ||
            B->value.dim(1) != a.rank || A->value.dim(1) != w.dim(1) ||
            B->value.dim(0) != w.dim(0))
            throw DataError("load_lora_adapter: tensor shapes inconsistent at " + t);
    }
    for (auto& [name, node] : ck.params) {
        if (params.count(name))
            throw DataError("load_lora_adapter: base already carries " + name);
        params.emplace(name, node);
    }
    return a;
}

} // namespace inkdiff
