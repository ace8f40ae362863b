#include "inkdiff/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <ostream>
#include <stdexcept>

#include "inkdiff/errors.hpp"
#include "inkdiff/hash.hpp"

namespace inkdiff {

namespace {

bool contains_id(const std::vector<int>& ids, int id) {
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

// zero every token-table gradient row except keep_row. a zero grad with zero
// optimizer state yields an exactly-zero Adam update, so masked rows stay
// bit-identical without touching requires_grad bookkeeping.
void mask_table_grad(ModelParams& params, int keep_row) {
    const NodePtr& table = get_param(params, "tok.table");
    if (table->grad.data.empty()) return;
    int rows = table->value.dim(0), cols = table->value.dim(1);
    for (int r = 0; r < rows; ++r) {
        if (r == keep_row) continue;
        real* g = table->grad.ptr() + static_cast<int64_t>(r) * cols;
        std::fill(g, g + cols, static_cast<real>(0));
    }
}

} // namespace

void DreamBoothConfig::validate(const TokenVocabulary& vocab) const {
    if (prior_weight < 0) throw std::invalid_argument("dreambooth: prior weight must be >= 0");
    if (prior_count < 1) throw std::invalid_argument("dreambooth: prior count must be >= 1");
    if (lr <= 0) throw std::invalid_argument("dreambooth: lr must be > 0");
    if (vocab.lookup(identifier) != TokenVocabulary::kIdentifier)
        throw std::invalid_argument("dreambooth: identifier '" + identifier +
                                    "' is not the reserved vocabulary token");
    if (!contains_id(vocab.tokenize(instance_prompt), TokenVocabulary::kIdentifier))
        throw std::invalid_argument("dreambooth: instance prompt '" + instance_prompt +
                                    "' lacks the identifier token");
    if (contains_id(vocab.tokenize(class_prompt), TokenVocabulary::kIdentifier))
        throw std::invalid_argument("dreambooth: class prompt '" + class_prompt +
                                    "' must not contain the identifier token");
}

NodePtr combine_dreambooth_terms(const NodePtr& instance_term, const NodePtr& prior_term,
                                 double lambda) {
    if (lambda < 0) throw std::invalid_argument("dreambooth: lambda must be >= 0");
    return ag::add(instance_term, ag::scale(prior_term, lambda));
}

NodePtr dreambooth_loss(const Tensor& instance_x0, const std::vector<std::vector<int>>& instance_ids,
                        const Tensor& prior_x0, const std::vector<std::vector<int>>& prior_ids,
                        const ModelParams& params, const DenoiserConfig& dcfg,
                        const NoiseSchedule& sched, RandomStream& rs, double lambda,
                        bool checked) {
    if (lambda < 0) throw std::invalid_argument("dreambooth: lambda must be >= 0");
    NodePtr inst = training_loss(instance_x0, instance_ids, params, dcfg, sched, rs,
                                 /*p_drop=*/0.0, checked);
    NodePtr prior = training_loss(prior_x0, prior_ids, params, dcfg, sched, rs,
                                  /*p_drop=*/0.0, checked);
    return combine_dreambooth_terms(inst, prior, lambda);
}

DatasetManifest prepare_priors(const ModelParams& params, const DenoiserConfig& dcfg,
                               const NoiseSchedule& sched, const TokenVocabulary& vocab,
                               const std::string& class_prompt, int k, uint64_t seed,
                               const std::string& dir, int sample_batch) {
    if (k < 1) throw std::invalid_argument("prepare_priors: k must be >= 1");
    if (dir.empty()) throw std::invalid_argument("prepare_priors: no cache directory");
    std::vector<int> prompt_ids = vocab.tokenize(class_prompt);
    if (contains_id(prompt_ids, TokenVocabulary::kIdentifier))
        throw std::invalid_argument("prepare_priors: class prompt must not contain the identifier");

    namespace fs = std::filesystem;
    if (fs::exists(fs::path(dir) / "manifest.json")) {
        DatasetManifest cached = load_manifest(dir);
        if (static_cast<int>(cached.records.size()) != k)
            throw DataError("prepare_priors: cached prior set in " + dir + " has " +
                            std::to_string(cached.records.size()) + " entries, wanted " +
                            std::to_string(k) + "; clear it to regenerate");
        for (const DatasetRecord& r : cached.records)
            if (r.prompt != class_prompt)
                throw DataError("prepare_priors: cached prior set was sampled with prompt '" +
                                r.prompt + "', wanted '" + class_prompt + "'");
        verify_manifest(cached);
        return cached;
    }
    fs::create_directories(dir);

    // sample from a frozen copy so generation is pure inference regardless of
    // the trainable flags the caller left behind
    ModelParams frozen = clone_params(params);
    set_trainable(frozen, false);
    NoisePredictor pred = make_denoiser_predictor(frozen, dcfg, prompt_ids);

    SampleConfig sc;
    sc.count = k;
    sc.guidance = 1.0;
    sc.batch = sample_batch;
    std::vector<Tensor> images = sample_loop(pred, {1, dcfg.image_size, dcfg.image_size}, sched,
                                             RandomStream(seed, 17), sc);

    DatasetManifest m;
    m.root = dir;
    m.image_size = dcfg.image_size;
    for (int i = 0; i < k; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "prior_%05d.pgm", i);
        std::string path = dir + "/" + name;
        write_pgm(path, denormalize(images[static_cast<size_t>(i)]));
        DatasetRecord rec;
        rec.file = name;
        rec.prompt = class_prompt;
        rec.style = "prior";
        rec.seed = seed;
        rec.hash = hash_file(path);
        m.records.push_back(std::move(rec));
    }
    save_manifest(m);
    return m;
}

namespace {

FinetuneReport run_dreambooth(const DatasetManifest& data, ModelParams& params, AdamState& opt,
                              const TokenVocabulary& vocab, const DenoiserConfig& dcfg,
                              const NoiseSchedule& sched, const FinetuneConfig& fc,
                              CheckpointMeta meta, std::ostream* log) {
    const DreamBoothConfig& db = fc.db;
    const TrainLoopConfig& tc = fc.train;
    db.validate(vocab);
    if (db.prior_dir.empty())
        throw std::invalid_argument("dreambooth: prior_dir is required");
    if (data.records.empty()) throw DataError("dreambooth: empty instance dataset");

    // enforce the identifier on the training side before any work happens
    std::vector<int> inst_row = vocab.tokenize(db.instance_prompt);
    std::vector<int> prior_row = vocab.tokenize(db.class_prompt);

    DatasetManifest priors = prepare_priors(params, dcfg, sched, vocab, db.class_prompt,
                                            db.prior_count, tc.seed, db.prior_dir);

    set_trainable(params, true);
    RandomStream root(tc.seed, 12);
    BatchIterator inst_it(data, tc.batch, root.substream(0), tc.class_filter);
    BatchIterator prior_it(priors, tc.batch, root.substream(1), "");
    RandomStream step_root = root.substream(2);

    AdamConfig ocfg;
    ocfg.lr = db.lr;

    meta.step = 0;
    meta.extra["dreambooth"] = {{"identifier", db.identifier},
                                {"instance_prompt", db.instance_prompt},
                                {"class_prompt", db.class_prompt},
                                {"prior_weight", db.prior_weight}};

    auto save = [&](int64_t done, const std::string& path) {
        if (path.empty()) return;
        meta.step = done;
        ModelParams mixed = merge_opt_state(params, opt);
        save_checkpoint(mixed, meta, path);
    };

    FinetuneReport rep;
    rep.method = "dreambooth";
    std::deque<double> tail;
    for (int64_t step = 0; step < tc.steps; ++step) {
        Batch bi = inst_it.next();
        Batch bp = prior_it.next();
        std::vector<std::vector<int>> inst_ids(bi.prompts.size(), inst_row);
        std::vector<std::vector<int>> prior_ids(bp.prompts.size(), prior_row);

        RandomStream srs = step_root.substream(static_cast<uint64_t>(step));
        NodePtr loss = dreambooth_loss(bi.x, inst_ids, bp.x, prior_ids, params, dcfg, sched,
                                       srs, db.prior_weight, tc.checked_range);
        double lv = static_cast<double>(loss->value.item());
        if (!std::isfinite(lv))
            throw NumericError("dreambooth: non-finite loss at step " + std::to_string(step));
        if (log && tc.log_every > 0 && (step % tc.log_every == 0 || step == tc.steps - 1))
            (*log) << step << "\t" << lv << "\n";

        zero_grads(params);
        ag::backward(loss);
        mask_table_grad(params, TokenVocabulary::kIdentifier);
        if (tc.post_backward) tc.post_backward(params);
        adam_step(params, opt, ocfg);

        if (rep.steps == 0) rep.initial_loss = lv;
        ++rep.steps;
        tail.push_back(lv);
        if (tail.size() > 50) tail.pop_front();

        int64_t done = step + 1;
        if (tc.checkpoint_every > 0 && done % tc.checkpoint_every == 0 && done < tc.steps)
            save(done, tc.checkpoint_path);
    }
    if (!tail.empty()) {
        double s = 0;
        for (double v : tail) s += v;
        rep.final_loss = s / static_cast<double>(tail.size());
    }
    save(tc.steps, fc.output_path);
    rep.output_path = fc.output_path;
    return rep;
}

} // namespace

FinetuneReport finetune_loop(const DatasetManifest& data, ModelParams& params, AdamState& opt,
                             const TokenVocabulary& vocab, const DenoiserConfig& dcfg,
                             const NoiseSchedule& sched, const FinetuneConfig& fc,
                             CheckpointMeta meta, std::ostream* log) {
    if (fc.method == "dreambooth")
        return run_dreambooth(data, params, opt, vocab, dcfg, sched, fc, std::move(meta), log);
    if (fc.method != "full" && fc.method != "lora")
        throw std::invalid_argument("finetune: method must be full, lora or dreambooth");

    FinetuneReport rep;
    rep.method = fc.method;
    TrainLoopConfig tc = fc.train;

    if (fc.method == "full") {
        set_trainable(params, true);
        tc.checkpoint_path = fc.output_path;
        TrainReport tr = train_loop(data, params, opt, vocab, dcfg, sched, tc, std::move(meta),
                                    0, log);
        rep.steps = tr.steps_done;
        rep.initial_loss = tr.initial_loss;
        rep.final_loss = tr.final_loss;
        rep.output_path = fc.output_path;
        return rep;
    }

    // lora: hash the pristine base first — the adapter artifact is bound to it
    uint64_t base_hash = params_content_hash(params);
    RandomStream lrs(tc.seed, 13);
    LoraAdapter adapter = lora_init(params, fc.lora_rank, fc.lora_alpha,
                                    default_lora_targets(), lrs);
    set_lora_trainable(params, adapter);
    TrainReport tr = train_loop(data, params, opt, vocab, dcfg, sched, tc, std::move(meta), 0, log);
    save_lora_adapter(params, adapter, base_hash, fc.output_path);
    rep.steps = tr.steps_done;
    rep.initial_loss = tr.initial_loss;
    rep.final_loss = tr.final_loss;
    rep.output_path = fc.output_path;
    return rep;
}

} // namespace inkdiff
