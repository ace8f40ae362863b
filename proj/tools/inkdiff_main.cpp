// inkdiff — experiment runner: dataset generation, pretraining, fine-tuning,
// sampling, evaluation, and the comparison report.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "inkdiff/autoencoder.hpp"
#include "inkdiff/classifier.hpp"
#include "inkdiff/dataset.hpp"
#include "inkdiff/diffusion.hpp"
#include "inkdiff/errors.hpp"
#include "inkdiff/finetune.hpp"
#include "inkdiff/fid.hpp"
#include "inkdiff/hash.hpp"
#include "inkdiff/kmeans.hpp"
#include "inkdiff/lora.hpp"
#include "inkdiff/meta_io.hpp"
#include "inkdiff/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace inkdiff;

namespace {

json load_json_file(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw DataError(what + ": cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(what + ": " + path + " is not valid JSON (" + e.what() + ")");
    }
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

// --config file merged under explicit flags: config value applies only when
// the flag was not given on the command line
template <typename T>
void merge_cfg(const CLI::App& cmd, const json& cfg, const char* flag, const char* key, T& out) {
    if (!cfg.contains(key)) return;
    if (cmd.count(flag) > 0) return;
    out = cfg.at(key).get<T>();
}

TokenVocabulary vocab_from_manifest(const DatasetManifest& m) {
    TokenVocabulary v = TokenVocabulary::make_base();
    for (const DatasetRecord& r : m.records) v.add_prompt(r.prompt);
    return v;
}

bool has_identifier(const TokenVocabulary& vocab, const std::string& prompt) {
    std::vector<int> ids = vocab.tokenize(prompt);
    return std::find(ids.begin(), ids.end(), TokenVocabulary::kIdentifier) != ids.end();
}

struct LoadedDenoiser {
    ModelParams params; // opt state stripped
    AdamState opt;
    CheckpointMeta meta;
    DenoiserConfig cfg;
    NoiseSchedule sched;
    TokenVocabulary vocab;
};

LoadedDenoiser load_denoiser(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.meta.kind != "denoiser")
        throw DataError(path + ": kind '" + ck.meta.kind + "', expected 'denoiser'");
    LoadedDenoiser d;
    d.meta = ck.meta;
    d.params = std::move(ck.params);
    d.opt = split_opt_state(d.params);
    d.opt.step = d.meta.step;
    d.cfg = denoiser_config_from_json(d.meta.config);
    d.sched = schedule_from_json(d.meta.schedule);
    d.vocab = TokenVocabulary::from_list(d.meta.vocab);
    return d;
}

std::vector<int> parse_channels(const std::string& csv) {
    std::vector<int> out;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (out.empty()) throw UsageError("channel list is empty");
    return out;
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(const std::string& out, int total, int count_a, int count_b, int size,
                 uint64_t seed) {
    if (count_a == 0 && count_b == 0) {
        auto [a, b] = split_paper_ratio(total);
        count_a = a;
        count_b = b;
    } else if (count_a <= 0 || count_b <= 0) {
        throw UsageError("gen-data: give both --count-a and --count-b or neither");
    }
    DatasetManifest m = synth_generate(count_a, count_b, size, seed, out);
    std::cout << "wrote " << m.records.size() << " images (" << count_a << " chinese, " << count_b
              << " modern, " << size << "x" << size << ") to " << out << "\n";
    return 0;
}

int cmd_verify_data(const std::string& data) {
    DatasetManifest m = load_manifest(data);
    verify_manifest(m);
    std::cout << "ok: " << m.records.size() << " records verified\n";
    return 0;
}

// ---------------------------------------------------------------- pretrain

struct PretrainArgs {
    std::string data, out, config_path, log_path, resume, ae_path;
    int64_t steps = 2000;
    int batch = 16;
    double lr = 1e-4;
    double p_drop = 0.1;
    uint64_t seed = 0;
    int64_t checkpoint_every = 0;
    std::string channels = "32,64";
    int res_blocks = 2;
    int groups = 8;
    int temb_dim = 64;
    int embed_dim = 64;
    int T = 1000;
    double beta1 = 1e-4, betaT = 0.02;
    std::string sigma = "beta";
    bool latent = false;
    int64_t log_every = 10;
};

int cmd_pretrain(const CLI::App& cmd, PretrainArgs a) {
    if (!a.config_path.empty()) {
        json cfg = load_json_file(a.config_path, "pretrain config");
        require_keys(cfg,
                     {"steps", "batch", "lr", "p_drop", "seed", "checkpoint_every", "channels",
                      "res_blocks", "groups", "temb_dim", "embed_dim", "T", "beta1", "betaT",
                      "sigma", "latent", "log_every"},
                     "pretrain config");
        merge_cfg(cmd, cfg, "--steps", "steps", a.steps);
        merge_cfg(cmd, cfg, "--batch", "batch", a.batch);
        merge_cfg(cmd, cfg, "--lr", "lr", a.lr);
        merge_cfg(cmd, cfg, "--p-drop", "p_drop", a.p_drop);
        merge_cfg(cmd, cfg, "--seed", "seed", a.seed);
        merge_cfg(cmd, cfg, "--checkpoint-every", "checkpoint_every", a.checkpoint_every);
        merge_cfg(cmd, cfg, "--channels", "channels", a.channels);
        merge_cfg(cmd, cfg, "--res-blocks", "res_blocks", a.res_blocks);
        merge_cfg(cmd, cfg, "--groups", "groups", a.groups);
        merge_cfg(cmd, cfg, "--temb-dim", "temb_dim", a.temb_dim);
        merge_cfg(cmd, cfg, "--embed-dim", "embed_dim", a.embed_dim);
        merge_cfg(cmd, cfg, "--T", "T", a.T);
        merge_cfg(cmd, cfg, "--beta1", "beta1", a.beta1);
        merge_cfg(cmd, cfg, "--betaT", "betaT", a.betaT);
        merge_cfg(cmd, cfg, "--sigma", "sigma", a.sigma);
        merge_cfg(cmd, cfg, "--latent", "latent", a.latent);
        merge_cfg(cmd, cfg, "--log-every", "log_every", a.log_every);
    }

    DatasetManifest data = load_manifest(a.data);

    ModelParams params;
    AdamState opt;
    DenoiserConfig dcfg;
    NoiseSchedule sched;
    TokenVocabulary vocab;
    CheckpointMeta meta;
    int64_t start_step = 0;

    ModelParams ae_params;
    AutoencoderConfig ae_cfg;
    if (a.latent) {
        if (a.ae_path.empty())
            throw UsageError("pretrain: latent mode requires --autoencoder <ckpt>");
        Checkpoint ae = load_checkpoint(a.ae_path);
        if (ae.meta.kind != "autoencoder")
            throw DataError(a.ae_path + ": kind '" + ae.meta.kind + "', expected 'autoencoder'");
        ae_cfg = autoencoder_config_from_json(ae.meta.config);
        if (ae_cfg.image_size != data.image_size)
            throw DataError("pretrain: autoencoder image size does not match dataset");
        ae_params = std::move(ae.params);
        split_opt_state(ae_params);
        set_trainable(ae_params, false);
    }

    if (!a.resume.empty()) {
        LoadedDenoiser d = load_denoiser(a.resume);
        params = std::move(d.params);
        opt = std::move(d.opt);
        dcfg = d.cfg;
        sched = d.sched;
        vocab = d.vocab;
        meta = d.meta;
        start_step = d.meta.step;
    } else {
        dcfg.image_size = a.latent ? data.image_size / 2 : data.image_size;
        dcfg.in_channels = a.latent ? ae_cfg.latent_channels : 1;
        dcfg.channels = parse_channels(a.channels);
        dcfg.res_blocks = a.res_blocks;
        dcfg.groups = a.groups;
        dcfg.temb_dim = a.temb_dim;
        dcfg.embed_dim = a.embed_dim;
        dcfg.validate();
        sched = schedule_from_json(
            {{"T", a.T}, {"beta1", a.beta1}, {"betaT", a.betaT}, {"sigma", a.sigma}});
        vocab = vocab_from_manifest(data);
        RandomStream init_rs(a.seed, 10);
        params = init_denoiser(dcfg, vocab.size(), init_rs);
        meta.kind = "denoiser";
        meta.config = denoiser_config_to_json(dcfg);
        meta.vocab = vocab.tokens;
        meta.schedule = schedule_to_json(sched);
        if (a.latent) {
            meta.extra["latent"] = true;
            meta.extra["ae_hash"] = hash_hex(params_content_hash(ae_params));
        }
    }

    TrainLoopConfig tc;
    tc.steps = a.steps;
    tc.batch = a.batch;
    tc.lr = a.lr;
    tc.p_drop = a.p_drop;
    tc.seed = a.seed;
    tc.log_every = a.log_every;
    tc.checkpoint_every = a.checkpoint_every;
    tc.checkpoint_path = a.out;
    if (a.latent) {
        tc.checked_range = false;
        tc.transform = [&](const Tensor& x) { return ae_encode_t(x, ae_params, ae_cfg); };
    }

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!a.log_path.empty()) {
        log_file.open(a.log_path);
        if (!log_file) throw DataError("cannot write " + a.log_path);
        log = &log_file;
    }

    TrainReport rep = train_loop(data, params, opt, vocab, dcfg, sched, tc, meta, start_step, log);
    std::cout << "trained " << rep.steps_done << " steps; first loss " << rep.initial_loss
              << ", trailing loss " << rep.final_loss << "; checkpoint " << a.out << "\n";
    return 0;
}

// ------------------------------------------------------- extractor / ae

int cmd_train_extractor(const std::string& data_dir, const std::string& out, int steps, int batch,
                        double lr, double holdout, uint64_t seed, const std::string& log_path) {
    DatasetManifest data = load_manifest(data_dir);
    ClassifierConfig cfg;
    cfg.image_size = data.image_size;
    ClassifierTrainConfig tc;
    tc.steps = steps;
    tc.batch = batch;
    tc.lr = lr;
    tc.holdout_frac = holdout;
    tc.seed = seed;

    std::ofstream log_file;
    std::ostream* log = nullptr;
    if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw DataError("cannot write " + log_path);
        log = &log_file;
    }
    TrainedClassifier trained = train_classifier(data, cfg, tc, log);

    CheckpointMeta meta;
    meta.kind = "classifier";
    meta.config = classifier_config_to_json(cfg);
    meta.step = steps;
    meta.extra["holdout_accuracy"] = trained.holdout_accuracy;
    save_checkpoint(trained.params, meta, out);
    std::cout << "extractor holdout accuracy " << trained.holdout_accuracy << "; checkpoint "
              << out << "\n";
    return 0;
}

int cmd_train_autoencoder(const std::string& data_dir, const std::string& out, int64_t steps,
                          int batch, double lr, uint64_t seed, const std::string& log_path) {
    DatasetManifest data = load_manifest(data_dir);
    AutoencoderConfig cfg;
    cfg.image_size = data.image_size;
    AutoencoderTrainConfig tc;
    tc.steps = steps;
    tc.batch = batch;
    tc.lr = lr;
    tc.seed = seed;

    std::ofstream log_file;
    std::ostream* log = nullptr;
    if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw DataError("cannot write " + log_path);
        log = &log_file;
    }
    TrainedAutoencoder trained = train_autoencoder(data, cfg, tc, log);

    CheckpointMeta meta;
    meta.kind = "autoencoder";
    meta.config = autoencoder_config_to_json(cfg);
    meta.step = steps;
    meta.extra["holdout_mse"] = trained.holdout_mse;
    save_checkpoint(trained.params, meta, out);
    std::cout << "autoencoder holdout mse " << trained.holdout_mse << "; checkpoint " << out
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- finetune

struct FinetuneArgs {
    std::string method = "lora";
    std::string base, data, out, config_path, log_path, class_filter;
    int64_t steps = 500;
    int batch = 16;
    double lr = 0; // 0 = per-method default
    uint64_t seed = 0;
    int64_t checkpoint_every = 0;
    std::string checkpoint_path;
    int rank = 4;
    double alpha = 4.0;
    std::string identifier = TokenVocabulary::kIdentifierText;
    std::string instance_prompt, class_prompt_db;
    double prior_weight = 1.0;
    int prior_count = 200;
    std::string prior_dir;
    int64_t log_every = 10;
};

int cmd_finetune(const CLI::App& cmd, FinetuneArgs a) {
    if (!a.config_path.empty()) {
        json cfg = load_json_file(a.config_path, "finetune config");
        require_keys(cfg,
                     {"method", "steps", "batch", "lr", "seed", "class_filter", "rank", "alpha",
                      "identifier", "instance_prompt", "class_prompt", "prior_weight",
                      "prior_count", "prior_dir", "checkpoint_every", "log_every"},
                     "finetune config");
        merge_cfg(cmd, cfg, "--method", "method", a.method);
        merge_cfg(cmd, cfg, "--steps", "steps", a.steps);
        merge_cfg(cmd, cfg, "--batch", "batch", a.batch);
        merge_cfg(cmd, cfg, "--lr", "lr", a.lr);
        merge_cfg(cmd, cfg, "--seed", "seed", a.seed);
        merge_cfg(cmd, cfg, "--class-filter", "class_filter", a.class_filter);
        merge_cfg(cmd, cfg, "--rank", "rank", a.rank);
        merge_cfg(cmd, cfg, "--alpha", "alpha", a.alpha);
        merge_cfg(cmd, cfg, "--identifier", "identifier", a.identifier);
        merge_cfg(cmd, cfg, "--instance-prompt", "instance_prompt", a.instance_prompt);
        merge_cfg(cmd, cfg, "--class-prompt", "class_prompt", a.class_prompt_db);
        merge_cfg(cmd, cfg, "--prior-weight", "prior_weight", a.prior_weight);
        merge_cfg(cmd, cfg, "--prior-count", "prior_count", a.prior_count);
        merge_cfg(cmd, cfg, "--prior-dir", "prior_dir", a.prior_dir);
        merge_cfg(cmd, cfg, "--checkpoint-every", "checkpoint_every", a.checkpoint_every);
        merge_cfg(cmd, cfg, "--log-every", "log_every", a.log_every);
    }

    DatasetManifest data = load_manifest(a.data);
    LoadedDenoiser base = load_denoiser(a.base);
    if (base.meta.extra.contains("latent") && base.meta.extra["latent"].get<bool>())
        throw UsageError("finetune: latent-mode base checkpoints are not supported here");

    FinetuneConfig fc;
    fc.method = a.method;
    fc.output_path = a.out;
    fc.lora_rank = a.rank;
    fc.lora_alpha = a.alpha;
    fc.train.steps = a.steps;
    fc.train.batch = a.batch;
    fc.train.lr = a.lr > 0 ? a.lr : (a.method == "full" ? 1e-5 : 1e-4);
    fc.train.p_drop = 0.0; // fine-tuning keeps the conditioning it is given
    fc.train.seed = a.seed;
    fc.train.log_every = a.log_every;
    fc.train.checkpoint_every = a.checkpoint_every;
    fc.train.checkpoint_path = a.checkpoint_path;
    fc.train.class_filter = a.class_filter;
    fc.db.identifier = a.identifier;
    if (!a.instance_prompt.empty()) fc.db.instance_prompt = a.instance_prompt;
    if (!a.class_prompt_db.empty()) fc.db.class_prompt = a.class_prompt_db;
    fc.db.prior_weight = a.prior_weight;
    fc.db.prior_count = a.prior_count;
    fc.db.lr = a.lr > 0 ? a.lr : 1e-5;
    fc.db.prior_dir = a.prior_dir;
    if (a.method == "dreambooth" && fc.db.prior_dir.empty())
        throw UsageError("finetune: dreambooth requires --prior-dir");

    AdamState opt; // fine-tuning starts a fresh optimizer
    CheckpointMeta meta = base.meta;
    meta.step = 0;

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!a.log_path.empty()) {
        log_file.open(a.log_path);
        if (!log_file) throw DataError("cannot write " + a.log_path);
        log = &log_file;
    }

    FinetuneReport rep = finetune_loop(data, base.params, opt, base.vocab, base.cfg, base.sched,
                                       fc, meta, log);
    std::cout << rep.method << " finetune: " << rep.steps << " steps; first loss "
              << rep.initial_loss << ", trailing loss " << rep.final_loss << "; wrote "
              << rep.output_path << "\n";
    return 0;
}

// ------------------------------------------------------------------ sample

int cmd_sample(const std::string& ckpt, const std::string& adapter, const std::string& ae_path,
               const std::string& prompt, int count, double guidance, uint64_t seed,
               const std::string& out, bool sheet, int batch) {
    LoadedDenoiser d = load_denoiser(ckpt);
    if (!adapter.empty()) load_lora_adapter(d.params, adapter);
    set_trainable(d.params, false);

    bool latent = d.meta.extra.contains("latent") && d.meta.extra["latent"].get<bool>();
    ModelParams ae_params;
    AutoencoderConfig ae_cfg;
    if (latent) {
        if (ae_path.empty()) throw UsageError("sample: latent checkpoint requires --autoencoder");
        Checkpoint ae = load_checkpoint(ae_path);
        if (ae.meta.kind != "autoencoder")
            throw DataError(ae_path + ": kind '" + ae.meta.kind + "', expected 'autoencoder'");
        ae_cfg = autoencoder_config_from_json(ae.meta.config);
        ae_params = std::move(ae.params);
        split_opt_state(ae_params);
        set_trainable(ae_params, false);
        if (d.meta.extra.contains("ae_hash") &&
            d.meta.extra["ae_hash"].get<std::string>() != hash_hex(params_content_hash(ae_params)))
            throw DataError("sample: autoencoder does not match the one used for pretraining");
    }

    std::vector<int> ids = d.vocab.tokenize(prompt);
    NoisePredictor pred = make_denoiser_predictor(d.params, d.cfg, ids);
    SampleConfig sc;
    sc.count = count;
    sc.guidance = guidance;
    sc.batch = batch;
    sc.clamp_output = !latent;
    std::vector<Tensor> images =
        sample_loop(pred, {d.cfg.in_channels, d.cfg.image_size, d.cfg.image_size}, d.sched,
                    RandomStream(seed, 20), sc);

    if (latent) {
        for (Tensor& img : images) {
            Tensor z({1, d.cfg.in_channels, d.cfg.image_size, d.cfg.image_size}, img.data);
            Tensor x = ae_decode_t(z, ae_params, ae_cfg);
            for (real& v : x.data) v = std::clamp(v, static_cast<real>(-1), static_cast<real>(1));
            img = Tensor({1, ae_cfg.image_size, ae_cfg.image_size}, std::move(x.data));
        }
    }

    fs::create_directories(out);
    std::vector<ImageU8> u8;
    for (int i = 0; i < count; ++i) {
        u8.push_back(denormalize(images[static_cast<size_t>(i)]));
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04d.pgm", i);
        write_pgm(out + "/" + name, u8.back());
    }
    if (sheet) {
        int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count)))));
        write_pgm(out + "/sheet.pgm", contact_sheet(u8, cols));
    }
    std::cout << "wrote " << count << " samples to " << out << "\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const CLI::App& cmd, std::string ckpt, std::string adapter, std::string prompt,
                 std::string data_dir, std::string class_filter, int repeats, int n,
                 std::string extractor, bool random_extractor, uint64_t extractor_seed,
                 double guidance, uint64_t seed, std::string out, std::string tag,
                 const std::string& config_path, int batch) {
    if (!config_path.empty()) {
        json cfg = load_json_file(config_path, "evaluate config");
        require_keys(cfg,
                     {"prompt", "class_filter", "repeats", "n", "guidance", "seed", "tag"},
                     "evaluate config");
        merge_cfg(cmd, cfg, "--prompt", "prompt", prompt);
        merge_cfg(cmd, cfg, "--class-filter", "class_filter", class_filter);
        merge_cfg(cmd, cfg, "--repeats", "repeats", repeats);
        merge_cfg(cmd, cfg, "--n", "n", n);
        merge_cfg(cmd, cfg, "--guidance", "guidance", guidance);
        merge_cfg(cmd, cfg, "--seed", "seed", seed);
        merge_cfg(cmd, cfg, "--tag", "tag", tag);
    }
    if (prompt.empty()) throw UsageError("evaluate: --prompt is required");

    LoadedDenoiser d = load_denoiser(ckpt);
    if (d.meta.extra.contains("latent") && d.meta.extra["latent"].get<bool>())
        throw UsageError("evaluate: latent-mode checkpoints are not supported here");
    if (!adapter.empty()) load_lora_adapter(d.params, adapter);
    set_trainable(d.params, false);

    // a DreamBooth model is only meaningful with its identifier in the prompt
    if (d.meta.extra.contains("dreambooth") && !has_identifier(d.vocab, prompt))
        throw UsageError("evaluate: this checkpoint was DreamBooth-fine-tuned; the prompt must "
                         "contain the identifier '" +
                         d.meta.extra["dreambooth"].value("identifier", "[V]") + "'");

    if (class_filter.empty()) {
        std::vector<std::string> words = split_words(prompt);
        bool ch = std::find(words.begin(), words.end(), "chinese") != words.end();
        bool mo = std::find(words.begin(), words.end(), "modern") != words.end();
        if (ch == mo)
            throw UsageError("evaluate: cannot infer the real-image class from the prompt; "
                             "pass --class-filter chinese|modern");
        class_filter = ch ? "chinese" : "modern";
    }

    DatasetManifest data = load_manifest(data_dir);
    std::vector<Tensor> reals;
    for (const DatasetRecord& r : data.records)
        if (r.style == class_filter) reals.push_back(normalize(read_pgm(data.root + "/" + r.file)));
    if (reals.empty()) throw DataError("evaluate: no real images of class " + class_filter);

    ClassifierConfig ccfg;
    ModelParams cparams;
    if (random_extractor) {
        ccfg.image_size = data.image_size;
        cparams = make_random_extractor(ccfg, extractor_seed);
    } else {
        if (extractor.empty())
            throw UsageError("evaluate: pass --extractor <ckpt> or --random-extractor");
        Checkpoint ce = load_checkpoint(extractor);
        if (ce.meta.kind != "classifier")
            throw DataError(extractor + ": kind '" + ce.meta.kind + "', expected 'classifier'");
        ccfg = classifier_config_from_json(ce.meta.config);
        cparams = std::move(ce.params);
        split_opt_state(cparams);
        set_trainable(cparams, false);
    }
    if (ccfg.image_size != d.cfg.image_size)
        throw DataError("evaluate: extractor image size does not match the model");

    std::vector<int> ids = d.vocab.tokenize(prompt);
    NoisePredictor pred = make_denoiser_predictor(d.params, d.cfg, ids);
    ImageGenerator gen = [&](int count, const RandomStream& stream) {
        SampleConfig sc;
        sc.count = count;
        sc.guidance = guidance;
        sc.batch = batch;
        return sample_loop(pred, {d.cfg.in_channels, d.cfg.image_size, d.cfg.image_size}, d.sched,
                           stream, sc);
    };
    FeatureFn feats = [&](const std::vector<Tensor>& images) {
        return extract_features(images, cparams, ccfg);
    };

    FidProtocolConfig pc;
    pc.repeats = repeats;
    pc.n = n;
    if (tag.empty()) tag = fs::path(ckpt).stem().string() + (adapter.empty() ? "" : "+lora");
    FidReport rep = fid_protocol(gen, reals, feats, pc, RandomStream(seed, 21), tag, prompt);

    json j = {{"model", rep.model_tag},           {"prompt", rep.prompt},
              {"class_filter", class_filter},     {"repeats", repeats},
              {"n_per_repeat", rep.n_per_repeat}, {"fids", rep.fids},
              {"mean", rep.mean},                 {"std", rep.stddev},
              {"guidance", guidance},             {"seed", seed}};
    write_json_file(out, j);
    std::printf("%s: FID %.4f +- %.4f over %d repeats (n=%d) -> %s\n", rep.model_tag.c_str(),
                rep.mean, rep.stddev, repeats, n, out.c_str());
    return 0;
}

// ------------------------------------------------------------ rate-cluster

int cmd_rate_cluster(const std::string& ratings, int k, uint64_t seed, const std::string& out) {
    RatingTable table = parse_ratings_csv(ratings);
    ClusterResult res = cluster_ratings(table, k, RandomStream(seed, 22));
    json j = {{"k", k},
              {"centers", res.centers},
              {"assignment", res.assignment},
              {"inertia", res.inertia},
              {"degenerate", res.degenerate},
              {"rows", table.rows.size()}};
    write_json_file(out, j);
    std::cout << "centers:";
    for (double c : res.centers) std::printf(" %.4f", c);
    std::cout << " -> " << out << "\n";
    return 0;
}

// ------------------------------------------------------------------ report

int cmd_report(const std::vector<std::string>& evals, const std::string& out) {
    if (evals.empty()) throw UsageError("report: give at least one --evals file");
    std::string md = "| Model | FID (mean ± std) | Repeats | N/repeat |\n"
                     "| --- | --- | --- | --- |\n";
    for (const std::string& path : evals) {
        json j = load_json_file(path, "report");
        for (const char* key : {"model", "fids", "mean", "std", "n_per_repeat"})
            if (!j.contains(key))
                throw DataError("report: " + path + " lacks field '" + std::string(key) + "'");
        char row[256];
        std::snprintf(row, sizeof(row), "| %s | %.2f ± %.2f | %d | %d |\n",
                      j["model"].get<std::string>().c_str(), j["mean"].get<double>(),
                      j["std"].get<double>(), static_cast<int>(j["fids"].size()),
                      j["n_per_repeat"].get<int>());
        md += row;
    }
    write_text_file(out, md);
    std::cout << md;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale text-conditioned diffusion: train, adapt, evaluate"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic two-style dataset");
    std::string gd_out;
    int gd_total = 800, gd_a = 0, gd_b = 0, gd_size = 32;
    uint64_t gd_seed = 0;
    gen->add_option("--out", gd_out, "output directory")->required();
    gen->add_option("--total", gd_total, "total image count (paper class ratio)");
    gen->add_option("--count-a", gd_a, "explicit chinese count");
    gen->add_option("--count-b", gd_b, "explicit modern count");
    gen->add_option("--size", gd_size, "image side length");
    gen->add_option("--seed", gd_seed, "generator seed");

    // verify-data
    auto* vd = app.add_subcommand("verify-data", "check manifest/file consistency");
    std::string vd_data;
    vd->add_option("--data", vd_data, "dataset directory")->required();

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "train the denoiser on both classes");
    PretrainArgs pa;
    pre->add_option("--data", pa.data, "dataset directory")->required();
    pre->add_option("--out", pa.out, "output checkpoint")->required();
    pre->add_option("--config", pa.config_path, "JSON config (flags override)");
    pre->add_option("--steps", pa.steps);
    pre->add_option("--batch", pa.batch);
    pre->add_option("--lr", pa.lr);
    pre->add_option("--p-drop", pa.p_drop);
    pre->add_option("--seed", pa.seed);
    pre->add_option("--checkpoint-every", pa.checkpoint_every);
    pre->add_option("--channels", pa.channels, "per-level widths, e.g. 32,64");
    pre->add_option("--res-blocks", pa.res_blocks);
    pre->add_option("--groups", pa.groups);
    pre->add_option("--temb-dim", pa.temb_dim);
    pre->add_option("--embed-dim", pa.embed_dim);
    pre->add_option("--T", pa.T);
    pre->add_option("--beta1", pa.beta1);
    pre->add_option("--betaT", pa.betaT);
    pre->add_option("--sigma", pa.sigma, "beta | posterior");
    pre->add_flag("--latent", pa.latent, "diffuse in autoencoder latents");
    pre->add_option("--autoencoder", pa.ae_path, "autoencoder checkpoint for --latent");
    pre->add_option("--resume", pa.resume, "resume from checkpoint");
    pre->add_option("--log", pa.log_path, "loss log file (default stdout)");
    pre->add_option("--log-every", pa.log_every);

    // train-extractor
    auto* tx = app.add_subcommand("train-extractor", "train the 2-class feature extractor");
    std::string tx_data, tx_out, tx_log;
    int tx_steps = 300, tx_batch = 32;
    double tx_lr = 1e-3, tx_holdout = 0.2;
    uint64_t tx_seed = 0;
    tx->add_option("--data", tx_data)->required();
    tx->add_option("--out", tx_out)->required();
    tx->add_option("--steps", tx_steps);
    tx->add_option("--batch", tx_batch);
    tx->add_option("--lr", tx_lr);
    tx->add_option("--holdout", tx_holdout);
    tx->add_option("--seed", tx_seed);
    tx->add_option("--log", tx_log);

    // train-autoencoder
    auto* ta = app.add_subcommand("train-autoencoder", "train the latent-space autoencoder");
    std::string ta_data, ta_out, ta_log;
    int64_t ta_steps = 600;
    int ta_batch = 32;
    double ta_lr = 1e-3;
    uint64_t ta_seed = 0;
    ta->add_option("--data", ta_data)->required();
    ta->add_option("--out", ta_out)->required();
    ta->add_option("--steps", ta_steps);
    ta->add_option("--batch", ta_batch);
    ta->add_option("--lr", ta_lr);
    ta->add_option("--seed", ta_seed);
    ta->add_option("--log", ta_log);

    // finetune
    auto* ft = app.add_subcommand("finetune", "full / lora / dreambooth adaptation");
    FinetuneArgs fa;
    ft->add_option("--method", fa.method, "full | lora | dreambooth");
    ft->add_option("--base", fa.base, "base denoiser checkpoint")->required();
    ft->add_option("--data", fa.data, "dataset directory")->required();
    ft->add_option("--out", fa.out, "output checkpoint/adapter")->required();
    ft->add_option("--config", fa.config_path, "JSON config (flags override)");
    ft->add_option("--class-filter", fa.class_filter, "restrict to one style");
    ft->add_option("--steps", fa.steps);
    ft->add_option("--batch", fa.batch);
    ft->add_option("--lr", fa.lr, "0 = per-method default");
    ft->add_option("--seed", fa.seed);
    ft->add_option("--rank", fa.rank, "lora rank");
    ft->add_option("--alpha", fa.alpha, "lora alpha");
    ft->add_option("--identifier", fa.identifier);
    ft->add_option("--instance-prompt", fa.instance_prompt);
    ft->add_option("--class-prompt", fa.class_prompt_db);
    ft->add_option("--prior-weight", fa.prior_weight);
    ft->add_option("--prior-count", fa.prior_count);
    ft->add_option("--prior-dir", fa.prior_dir);
    ft->add_option("--checkpoint-every", fa.checkpoint_every);
    ft->add_option("--checkpoint-path", fa.checkpoint_path, "intermediate checkpoint path");
    ft->add_option("--log", fa.log_path);
    ft->add_option("--log-every", fa.log_every);

    // sample
    auto* sm = app.add_subcommand("sample", "generate images from a checkpoint");
    std::string sm_ckpt, sm_adapter, sm_ae, sm_prompt, sm_out;
    int sm_count = 16, sm_batch = 64;
    double sm_guidance = 1.0;
    uint64_t sm_seed = 0;
    bool sm_sheet = false;
    sm->add_option("--ckpt", sm_ckpt)->required();
    sm->add_option("--adapter", sm_adapter, "lora adapter file");
    sm->add_option("--autoencoder", sm_ae, "autoencoder checkpoint (latent mode)");
    sm->add_option("--prompt", sm_prompt)->required();
    sm->add_option("--count", sm_count);
    sm->add_option("--guidance", sm_guidance);
    sm->add_option("--seed", sm_seed);
    sm->add_option("--batch", sm_batch);
    sm->add_option("--out", sm_out, "output directory")->required();
    sm->add_flag("--sheet", sm_sheet, "also write a contact sheet");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "FID protocol for one model");
    std::string ev_ckpt, ev_adapter, ev_prompt, ev_data, ev_filter, ev_extractor, ev_out, ev_tag,
        ev_config;
    int ev_repeats = 10, ev_n = 256, ev_batch = 64;
    bool ev_random = false;
    uint64_t ev_xseed = 0, ev_seed = 0;
    double ev_guidance = 1.0;
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--adapter", ev_adapter);
    ev->add_option("--prompt", ev_prompt);
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--class-filter", ev_filter, "real-image class (default: from prompt)");
    ev->add_option("--repeats", ev_repeats);
    ev->add_option("--n", ev_n, "images per repeat");
    ev->add_option("--extractor", ev_extractor, "classifier checkpoint");
    ev->add_flag("--random-extractor", ev_random, "seeded random-conv features");
    ev->add_option("--extractor-seed", ev_xseed);
    ev->add_option("--guidance", ev_guidance);
    ev->add_option("--seed", ev_seed);
    ev->add_option("--batch", ev_batch);
    ev->add_option("--out", ev_out, "report JSON")->required();
    ev->add_option("--tag", ev_tag, "model tag for the report");
    ev->add_option("--config", ev_config, "JSON config (flags override)");

    // rate-cluster
    auto* rc = app.add_subcommand("rate-cluster", "k-means over expert ratings");
    std::string rc_ratings, rc_out;
    int rc_k = 3;
    uint64_t rc_seed = 0;
    rc->add_option("--ratings", rc_ratings, "CSV: expert,model,score")->required();
    rc->add_option("--k", rc_k);
    rc->add_option("--seed", rc_seed);
    rc->add_option("--out", rc_out, "clusters JSON")->required();

    // report
    auto* rp = app.add_subcommand("report", "markdown comparison table");
    std::vector<std::string> rp_evals;
    std::string rp_out;
    rp->add_option("--evals", rp_evals, "evaluation JSON files")->required()->expected(-1);
    rp->add_option("--out", rp_out, "markdown output")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gd_out, gd_total, gd_a, gd_b, gd_size, gd_seed);
        if (vd->parsed()) return cmd_verify_data(vd_data);
        if (pre->parsed()) return cmd_pretrain(*pre, pa);
        if (tx->parsed())
            return cmd_train_extractor(tx_data, tx_out, tx_steps, tx_batch, tx_lr, tx_holdout,
                                       tx_seed, tx_log);
        if (ta->parsed())
            return cmd_train_autoencoder(ta_data, ta_out, ta_steps, ta_batch, ta_lr, ta_seed,
                                         ta_log);
        if (ft->parsed()) return cmd_finetune(*ft, fa);
        if (sm->parsed())
            return cmd_sample(sm_ckpt, sm_adapter, sm_ae, sm_prompt, sm_count, sm_guidance,
                              sm_seed, sm_out, sm_sheet, sm_batch);
        if (ev->parsed())
            return cmd_evaluate(*ev, ev_ckpt, ev_adapter, ev_prompt, ev_data, ev_filter,
                                ev_repeats, ev_n, ev_extractor, ev_random, ev_xseed, ev_guidance,
                                ev_seed, ev_out, ev_tag, ev_config, ev_batch);
        if (rc->parsed()) return cmd_rate_cluster(rc_ratings, rc_k, rc_seed, rc_out);
        if (rp->parsed()) return cmd_report(rp_evals, rp_out);
        std::cerr << "usage error: no subcommand\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
