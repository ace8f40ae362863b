#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <vector>

#include "inkdiff/checkpoint.hpp"
#include "inkdiff/errors.hpp"
#include "inkdiff/finetune.hpp"
#include "inkdiff/lora.hpp"

using namespace inkdiff;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("inkdiff_ft_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

DenoiserConfig tiny_cfg() {
    DenoiserConfig cfg;
    cfg.image_size = 16;
    cfg.in_channels = 1;
    cfg.channels = {4, 8};
    cfg.res_blocks = 1;
    cfg.groups = 4;
    cfg.temb_dim = 8;
    cfg.embed_dim = 8;
    return cfg;
}

TokenVocabulary full_vocab() {
    TokenVocabulary v = TokenVocabulary::make_base();
    v.add_prompt("a picture of chinese landscape painting");
    v.add_prompt("a picture of modern landscape painting");
    return v;
}

ModelParams tiny_model(uint64_t seed = 30) {
    RandomStream rs(seed, 0);
    TokenVocabulary v = full_vocab();
    return init_denoiser(tiny_cfg(), v.size(), rs);
}

CheckpointMeta denoiser_meta() {
    CheckpointMeta m;
    m.kind = "denoiser";
    m.vocab = full_vocab().tokens;
    return m;
}

} // namespace

TEST_CASE("combine_dreambooth_terms arithmetic") {
    auto inst = ag::constant(Tensor::scalar(real(0.2)));
    auto prior = ag::constant(Tensor::scalar(real(0.4)));
    CHECK(static_cast<double>(combine_dreambooth_terms(inst, prior, 1.0)->value.item()) ==
          doctest::Approx(0.6));
    CHECK(static_cast<double>(combine_dreambooth_terms(inst, prior, 0.0)->value.item()) ==
          doctest::Approx(0.2));
    CHECK(static_cast<double>(combine_dreambooth_terms(inst, prior, 2.5)->value.item()) ==
          doctest::Approx(0.2 + 2.5 * 0.4));
    CHECK_THROWS_AS(combine_dreambooth_terms(inst, prior, -0.1), std::invalid_argument);
}

TEST_CASE("dreambooth config validation") {
    TokenVocabulary v = full_vocab();
    DreamBoothConfig db;
    CHECK_NOTHROW(db.validate(v));
    DreamBoothConfig bad = db;
    bad.identifier = "painting"; // a real word, but not the reserved token
    CHECK_THROWS_AS(bad.validate(v), std::invalid_argument);
    bad = db;
    bad.instance_prompt = "A picture of Landscape Painting"; // no [V]
    CHECK_THROWS_AS(bad.validate(v), std::invalid_argument);
    bad = db;
    bad.class_prompt = "A picture of [V] Landscape Painting"; // must not have [V]
    CHECK_THROWS_AS(bad.validate(v), std::invalid_argument);
    bad = db;
    bad.prior_weight = -1;
    CHECK_THROWS_AS(bad.validate(v), std::invalid_argument);
    bad = db;
    bad.prior_count = 0;
    CHECK_THROWS_AS(bad.validate(v), std::invalid_argument);
    bad = db;
    bad.lr = 0;
    CHECK_THROWS_AS(bad.validate(v), std::invalid_argument);
}

TEST_CASE("dreambooth_loss: lambda=0 equals the plain instance loss exactly") {
    DenoiserConfig cfg = tiny_cfg();
    TokenVocabulary v = full_vocab();
    ModelParams p = tiny_model();
    NoiseSchedule sched = make_schedule(10, 1e-4, 0.02);
    Tensor inst = Tensor::full({2, 1, 16, 16}, real(0.3));
    Tensor prior = Tensor::full({2, 1, 16, 16}, real(-0.2));
    std::vector<std::vector<int>> inst_ids(2, v.tokenize("a picture of [V] landscape painting"));
    std::vector<std::vector<int>> prior_ids(2, v.tokenize("a picture of landscape painting"));

    RandomStream r1(41, 0);
    NodePtr both = dreambooth_loss(inst, inst_ids, prior, prior_ids, p, cfg, sched, r1, 0.0);
    RandomStream r2(41, 0);
    NodePtr plain = training_loss(inst, inst_ids, p, cfg, sched, r2, 0.0);
    CHECK(both->value.item() == plain->value.item()); // bit-equal: 0*prior adds nothing

    // monotone non-decreasing in lambda on fixed batches
    double prev = -1;
    for (double lam : {0.0, 0.5, 1.0, 2.0}) {
        RandomStream r(41, 0);
        double lv = static_cast<double>(
            dreambooth_loss(inst, inst_ids, prior, prior_ids, p, cfg, sched, r, lam)->value.item());
        CHECK(lv >= prev);
        prev = lv;
    }
    RandomStream r3(41, 0);
    CHECK_THROWS_AS(dreambooth_loss(inst, inst_ids, prior, prior_ids, p, cfg, sched, r3, -0.5),
                    std::invalid_argument);
}

TEST_CASE("prepare_priors: K cached deterministic images with the class prompt") {
    TempDir td("priors"), td2("priors_again");
    DenoiserConfig cfg = tiny_cfg();
    TokenVocabulary v = full_vocab();
    ModelParams p = tiny_model();
    NoiseSchedule sched = make_schedule(4, 1e-4, 0.02);
    const std::string prompt = "A picture of Landscape Painting";

    DatasetManifest m = prepare_priors(p, cfg, sched, v, prompt, 5, 77, td.str());
    CHECK(m.records.size() == 5);
    for (const auto& r : m.records) {
        CHECK(fs::exists(td.path / r.file));
        CHECK(r.prompt == prompt);
        CHECK(r.style == "prior");
    }
    verify_manifest(m);
    // the prior prompt carries no identifier token
    for (int id : v.tokenize(prompt)) CHECK(id != TokenVocabulary::kIdentifier);

    // same seed, fresh dir -> identical bytes
    DatasetManifest m2 = prepare_priors(p, cfg, sched, v, prompt, 5, 77, td2.str());
    for (size_t i = 0; i < m.records.size(); ++i) CHECK(m.records[i].hash == m2.records[i].hash);

    // second call on the same dir reuses the cache (manifest mtime unchanged)
    auto stamp = fs::last_write_time(td.path / "manifest.json");
    DatasetManifest m3 = prepare_priors(p, cfg, sched, v, prompt, 5, 77, td.str());
    CHECK(fs::last_write_time(td.path / "manifest.json") == stamp);
    CHECK(m3.records.size() == 5);

    // cache with the wrong count is refused, not silently regenerated
    CHECK_THROWS_AS(prepare_priors(p, cfg, sched, v, prompt, 6, 77, td.str()), DataError);
    // and a different prompt is refused too
    CHECK_THROWS_AS(
        prepare_priors(p, cfg, sched, v, "A picture of Chinese Landscape Painting", 5, 77, td.str()),
        DataError);
}

TEST_CASE("prepare_priors input validation") {
    TempDir td("priorsbad");
    DenoiserConfig cfg = tiny_cfg();
    TokenVocabulary v = full_vocab();
    ModelParams p = tiny_model();
    NoiseSchedule sched = make_schedule(4, 1e-4, 0.02);
    CHECK_THROWS_AS(prepare_priors(p, cfg, sched, v, "A picture of Landscape Painting", 0, 1, td.str()),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        prepare_priors(p, cfg, sched, v, "A picture of [V] Landscape Painting", 3, 1, td.str()),
        std::invalid_argument);
    CHECK_THROWS_AS(prepare_priors(p, cfg, sched, v, "A picture of Landscape Painting", 3, 1, ""),
                    std::invalid_argument);
}

TEST_CASE("0-step full finetune writes the input params unchanged") {
    TempDir td("identity");
    DatasetManifest data = synth_generate(2, 2, 16, 5, (td.path / "data").string());
    DenoiserConfig cfg = tiny_cfg();
    TokenVocabulary v = full_vocab();
    ModelParams p = tiny_model();
    ModelParams before = clone_params(p);
    NoiseSchedule sched = make_schedule(10, 1e-4, 0.02);
    AdamState opt;
    FinetuneConfig fc;
    fc.method = "full";
    fc.train.steps = 0;
    fc.train.batch = 2;
    fc.train.seed = 3;
    fc.output_path = (td.path / "out.ckpt").string();
    FinetuneReport rep = finetune_loop(data, p, opt, v, cfg, sched, fc, denoiser_meta(), nullptr);
    CHECK(rep.steps == 0);
    Checkpoint out = load_checkpoint(fc.output_path);
    CHECK(out.meta.step == 0);
    for (const auto& [name, node] : before)
        CHECK(out.params.at(name)->value.data == node->value.data);
}

TEST_CASE("lora finetune trains only adapter entries") {
    TempDir td("loraft");
    DatasetManifest data = synth_generate(3, 3, 16, 6, (td.path / "data").string());
    DenoiserConfig cfg = tiny_cfg();
    TokenVocabulary v = full_vocab();
    ModelParams p = tiny_model();
    ModelParams before = clone_params(p);
    uint64_t base_hash_before = params_content_hash(p);
    NoiseSchedule sched = make_schedule(10, 1e-4, 0.02);
    AdamState opt;
    FinetuneConfig fc;
    fc.method = "lora";
    fc.lora_rank = 2;
    fc.lora_alpha = 2.0;
    fc.train.steps = 4;
    fc.train.batch = 3;
    fc.train.lr = 1e-2;
    fc.train.seed = 4;
    fc.output_path = (td.path / "out.lora").string();
    FinetuneReport rep = finetune_loop(data, p, opt, v, cfg, sched, fc, denoiser_meta(), nullptr);
    CHECK(rep.steps == 4);
    CHECK(rep.method == "lora");

    // every non-adapter param is bit-identical; at least one B moved
    bool b_moved = false;
    for (const auto& [name, node] : p) {
        if (name.rfind("lora.", 0) == 0) {
            if (name.back() == 'B' && !all_zero(node->value)) b_moved = true;
            continue;
        }
        CHECK(node->value.data == before.at(name)->value.data);
    }
    CHECK(b_moved);

    // the artifact loads back onto a pristine base (hash binding intact)
    ModelParams fresh = tiny_model();
    CHECK(params_content_hash(fresh) == base_hash_before);
    LoraAdapter back = load_lora_adapter(fresh, fc.output_path);
    CHECK(back.rank == 2);
    for (const auto& n : lora_param_names(back))
        CHECK(fresh.at(n)->value.data == p.at(n)->value.data);
}

TEST_CASE("dreambooth finetune moves only the [V] table row") {
    TempDir td("dbft");
    DatasetManifest data = synth_generate(3, 1, 16, 7, (td.path / "data").string());
    DenoiserConfig cfg = tiny_cfg();
    TokenVocabulary v = full_vocab();
    ModelParams p = tiny_model();
    Tensor table_before = p.at("tok.table")->value; // copy
    NoiseSchedule sched = make_schedule(6, 1e-4, 0.02);
    AdamState opt;
    FinetuneConfig fc;
    fc.method = "dreambooth";
    fc.train.steps = 3;
    fc.train.batch = 2;
    fc.train.seed = 8;
    fc.train.class_filter = "chinese";
    fc.db.prior_count = 3;
    fc.db.prior_dir = (td.path / "priors").string();
    fc.db.lr = 1e-2;
    fc.db.class_prompt = "A picture of Chinese Landscape Painting";
    fc.db.instance_prompt = "A picture of [V] Chinese Landscape Painting";
    fc.output_path = (td.path / "db.ckpt").string();
    FinetuneReport rep = finetune_loop(data, p, opt, v, cfg, sched, fc, denoiser_meta(), nullptr);
    CHECK(rep.steps == 3);

    const Tensor& table_after = p.at("tok.table")->value;
    int cols = cfg.embed_dim;
    for (int row = 0; row < v.size(); ++row) {
        bool changed = false;
        for (int c = 0; c < cols; ++c)
            if (table_after[row * cols + c] != table_before[row * cols + c]) changed = true;
        if (row == TokenVocabulary::kIdentifier)
            CHECK(changed); // the identifier row trains
        else
            CHECK_FALSE(changed); // every other row is bit-frozen
    }
    // denoiser weights did train
    CHECK(rep.output_path == fc.output_path);
    Checkpoint out = load_checkpoint(fc.output_path);
    CHECK(out.meta.extra.contains("dreambooth"));
    CHECK(out.meta.extra["dreambooth"]["identifier"] == "[V]");
}

TEST_CASE("full finetune on a style subset lowers the loss on that subset") {
    TempDir td("improves");
    DatasetManifest data = synth_generate(6, 2, 16, 9, (td.path / "data").string());
    DenoiserConfig cfg = tiny_cfg();
    TokenVocabulary v = full_vocab();
    ModelParams p = tiny_model();
    NoiseSchedule sched = make_schedule(10, 1e-4, 0.02);

    // fixed eval batch: all chinese images under the class prompt
    BatchIterator eval_it(data, 6, RandomStream(1, 0), "chinese");
    Batch eval = eval_it.next();
    std::vector<std::vector<int>> eval_ids;
    for (const auto& prompt : eval.prompts) eval_ids.push_back(v.tokenize(prompt));
    auto eval_loss = [&]() {
        RandomStream rs(2024, 0);
        ModelParams frozen = clone_params(p);
        set_trainable(frozen, false);
        return static_cast<double>(
            training_loss(eval.x, eval_ids, frozen, cfg, sched, rs, 0.0)->value.item());
    };
    double before = eval_loss();

    AdamState opt;
    FinetuneConfig fc;
    fc.method = "full";
    fc.train.steps = 60;
    fc.train.batch = 6;
    fc.train.lr = 3e-3;
    fc.train.seed = 10;
    fc.train.class_filter = "chinese";
    fc.output_path = (td.path / "full.ckpt").string();
    finetune_loop(data, p, opt, v, cfg, sched, fc, denoiser_meta(), nullptr);
    double after = eval_loss();
    CHECK(after < before);
}

TEST_CASE("unknown finetune method is rejected") {
    TempDir td("badmethod");
    DatasetManifest data = synth_generate(2, 2, 16, 11, (td.path / "data").string());
    DenoiserConfig cfg = tiny_cfg();
    TokenVocabulary v = full_vocab();
    ModelParams p = tiny_model();
    NoiseSchedule sched = make_schedule(4, 1e-4, 0.02);
    AdamState opt;
    FinetuneConfig fc;
    fc.method = "adapterless";
    fc.output_path = (td.path / "x.ckpt").string();
    CHECK_THROWS_AS(finetune_loop(data, p, opt, v, cfg, sched, fc, denoiser_meta(), nullptr),
                    std::invalid_argument);
}
