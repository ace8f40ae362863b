#include "inkdiff/trainer.hpp"

#include <cmath>
#include <deque>
#include <ostream>
#include <stdexcept>

#include "inkdiff/errors.hpp"

namespace inkdiff {

TrainReport train_loop(const DatasetManifest& data, ModelParams& params, AdamState& opt,
                       const TokenVocabulary& vocab, const DenoiserConfig& dcfg,
                       const NoiseSchedule& sched, const TrainLoopConfig& tc,
                       CheckpointMeta meta, int64_t start_step, std::ostream* log) {
    if (tc.steps < 0 || tc.batch < 1 || tc.lr <= 0)
        throw std::invalid_argument("train_loop: bad config");
    if (start_step < 0 || start_step > tc.steps)
        throw std::invalid_argument("train_loop: start_step outside [0, steps]");
    if (data.records.empty()) throw DataError("train_loop: empty dataset");

    RandomStream root(tc.seed, 11);
    BatchIterator it(data, tc.batch, root.substream(0), tc.class_filter);
    it.seek(start_step);
    RandomStream step_root = root.substream(1);

    AdamConfig ocfg;
    ocfg.lr = tc.lr;

    auto save = [&](int64_t done) {
        if (tc.checkpoint_path.empty()) return;
        meta.step = done;
        ModelParams mixed = merge_opt_state(params, opt);
        save_checkpoint(mixed, meta, tc.checkpoint_path);
    };

    TrainReport rep;
    std::deque<double> tail;
    for (int64_t step = start_step; step < tc.steps; ++step) {
        Batch b = it.next();
        if (tc.transform) b.x = tc.transform(b.x);
        std::vector<std::vector<int>> ids;
        ids.reserve(b.prompts.size());
        for (const std::string& p : b.prompts) ids.push_back(vocab.tokenize(p));

        RandomStream srs = step_root.substream(static_cast<uint64_t>(step));
        NodePtr loss = training_loss(b.x, ids, params, dcfg, sched, srs, tc.p_drop,
                                     tc.checked_range);
        double lv = static_cast<double>(loss->value.item());
        if (!std::isfinite(lv))
            throw NumericError("train_loop: non-finite loss at step " + std::to_string(step));
        if (log && tc.log_every > 0 && (step % tc.log_every == 0 || step == tc.steps - 1))
            (*log) << step << "\t" << lv << "\n";

        zero_grads(params);
        ag::backward(loss);
        if (tc.post_backward) tc.post_backward(params);
        adam_step(params, opt, ocfg);

        if (rep.steps_done == 0) rep.initial_loss = lv;
        ++rep.steps_done;
        tail.push_back(lv);
        if (tail.size() > 50) tail.pop_front();

        int64_t done = step + 1;
        if (tc.checkpoint_every > 0 && done % tc.checkpoint_every == 0 && done < tc.steps)
            save(done);
    }
    if (log && tc.log_every > 0 && rep.steps_done > 0) log->flush();

    if (!tail.empty()) {
        double s = 0;
        for (double v : tail) s += v;
        rep.final_loss = s / static_cast<double>(tail.size());
    }
    save(tc.steps);
    return rep;
}

} // namespace inkdiff
