#pragma once

#include <cstdint>
#include <utility>

#include "inkdiff/tensor.hpp"

namespace inkdiff {

// Counter-based random stream: the state is exactly (seed, stream_id, counter)
// and every output is a pure hash of that triple, so streams can be split,
// replayed from any step, and drawn from in parallel without shared state.
class RandomStream {
public:
    RandomStream() : RandomStream(0, 0) {}
    RandomStream(uint64_t seed, uint64_t stream_id, uint64_t counter = 0);

    uint64_t seed() const { return seed_; }
    uint64_t stream_id() const { return stream_id_; }
    uint64_t counter() const { return counter_; }

    // Independent stream keyed off this one; does not consume state.
    RandomStream substream(uint64_t key) const;

    uint64_t next_u64();
    double next_uniform();      // [0, 1)
    double next_uniform_pos();  // (0, 1]

    // Box-Muller over two uniform draws; always consumes exactly two counters.
    std::pair<double, double> next_normal_pair();
    double next_normal();

    // floor(u * n); bias is O(n / 2^53), negligible for our n.
    int64_t next_index(int64_t n);

    // i.i.d. standard normals, generated pairwise. Error on empty shape.
    Tensor normal(const std::vector<int>& shape);
    void fill_normal(real* out, int64_t n);

    void shuffle(std::vector<int>& v);

private:
    uint64_t seed_;
    uint64_t stream_id_;
    uint64_t counter_;
    uint64_t key_;
};

uint64_t mix64(uint64_t z);

} // namespace inkdiff
