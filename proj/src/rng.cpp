#include "inkdiff/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace inkdiff {

// splitmix64 finalizer; bijective on 64-bit words.
uint64_t mix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

RandomStream::RandomStream(uint64_t seed, uint64_t stream_id, uint64_t counter)
    : seed_(seed), stream_id_(stream_id), counter_(counter) {
    key_ = mix64(seed_ ^ mix64(stream_id_ ^ 0xA0761D6478BD642Full));
}

RandomStream RandomStream::substream(uint64_t key) const {
    return RandomStream(seed_, mix64(stream_id_ ^ mix64(key ^ 0xE7037ED1A0B428DBull)));
}

uint64_t RandomStream::next_u64() {
    return mix64(key_ ^ counter_++);
}

double RandomStream::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::next_uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

std::pair<double, double> RandomStream::next_normal_pair() {
    double u1 = next_uniform_pos();
    double u2 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    return {r * std::cos(a), r * std::sin(a)};
}

double RandomStream::next_normal() {
    return next_normal_pair().first;
}

int64_t RandomStream::next_index(int64_t n) {
    if (n <= 0) throw std::invalid_argument("next_index: n must be positive");
    int64_t i = static_cast<int64_t>(next_uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
}

Tensor RandomStream::normal(const std::vector<int>& shape) {
    if (shape.empty()) throw std::invalid_argument("normal: shape must be non-empty");
    Tensor t(shape);
    fill_normal(t.ptr(), t.numel());
    return t;
}

void RandomStream::fill_normal(real* out, int64_t n) {
    int64_t i = 0;
    while (i + 1 < n) {
        auto [a, b] = next_normal_pair();
        out[i++] = static_cast<real>(a);
        out[i++] = static_cast<real>(b);
    }
    if (i < n) out[i] = static_cast<real>(next_normal_pair().first);
}

void RandomStream::shuffle(std::vector<int>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
        int64_t j = next_index(i + 1);
        std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
}

} // namespace inkdiff
