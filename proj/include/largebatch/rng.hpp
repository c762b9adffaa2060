#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "largebatch/tensor.hpp"

namespace largebatch {

// Philox4x32-10 block function: a keyed bijection on 128-bit counters.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

// Counter-based generator. The output stream is a pure function of
// (seed, stream id, position), so independent streams can be carved out per
// worker and epoch without any shared state. Single owner: do not advance one
// instance from two threads.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    // Stream for a (worker, epoch)-style pair of identifiers.
    static Rng split(std::uint64_t seed, std::uint32_t major, std::uint32_t minor) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    std::uint64_t next_u64() noexcept;
    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    // Unbiased integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n) noexcept;
    // Box-Muller; consumes two uniforms per pair of normals.
    double normal() noexcept;

    template <typename T>
    void shuffle(std::vector<T>& items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int buffered_ = 0;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

// Tensor of i.i.d. N(mean, stddev^2) draws. stddev must be >= 0.
Tensor rand_normal(Rng& rng, const Shape& shape, double mean, double stddev);

}  // namespace largebatch
