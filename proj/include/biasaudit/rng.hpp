#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace biasaudit {

/// Seeded generator whose derived draws do not depend on the standard library's
/// distribution implementations, so streams are identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();
    /// Uniform integer on [0, bound); bound must be positive.
    std::uint64_t below(std::uint64_t bound);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Derives an independent stream seed for (base seed, stream index).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace biasaudit
