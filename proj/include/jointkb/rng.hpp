// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>

namespace jointkb
{

// std::mt19937_64's output sequence is fixed by the standard, but the
// std::*_distribution adaptors are not. Draws go through these helpers so that
// seeded runs reproduce across standard library implementations.
class Rng
{
  public:
    explicit Rng(std::uint64_t seed): _engine(seed) {}

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n)
    {
        auto const limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x = _engine();
        while (x >= limit)
            x = _engine();
        return x % n;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(_engine() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    template <typename T>
    void shuffle(std::span<T> items)
    {
        for (std::size_t i = items.size(); i > 1; --i)
        {
            auto const j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::mt19937_64& engine() noexcept { return _engine; }

  private:
    std::mt19937_64 _engine;
};

} // namespace jointkb
