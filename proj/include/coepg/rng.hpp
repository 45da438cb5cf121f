#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>

namespace coepg {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v)
{
    return splitmix64(h ^ (splitmix64(v) + 0x632be59bd9b4e019ULL + (h << 6) + (h >> 2)));
}

inline std::uint64_t hash_values(std::initializer_list<std::uint64_t> values)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto v : values)
        h = hash_combine(h, v);
    return h;
}

/// Deterministic random stream. Every consumer that may run concurrently gets
/// its own stream derived from (seed, tags...), so results never depend on
/// thread scheduling. Conversions from raw engine output are done here rather
/// than through <random> distributions, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags)
    {
        std::uint64_t h = splitmix64(seed);
        for (auto t : tags)
            h = hash_combine(h, t);
        return Rng(h);
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (one value per call).
    double normal()
    {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::size_t below(std::size_t n)
    {
        const auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Sample an index from a probability vector (assumed normalized).
    std::size_t categorical(std::span<const double> probs)
    {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc)
                return i;
        }
        // rounding left a sliver above the cumulative sum: last nonzero entry
        for (std::size_t i = probs.size(); i-- > 0;)
            if (probs[i] > 0.0)
                return i;
        return 0;
    }

    template <class Vec>
    void shuffle(Vec& v)
    {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace coepg
