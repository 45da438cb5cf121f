#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace coepg {

inline double logsumexp(std::span<const double> x)
{
    if (x.empty())
        return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (double v : x)
        s += std::exp(v - m);
    return m + std::log(s);
}

/// log softmax(x / temperature), max-subtracted.
inline std::vector<double> log_softmax(std::span<const double> x, double temperature = 1.0)
{
    std::vector<double> out(x.begin(), x.end());
    if (temperature != 1.0)
        for (auto& v : out)
            v /= temperature;
    const double lse = logsumexp(out);
    for (auto& v : out)
        v -= lse;
    return out;
}

inline std::vector<double> softmax(std::span<const double> x, double temperature = 1.0)
{
    auto out = log_softmax(x, temperature);
    for (auto& v : out)
        v = std::exp(v);
    return out;
}

/// Index of the maximum; ties resolve to the lowest index.
inline std::size_t argmax(std::span<const double> x)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
        if (x[i] > x[best])
            best = i;
    return best;
}

/// Exact KL(p || q) between two categoricals given as log-probabilities.
inline double categorical_kl(std::span<const double> logp, std::span<const double> logq)
{
    double kl = 0.0;
    for (std::size_t i = 0; i < logp.size(); ++i) {
        const double p = std::exp(logp[i]);
        if (p > 0.0)
            kl += p * (logp[i] - logq[i]);
    }
    return kl;
}

} // namespace coepg
