#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "triage/errors.hpp"

namespace triage {

// Deterministic, platform-independent random stream (splitmix64 core).
// std::mt19937 + std::*_distribution are not bit-stable across standard
// library implementations, so every stochastic component in the project
// draws from this stream instead. All derived draws consume a fixed
// number of core outputs, which keeps parallel runs replayable.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : state_(seed) {}

    // Independent substream: same master seed + different tag = different,
    // reproducible stream. Used to decouple environment randomness from
    // policy randomness.
    RandomStream fork(std::uint64_t tag) const {
        RandomStream child(mix(state_ ^ 0x9e3779b97f4a7c15ull) ^ mix(tag + 0x632be59bd9b4e019ull));
        return child;
    }
    RandomStream fork(const std::string& tag) const {
        std::uint64_t h = 1469598103934665603ull; // FNV-1a
        for (unsigned char c : tag) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return fork(h);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Multiply-shift: one core draw regardless of
    // n, so the stream position never depends on the argument.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw ContractError("uniform_int: n must be positive");
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (two core draws, fixed consumption).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Inverse-transform Poisson: one core draw, reproducible everywhere.
    int poisson(double lambda) {
        if (lambda < 0) throw ContractError("poisson: lambda must be non-negative");
        if (lambda == 0) return 0;
        double u = uniform();
        double pmf = std::exp(-lambda);
        double cdf = pmf;
        int k = 0;
        // Bound the walk; relevant tail mass beyond this is < 1e-12 for the
        // arrival rates used here.
        const int k_max = static_cast<int>(lambda + 12.0 * std::sqrt(lambda) + 24.0);
        while (u > cdf && k < k_max) {
            ++k;
            pmf *= lambda / k;
            cdf += pmf;
        }
        return k;
    }

    // Fisher-Yates with fixed consumption (n-1 draws).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices out of [0, n), order random. One pass reservoir-free
    // partial Fisher-Yates over an index vector.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) throw ContractError("sample_without_replacement: k > n");
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(uniform_int(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

} // namespace triage
