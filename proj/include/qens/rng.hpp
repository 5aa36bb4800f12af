#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace qens {

/// Seeded PRNG wrapper around std::mt19937_64. All distribution code is
/// hand-rolled so that draw sequences are identical across platforms and
/// standard-library versions (std::uniform_real_distribution and friends
/// are implementation-defined).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<int>(x % un);
    }

    /// Standard normal via Box-Muller; two uniform draws per call.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
        }
    }

    /// k distinct values from [0, n), in draw order.
    std::vector<int> sample_without_replacement(int n, int k) {
        if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            const int j = i + uniform_int(n - i);
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
            out.push_back(pool[static_cast<std::size_t>(i)]);
        }
        return out;
    }

    /// k distinct indices from [0, n), drawn sequentially with probability
    /// proportional to weights[i] among the remaining candidates.
    std::vector<int> weighted_sample_without_replacement(const std::vector<double>& weights,
                                                         int k) {
        const int n = static_cast<int>(weights.size());
        if (k > n) throw std::invalid_argument("weighted_sample_without_replacement: k > n");
        std::vector<double> w = weights;
        std::vector<int> idx(w.size());
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(k));
        int remaining = n;
        for (int draw = 0; draw < k; ++draw) {
            double total = 0.0;
            for (int i = 0; i < remaining; ++i) total += w[static_cast<std::size_t>(i)];
            int pick;
            if (total <= 0.0) {
                pick = uniform_int(remaining);
            } else {
                const double r = uniform() * total;
                double acc = 0.0;
                pick = remaining - 1;
                for (int i = 0; i < remaining; ++i) {
                    acc += w[static_cast<std::size_t>(i)];
                    if (r < acc) {
                        pick = i;
                        break;
                    }
                }
            }
            out.push_back(idx[static_cast<std::size_t>(pick)]);
            --remaining;
            std::swap(w[static_cast<std::size_t>(pick)], w[static_cast<std::size_t>(remaining)]);
            std::swap(idx[static_cast<std::size_t>(pick)],
                      idx[static_cast<std::size_t>(remaining)]);
        }
        return out;
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace qens
