#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace axunet {

// SplitMix64 stream. Hand-rolled (not <random>) so that sequences are
// identical across standard libraries and platforms; reproducibility of
// splits, init and augmentation depends on it.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    // unbiased integer in [0,n)
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Box-Muller, spare value cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename V>
    void shuffle(std::vector<V>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Namespaced seed derivation: one command-level seed fans out to independent
// streams ("split", "init", "augment", ...) so adding a consumer does not
// shift the draws of another.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view ns) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const char c : ns) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    Rng mix(base ^ h);
    return mix.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view ns, std::uint64_t index) {
    Rng mix(derive_seed(base, ns) ^ (index * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull));
    return mix.next_u64();
}

}  // namespace axunet
