#ifndef CONFENS_RANDOM_HPP
#define CONFENS_RANDOM_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace confens {

// Seeded stream whose outputs are identical on every standard library.
// std::mt19937_64 is fully specified; the std:: distributions are not, so the
// conversions to reals, bounded integers and normals are done here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // [0, bound), rejection sampled.
    std::uint64_t below(std::uint64_t bound);
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64 finalizer; derives independent seeds from (seed, stream).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace confens

#endif  // CONFENS_RANDOM_HPP
