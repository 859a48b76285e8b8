#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace fedsim {

/// Labels for independently derived random streams. Tuples
/// (master_seed, round, client, purpose) map to disjoint streams, so the
/// draw order of one consumer can never perturb another.
enum class Purpose : std::uint64_t {
    model_init = 1,
    data_synth = 2,
    task_split = 3,
    partition = 4,
    schedule = 5,
    task_assign = 6,
    batch_order = 7,
    straggler = 8,
};

namespace detail {

// SplitMix64 finalizer (Vigna). Bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t x) {
    return mix64(h ^ (x + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
}

}  // namespace detail

/// Counter-based generator: state advances by a per-stream odd increment and
/// each output is the SplitMix64 mix of the counter. Cloning an Rng clones
/// the whole sequence position; two Rng values never share hidden state.
class Rng {
  public:
    Rng(std::uint64_t state, std::uint64_t stream_id)
        : state_(state), stream_id_(stream_id | 1ULL) {}

    std::uint64_t next_u64() {
        state_ += stream_id_;
        return detail::mix64(state_);
    }

    /// Uniform double in [0, 1), 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in (0, 1]; safe as a log() argument.
    double next_double_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Unbiased uniform integer in [0, n). n must be nonzero.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::next_below: n == 0");
        const std::uint64_t rem = (UINT64_MAX % n + 1) % n;
        const std::uint64_t limit = UINT64_MAX - rem;
        std::uint64_t x = next_u64();
        while (x > limit) x = next_u64();
        return x % n;
    }

    /// Standard normal via Box-Muller (cosine branch; two uniforms per draw,
    /// no cached spare, so copies of an Rng stay in lockstep).
    double next_gaussian() {
        const double u1 = next_double_pos();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 boosted through
    /// Gamma(shape + 1) * U^(1/shape).
    double next_gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("Rng::next_gamma: shape <= 0");
        if (shape < 1.0) {
            const double u = next_double_pos();
            return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = next_gaussian();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = next_double_pos();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t state() const { return state_; }
    std::uint64_t stream_id() const { return stream_id_; }

  private:
    std::uint64_t state_;
    std::uint64_t stream_id_;
};

/// Derives the stream for a (round, client, purpose) tuple from the master
/// seed. Pure integer mixing: identical inputs give identical streams on any
/// platform, and distinct tuples give distinct streams up to 64-bit hashing.
inline Rng derive_stream(std::uint64_t master_seed, std::uint64_t round,
                         std::uint64_t client_id, Purpose purpose) {
    using detail::hash_combine;
    std::uint64_t h = detail::mix64(master_seed ^ 0x5851F42D4C957F2DULL);
    h = hash_combine(h, round);
    h = hash_combine(h, client_id);
    h = hash_combine(h, static_cast<std::uint64_t>(purpose));
    const std::uint64_t state = hash_combine(h, 0x14057B7EF767814FULL);
    const std::uint64_t stream = hash_combine(h, 0xD1342543DE82EF95ULL);
    return Rng(state, stream);
}

}  // namespace fedsim
