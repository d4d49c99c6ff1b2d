#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "lssm/common.hpp"

namespace lssm {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace detail

/// Counter-style splittable Gaussian stream: xoshiro256++ seeded via SplitMix64,
/// with one 2^128 jump per stream index. Streams with distinct indices derived
/// from the same master seed are statistically independent; the same
/// (seed, index) pair reproduces the identical sequence bit for bit.
class RngStream {
public:
    RngStream() : RngStream(0, 0) {}

    RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
        : stream_index_(stream_index) {
        std::uint64_t x = master_seed;
        for (auto& s : state_) s = detail::splitmix64(x);
        for (std::uint64_t i = 0; i < stream_index; ++i) jump();
    }

    std::uint64_t stream_index() const { return stream_index_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl64(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl64(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; two uniforms per pair, second value cached.
    double next_gaussian() {
        if (have_cache_) {
            have_cache_ = false;
            return cache_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double radius = std::sqrt(-2.0 * std::log1p(-u1)); // 1-u1 in (0,1]
        const double angle = 2.0 * M_PI * u2;
        cache_ = radius * std::sin(angle);
        have_cache_ = true;
        return radius * std::cos(angle);
    }

    /// Opaque state blob for checkpointing. Layout: algorithm id byte,
    /// 4 x u64 state, u64 stream index, cache flag byte, cached double.
    std::vector<std::uint8_t> serialize() const {
        std::vector<std::uint8_t> out(1 + 32 + 8 + 1 + 8);
        std::size_t off = 0;
        out[off++] = kAlgorithmId;
        for (const auto s : state_) {
            std::memcpy(out.data() + off, &s, 8);
            off += 8;
        }
        std::memcpy(out.data() + off, &stream_index_, 8);
        off += 8;
        out[off++] = have_cache_ ? 1 : 0;
        std::memcpy(out.data() + off, &cache_, 8);
        return out;
    }

    static RngStream deserialize(const std::uint8_t* data, std::size_t len) {
        RngStream r;
        if (len != 1 + 32 + 8 + 1 + 8 || data[0] != kAlgorithmId)
            throw IoError("rng state blob: bad length or algorithm id");
        std::size_t off = 1;
        for (auto& s : r.state_) {
            std::memcpy(&s, data + off, 8);
            off += 8;
        }
        std::memcpy(&r.stream_index_, data + off, 8);
        off += 8;
        r.have_cache_ = data[off++] != 0;
        std::memcpy(&r.cache_, data + off, 8);
        return r;
    }

    bool operator==(const RngStream& o) const {
        return state_ == o.state_ && stream_index_ == o.stream_index_ &&
               have_cache_ == o.have_cache_ &&
               (!have_cache_ || cache_ == o.cache_);
    }

private:
    static constexpr std::uint8_t kAlgorithmId = 0x58; // 'X' xoshiro256++

    /// Advance by 2^128 draws (xoshiro256++ jump polynomial).
    void jump() {
        static constexpr std::uint64_t kJump[4] = {
            0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL,
            0xa9582618e03fc9aaULL, 0x39abdc4529b1661cULL};
        std::array<std::uint64_t, 4> acc{0, 0, 0, 0};
        for (const auto j : kJump) {
            for (int b = 0; b < 64; ++b) {
                if (j & (1ULL << b)) {
                    for (int i = 0; i < 4; ++i) acc[i] ^= state_[i];
                }
                next_u64();
            }
        }
        state_ = acc;
        have_cache_ = false;
    }

    std::array<std::uint64_t, 4> state_{};
    std::uint64_t stream_index_ = 0;
    bool have_cache_ = false;
    double cache_ = 0.0;
};

} // namespace lssm
