#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>

#include <cmath>

namespace sfde {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// A pure function of (counter, key): any block can be produced without
// generating the ones before it.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter block(Counter ctr, Key key) {
        std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
        std::uint32_t k0 = key[0], k1 = key[1];
#pragma GCC unroll 10
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = std::uint64_t(kM0) * c0;
            const std::uint64_t p1 = std::uint64_t(kM1) * c2;
            const std::uint32_t n0 = std::uint32_t(p1 >> 32) ^ c1 ^ k0;
            const std::uint32_t n2 = std::uint32_t(p0 >> 32) ^ c3 ^ k1;
            c1 = std::uint32_t(p1);
            c3 = std::uint32_t(p0);
            c0 = n0;
            c2 = n2;
            k0 += kW0;
            k1 += kW1;
        }
        return {c0, c1, c2, c3};
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

// 128-layer ziggurat for the standard normal (Marsaglia & Tsang 2000, in the
// double-precision layout of Doornik 2005). The fast path needs one 64-bit word:
// bits 0-6 pick the layer, bits 11-63 give a signed uniform in (-1, 1).
class Ziggurat {
public:
    static const Ziggurat& instance() {
        static const Ziggurat z;
        return z;
    }

    // `more()` supplies extra 64-bit words for the rare slow path.
    template <class More>
    double operator()(std::uint64_t word, More&& more) const {
        double x;
        if (try_fast(word, x)) return x;
        return slow(word, more);
    }

    // Fast path: true and the sample in `out` if `word` lands inside its layer.
    bool try_fast(std::uint64_t word, double& out) const {
        const int layer = int(word & 0x7F);
        const double u = double(std::int64_t(word) >> 11) * 0x1.0p-52;  // [-1, 1)
        out = u * x_[layer];
        return std::abs(u) < ratio_[layer];
    }

    // Continues after try_fast(word) failed.
    template <class More>
    double slow(std::uint64_t word, More&& more) const {
        for (;;) {
            const int layer = int(word & 0x7F);
            const double u = double(std::int64_t(word) >> 11) * 0x1.0p-52;
            if (layer == 0) return tail(u < 0.0, more);
            const double x = u * x_[layer];
            const double f0 = std::exp(-0.5 * (x_[layer] * x_[layer] - x * x));
            const double f1 = std::exp(-0.5 * (x_[layer + 1] * x_[layer + 1] - x * x));
            if (f1 + uniform(more()) * (f0 - f1) < 1.0) return x;
            word = more();
            double fast;
            if (try_fast(word, fast)) return fast;
        }
    }

private:
    static constexpr int kLayers = 128;
    static constexpr double kR = 3.442619855899;
    static constexpr double kV = 9.91256303526217e-3;

    Ziggurat() {
        const auto f = [](double t) { return std::exp(-0.5 * t * t); };
        x_[0] = kV / f(kR);
        x_[1] = kR;
        x_[kLayers] = 0.0;
        for (int i = 2; i < kLayers; ++i) x_[i] = std::sqrt(-2.0 * std::log(kV / x_[i - 1] + f(x_[i - 1])));
        for (int i = 0; i < kLayers; ++i) ratio_[i] = x_[i + 1] / x_[i];
    }

    // Uniform in (0, 1) from the top 53 bits.
    static double uniform(std::uint64_t w) { return (double(w >> 11) + 0.5) * 0x1.0p-53; }

    template <class More>
    static double tail(bool negative, More&& more) {
        double x, y;
        do {
            x = std::log(uniform(more())) / kR;
            y = std::log(uniform(more()));
        } while (-2.0 * y < x * x);
        return negative ? x - kR : kR - x;
    }

    double x_[kLayers + 1];
    double ratio_[kLayers];
};

// Standard normal draws indexed by (seed, stream, path, index), with
// index = step * n_assets + asset. Every draw is a pure function of that tuple,
// so results do not depend on how paths are scheduled.
//
// Draw `index` starts from 64-bit word `index` of the path's primary sequence
// (Philox counter (index / 2, 0, path_lo, path_hi), two words per block). The
// ziggurat slow path (about 1% of draws) takes further words from an overflow
// sequence keyed by the same index.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint32_t stream, std::uint64_t path)
        : key_{std::uint32_t(seed) ^ (stream * 0x9E3779B9u), std::uint32_t(seed >> 32) ^ (stream * 0x85EBCA6Bu)},
          path_lo_(std::uint32_t(path)),
          path_hi_(std::uint32_t(path >> 32)),
          zig_(&Ziggurat::instance()) {}

    static constexpr std::uint64_t kMaxIndex = std::uint64_t(1) << 32;

    double operator()(std::uint64_t index) const {
        const auto blk = Philox4x32::block({std::uint32_t(index >> 1), 0, path_lo_, path_hi_}, key_);
        return draw(index, word(blk, index & 1));
    }

    // out[j] = (*this)(first + j); blocks are generated back to back so the
    // independent Philox evaluations overlap in the pipeline.
    void fill(std::uint64_t first, double* out, std::size_t count) const {
        std::uint64_t words[kChunk + 2];
        while (count > 0) {
            const std::size_t len = count < kChunk ? count : kChunk;
            const std::uint64_t b0 = first >> 1;
            const std::uint64_t b1 = (first + len - 1) >> 1;
            for (std::uint64_t b = b0; b <= b1; ++b) {
                const auto c = Philox4x32::block({std::uint32_t(b), 0, path_lo_, path_hi_}, key_);
                words[2 * (b - b0)] = word(c, 0);
                words[2 * (b - b0) + 1] = word(c, 1);
            }
            const std::uint64_t* w = words + (first & 1);
            bool fast[kChunk];
            for (std::size_t j = 0; j < len; ++j) fast[j] = zig_->try_fast(w[j], out[j]);
            for (std::size_t j = 0; j < len; ++j)
                if (!fast[j]) out[j] = slow_draw(first + j, w[j]);
            first += len;
            out += len;
            count -= len;
        }
    }

    static constexpr std::size_t kChunk = 64;

private:
    static std::uint64_t word(const Philox4x32::Counter& c, std::uint64_t half) {
        return half ? (std::uint64_t(c[3]) << 32 | c[2]) : (std::uint64_t(c[1]) << 32 | c[0]);
    }

    double draw(std::uint64_t index, std::uint64_t primary) const {
        double x;
        if (zig_->try_fast(primary, x)) return x;
        return slow_draw(index, primary);
    }

    double slow_draw(std::uint64_t index, std::uint64_t primary) const {
        std::uint32_t used = 0;
        Philox4x32::Counter buf{};
        auto more = [&]() {
            const std::uint32_t k = used++;
            if (k % 2 == 0)
                buf = Philox4x32::block({0x80000000u | (k / 2), std::uint32_t(index), path_lo_, path_hi_}, key_);
            return word(buf, k % 2);
        };
        return zig_->slow(primary, more);
    }

    Philox4x32::Key key_;
    std::uint32_t path_lo_;
    std::uint32_t path_hi_;
    const Ziggurat* zig_;
};

}  // namespace sfde
