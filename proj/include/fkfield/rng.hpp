#pragma once
// Counter-based random numbers (Philox4x32-10) and reproducible streams.
//
// Every draw is a pure function of (seed, stream, position), so chains
// running on different threads never share generator state and any chain
// can be replayed from its seed alone.

#include <array>
#include <cstdint>
#include <limits>

namespace fkfield {

namespace detail {

constexpr std::uint32_t mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi) {
  const std::uint64_t prod = std::uint64_t{a} * std::uint64_t{b};
  hi = static_cast<std::uint32_t>(prod >> 32);
  return static_cast<std::uint32_t>(prod);
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Philox4x32 with 10 rounds (Salmon et al., Random123).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter block(Counter ctr, Key key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      std::uint32_t hi0 = 0;
      std::uint32_t hi1 = 0;
      const std::uint32_t lo0 = detail::mulhilo32(kMul0, ctr[0], hi0);
      const std::uint32_t lo1 = detail::mulhilo32(kMul1, ctr[2], hi1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

  static constexpr Key key_from(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  }
};

/// Sequential view of the Philox block function for one (seed, stream).
///
/// The counter layout is {block_lo, block_hi, stream_lo, stream_hi}; the key
/// is the 64-bit master seed.
class RandomStream {
 public:
  RandomStream() = default;
  RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t position = 0)
      : seed_(seed), stream_(stream) {
    seek(position);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  /// Number of 32-bit words consumed so far.
  std::uint64_t position() const { return block_ * 4 + used_; }

  void seek(std::uint64_t position) {
    block_ = position / 4;
    refill();
    used_ = static_cast<unsigned>(position % 4);
  }

  std::uint32_t next_u32() {
    if (used_ == 4) {
      ++block_;
      refill();
    }
    return buffer_[used_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n); n must be in [1, 2^32].
  std::uint32_t below(std::uint64_t n) {
    // Lemire's multiply-shift with rejection.
    std::uint64_t m = std::uint64_t{next_u32()} * n;
    auto low = static_cast<std::uint32_t>(m);
    if (low < n) {
      const auto threshold = static_cast<std::uint32_t>((std::uint64_t{1} << 32) % n);
      while (low < threshold) {
        m = std::uint64_t{next_u32()} * n;
        low = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32);
  }

  /// Independent stream derived from this one's (seed, stream) and a tag.
  RandomStream substream(std::uint64_t tag) const {
    return RandomStream(seed_, detail::splitmix64(stream_ ^ detail::splitmix64(tag + 1)));
  }

  friend bool operator==(const RandomStream& a, const RandomStream& b) {
    return a.seed_ == b.seed_ && a.stream_ == b.stream_ && a.position() == b.position();
  }

 private:
  void refill() {
    buffer_ = Philox4x32::block({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                 static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                                Philox4x32::key_from(seed_));
    used_ = 0;
  }

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t block_ = 0;
  unsigned used_ = 0;
  Philox4x32::Counter buffer_{};
};

/// Bernoulli threshold on a 32-bit draw: u < threshold(p) has probability p
/// up to 2^-32 rounding, with p = 0 and p = 1 exact.
inline std::uint64_t bernoulli_threshold(double p) {
  if (!(p > 0.0)) return 0;
  if (p >= 1.0) return std::uint64_t{1} << 32;
  return static_cast<std::uint64_t>(p * 4294967296.0 + 0.5);
}

/// One 32-bit word keyed by an explicit counter, for random-access draws
/// (e.g. the state of an individual site, independent of visiting order).
inline std::uint32_t keyed_u32(std::uint64_t seed, std::uint64_t stream, std::uint32_t a, std::uint32_t b) {
  return Philox4x32::block({a, b, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)},
                           Philox4x32::key_from(seed))[0];
}

}  // namespace fkfield
