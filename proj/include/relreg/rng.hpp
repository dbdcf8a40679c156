#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace relreg {

// Purpose tags for independent random streams. Keeping these separate means
// that, for example, changing the projection count never perturbs weight
// initialisation.
enum class StreamId : std::uint64_t {
  data = 1,
  encoder_init = 2,
  decoder_init = 3,
  prior_init = 4,
  noise = 5,
  shuffle = 6,
  projections = 7,
  prior_sample = 8,
  split = 9,
  classifier = 10,
};

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based generator: the n-th output is a pure function of
// (seed, stream, n). Streams are plain values; copying one forks it.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed),
        stream_(stream),
        key_(detail::mix64(seed ^ detail::mix64(stream * detail::kGolden +
                                                0x632BE59BD9B4E019ULL))) {}
  RngStream(std::uint64_t seed, StreamId id)
      : RngStream(seed, static_cast<std::uint64_t>(id)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  // Child stream keyed on this stream's key and a sub-id; independent of how
  // many values were drawn from the parent.
  RngStream split(std::uint64_t sub_id) const {
    return RngStream(key_, sub_id + 1);
  }
  RngStream split(StreamId id) const {
    return split(static_cast<std::uint64_t>(id));
  }

  std::uint64_t next_u64() {
    return detail::mix64(key_ + (++counter_) * detail::kGolden);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  // Uniform integer in [0, n), n >= 1 (Lemire's multiply-and-reject).
  std::uint64_t uniform_index(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace relreg
