#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

#include <Eigen/Core>

namespace ampe {

// Philox4x32-10 counter-based generator. Streams are cheap to derive and
// mutually independent, which is what makes batch generation reproducible
// under any parallel schedule: every (seed, tag, index...) tuple names a
// fixed sequence of draws.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
        stream_(stream) {
    reset_counter();
  }

  // Derives an independent stream; the draw position starts at zero.
  Rng fork(uint64_t label) const {
    return Rng(key_to_seed(), mix64(stream_, label));
  }
  Rng fork(std::string_view tag) const { return fork(fnv1a64(tag)); }

  uint32_t next_u32() {
    if (buf_pos_ == 4) refill();
    return buf_[buf_pos_++];
  }

  uint64_t next_u64() {
    uint64_t lo = next_u32();
    uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    // Box-Muller; u1 in (0,1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vec(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Eigen::MatrixXd normal_mat(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  static uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  static uint64_t mix64(uint64_t a, uint64_t b) {
    // splitmix64 finalizer over the combined words.
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  void reset_counter() {
    ctr_ = {0, 0, static_cast<uint32_t>(stream_),
            static_cast<uint32_t>(stream_ >> 32)};
    buf_pos_ = 4;
    have_cached_ = false;
    cached_ = 0.0;
  }

  uint64_t key_to_seed() const {
    return (static_cast<uint64_t>(key_[1]) << 32) | key_[0];
  }

  void refill() {
    std::array<uint32_t, 4> c = ctr_;
    uint32_t k0 = key_[0], k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      uint64_t p0 = 0xD2511F53ull * c[0];
      uint64_t p1 = 0xCD9E8D57ull * c[2];
      std::array<uint32_t, 4> n;
      n[0] = static_cast<uint32_t>(p1 >> 32) ^ c[1] ^ k0;
      n[1] = static_cast<uint32_t>(p1);
      n[2] = static_cast<uint32_t>(p0 >> 32) ^ c[3] ^ k1;
      n[3] = static_cast<uint32_t>(p0);
      c = n;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    buf_ = c;
    buf_pos_ = 0;
    if (++ctr_[0] == 0) ++ctr_[1];
  }

  std::array<uint32_t, 2> key_;
  uint64_t stream_;
  std::array<uint32_t, 4> ctr_;
  std::array<uint32_t, 4> buf_;
  int buf_pos_ = 4;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace ampe
