#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fpdfp/rng.hpp"
#include "fpdfp/vec.hpp"

namespace fpdfp {

/* Unbiased stochastic low-precision encoder for uplink messages.
 *
 * A vector is sent as its l2 norm plus one of s+1 levels per coordinate:
 * with r_i = |x_i| / ||x|| and l = floor(s r_i), the level is l+1 with
 * probability s r_i - l and l otherwise, so the decoded value
 * ||x|| sign(x_i) level/s matches x_i in expectation and the variance obeys
 * the min(d/s^2, sqrt(d)/s) ||x||^2 envelope. Bit accounting charges 32 bits
 * for the norm, one sign bit plus an Elias-gamma code per nonzero level, and
 * one Elias-gamma code per maximal run of zero levels (run length + 1, so a
 * run token never collides with gamma(1)).
 */

struct QuantizedVector {
  double norm = 0.0;                 // exact l2 norm of the source vector
  std::uint32_t s = 1;               // number of positive levels
  std::vector<std::int8_t> sign;     // -1, 0, +1; canonically 0 when level == 0
  std::vector<std::uint32_t> level;  // each in [0, s]

  std::size_t dim() const { return level.size(); }
};

inline QuantizedVector quantize(const Vec& x, std::uint32_t s, Rng& rng) {
  require(s >= 1, "quantize: s must be >= 1");
  QuantizedVector q;
  q.s = s;
  q.norm = nrm2(x);
  q.sign.assign(x.size(), 0);
  q.level.assign(x.size(), 0);
  if (q.norm == 0.0) return q;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = s * (std::fabs(x[i]) / q.norm);
    std::uint32_t lvl;
    if (t >= static_cast<double>(s)) {
      lvl = s;  // r_i == 1 up to roundoff
    } else {
      const double fl = std::floor(t);
      lvl = static_cast<std::uint32_t>(fl) + (rng.uniform() < t - fl ? 1u : 0u);
    }
    q.level[i] = lvl;
    q.sign[i] = lvl == 0 ? std::int8_t{0} : (x[i] < 0 ? std::int8_t{-1} : std::int8_t{1});
  }
  return q;
}

inline Vec dequantize(const QuantizedVector& q) {
  Vec x(q.dim());
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = q.norm * static_cast<double>(q.sign[i]) * (static_cast<double>(q.level[i]) / q.s);
  return x;
}

// Codeword length of the Elias gamma code: 2 floor(log2 k) + 1, k >= 1.
inline std::size_t elias_gamma_length(std::uint64_t k) {
  require(k >= 1, "elias_gamma_length: k must be >= 1");
  return 2 * (std::bit_width(k) - 1) + 1;
}

inline std::size_t encoded_bits(const QuantizedVector& q) {
  std::size_t bits = 32;  // norm as one binary32 scalar
  std::size_t i = 0;
  const std::size_t d = q.dim();
  while (i < d) {
    if (q.level[i] == 0) {
      std::size_t run = 0;
      while (i < d && q.level[i] == 0) ++run, ++i;
      bits += elias_gamma_length(run + 1);
    } else {
      bits += 1 + elias_gamma_length(q.level[i]);
      ++i;
    }
  }
  return bits;
}

// Worst-case second moment of the quantization error for a vector with the
// given squared norm (the standard envelope for this encoder).
inline double quantizer_variance_bound(std::size_t d, std::uint32_t s, double norm_sq) {
  const double dd = static_cast<double>(d), ss = static_cast<double>(s);
  return std::min(dd / (ss * ss), std::sqrt(dd) / ss) * norm_sq;
}

/* Serialized image: exactly the cost-model bits, zero-padded to a byte
 * boundary. MSB-first within each byte; norm as binary32; then, scanning the
 * coordinates once, gamma(run+1) per maximal zero run and sign bit (0 for
 * positive, 1 for negative) + gamma(level) per nonzero. Decoding needs dim
 * and s carried out of band, as the fixed-size container metadata.
 */
struct BitSink {
  std::vector<std::uint8_t> bytes;
  std::size_t bits = 0;

  void push_bit(bool b) {
    if (bits % 8 == 0) bytes.push_back(0);
    if (b) bytes.back() |= static_cast<std::uint8_t>(0x80u >> (bits % 8));
    ++bits;
  }
  void push_word(std::uint64_t w, std::size_t n) {  // MSB-first
    for (std::size_t i = n; i-- > 0;) push_bit((w >> i) & 1u);
  }
  void push_gamma(std::uint64_t k) {
    const std::size_t n = std::bit_width(k) - 1;
    for (std::size_t i = 0; i < n; ++i) push_bit(false);
    push_word(k, n + 1);
  }
};

inline BitSink serialize(const QuantizedVector& q) {
  BitSink sink;
  sink.push_word(std::bit_cast<std::uint32_t>(static_cast<float>(q.norm)), 32);
  std::size_t i = 0;
  const std::size_t d = q.dim();
  while (i < d) {
    if (q.level[i] == 0) {
      std::size_t run = 0;
      while (i < d && q.level[i] == 0) ++run, ++i;
      sink.push_gamma(run + 1);
    } else {
      sink.push_bit(q.sign[i] < 0);
      sink.push_gamma(q.level[i]);
      ++i;
    }
  }
  return sink;
}

// Block form: consecutive chunks of block_size (0 = one block spanning the
// vector; the final chunk may be ragged), each quantized with its own norm.
struct BlockQuantized {
  std::size_t block_size = 0;
  std::vector<QuantizedVector> blocks;

  std::size_t dim() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.dim();
    return n;
  }
};

inline BlockQuantized quantize_blocks(const Vec& x, std::uint32_t s, std::size_t block_size,
                                      Rng& rng) {
  BlockQuantized out;
  out.block_size = block_size;
  const std::size_t bs = block_size == 0 ? x.size() : block_size;
  require(bs > 0 || x.empty(), "quantize_blocks: empty vector with zero block size");
  for (std::size_t off = 0; off < x.size(); off += bs) {
    const std::size_t len = std::min(bs, x.size() - off);
    Vec chunk(x.begin() + off, x.begin() + off + len);
    out.blocks.push_back(quantize(chunk, s, rng));
  }
  return out;
}

inline Vec dequantize_blocks(const BlockQuantized& q) {
  Vec x;
  x.reserve(q.dim());
  for (const auto& b : q.blocks) {
    const Vec part = dequantize(b);
    x.insert(x.end(), part.begin(), part.end());
  }
  return x;
}

inline std::size_t encoded_bits(const BlockQuantized& q) {
  std::size_t bits = 0;
  for (const auto& b : q.blocks) bits += encoded_bits(b);
  return bits;
}

struct MomentStats {
  Vec mean_error;          // per-coordinate mean of Q(x) - x over trials
  Vec mean_sq_error_coord; // per-coordinate mean of (Q(x) - x)^2
  double mean_sq_error = 0.0;  // mean of ||Q(x) - x||^2
};

inline MomentStats empirical_moments(const Vec& x, std::uint32_t s, std::size_t trials,
                                     std::uint64_t seed) {
  require(trials >= 1, "empirical_moments: trials must be >= 1");
  MomentStats st;
  st.mean_error.assign(x.size(), 0.0);
  st.mean_sq_error_coord.assign(x.size(), 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(Rng::key(seed, t, 0x9));
    const QuantizedVector q = quantize(x, s, rng);
    const Vec y = dequantize(q);
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - x[i];
      st.mean_error[i] += e;
      st.mean_sq_error_coord[i] += e * e;
      sq += e * e;
    }
    st.mean_sq_error += sq;
  }
  const double inv = 1.0 / static_cast<double>(trials);
  scale(st.mean_error, inv);
  scale(st.mean_sq_error_coord, inv);
  st.mean_sq_error *= inv;
  return st;
}

}  // namespace fpdfp
