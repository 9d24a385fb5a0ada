#pragma once

// Closed-form block-discovery model: per-hash success probability, Poisson
// arrival rate, discovery CDF and its binary entropy, fork and catch-up
// probabilities, and hash-rate inference from observed arrivals.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "powtime/units.hpp"

namespace powtime {

// 2^32: hashes per expected block at difficulty 1.
inline constexpr double kHashesPerUnitDifficulty = 4294967296.0;

// Unsigned 256-bit proof-of-work target. limbs[0] is the least significant word.
class Target256 {
 public:
  constexpr Target256() = default;
  constexpr explicit Target256(std::array<std::uint64_t, 4> limbs) : limbs_(limbs) {}

  static Target256 power_of_two(unsigned exponent) {
    detail::require(exponent < 256, "target exponent must be below 256");
    std::array<std::uint64_t, 4> limbs{};
    limbs[exponent / 64] = std::uint64_t{1} << (exponent % 64);
    return Target256(limbs);
  }

  // Big-endian hex, optional 0x prefix, at most 64 digits.
  static Target256 from_hex(std::string_view hex) {
    if (hex.starts_with("0x") || hex.starts_with("0X")) hex.remove_prefix(2);
    detail::require(!hex.empty() && hex.size() <= 64, "target hex must have 1..64 digits");
    std::array<std::uint64_t, 4> limbs{};
    unsigned bit = 0;
    for (auto it = hex.rbegin(); it != hex.rend(); ++it, bit += 4) {
      const char c = *it;
      std::uint64_t nibble = 0;
      if (c >= '0' && c <= '9') {
        nibble = static_cast<std::uint64_t>(c - '0');
      } else if (c >= 'a' && c <= 'f') {
        nibble = static_cast<std::uint64_t>(c - 'a' + 10);
      } else if (c >= 'A' && c <= 'F') {
        nibble = static_cast<std::uint64_t>(c - 'A' + 10);
      } else {
        throw DomainError("target hex contains a non-hex character");
      }
      limbs[bit / 64] |= nibble << (bit % 64);
    }
    return Target256(limbs);
  }

  // Header "nBits" encoding: 3-byte mantissa scaled by 256^(exponent - 3).
  static Target256 from_compact(std::uint32_t bits) {
    const unsigned size = bits >> 24;
    std::uint64_t mantissa = bits & 0x007fffffu;
    detail::require((bits & 0x00800000u) == 0, "negative compact target");
    std::array<std::uint64_t, 4> limbs{};
    if (size <= 3) {
      limbs[0] = mantissa >> (8 * (3 - size));
      return Target256(limbs);
    }
    const unsigned shift = 8 * (size - 3);
    detail::require(mantissa == 0 || shift + std::bit_width(mantissa) <= 256,
                    "compact target overflows 256 bits");
    const unsigned word = shift / 64;
    const unsigned offset = shift % 64;
    if (word < 4) limbs[word] |= mantissa << offset;
    if (offset != 0 && word + 1 < 4) limbs[word + 1] |= mantissa >> (64 - offset);
    return Target256(limbs);
  }

  constexpr const std::array<std::uint64_t, 4>& limbs() const { return limbs_; }
  constexpr bool is_zero() const {
    return (limbs_[0] | limbs_[1] | limbs_[2] | limbs_[3]) == 0;
  }

 private:
  std::array<std::uint64_t, 4> limbs_{};
};

// Reference target for difficulty 1: 0xffff * 2^208 = (65535/65536) * 2^224.
inline Target256 max_target() { return Target256::from_compact(0x1d00ffffu); }

// theta = target / 2^256, accumulated per limb in extended precision.
inline Probability theta_from_target(const Target256& target) {
  detail::require(!target.is_zero(), "target must be positive");
  long double theta = 0.0L;
  for (int i = 3; i >= 0; --i) {
    theta += std::ldexp(static_cast<long double>(target.limbs()[i]), 64 * i - 256);
  }
  return Probability(static_cast<double>(theta));
}

inline Probability theta_from_difficulty(Difficulty d) {
  return Probability(1.0 / (d.value() * kHashesPerUnitDifficulty));
}

inline ArrivalRate arrival_rate(HashRate h, Probability theta) {
  detail::require(theta.value() > 0.0 && theta.value() < 1.0,
                  "per-hash success probability must lie in (0, 1)");
  return ArrivalRate(h.value() * theta.value());
}

// Expected number of hash trials in a window of length t.
inline double expected_trials(HashRate h, Seconds t) { return h.value() * t.value(); }

// Exact Bernoulli-trial form 1 - (1 - theta)^(H t).
inline Probability discovery_probability_exact(Probability theta, HashRate h, Seconds t) {
  const double trials = expected_trials(h, t);
  return Probability(-std::expm1(trials * std::log1p(-theta.value())));
}

// Poisson form 1 - e^(-lambda t).
inline Probability discovery_cdf(ArrivalRate lambda, Seconds t) {
  return Probability(-std::expm1(-lambda.value() * t.value()));
}

// 0 log 0 := 0.
inline EntropyBits bernoulli_entropy(Probability p) {
  const double x = p.value();
  if (x == 0.0 || x == 1.0) return EntropyBits(0.0);
  const double h = -(x * std::log(x) + (1.0 - x) * std::log1p(-x)) / std::numbers::ln2;
  return EntropyBits(std::min(h, 1.0));
}

// Entropy of the discovery event peaks where p(t) = 1/2.
inline Seconds entropy_peak_time(ArrivalRate lambda) {
  return Seconds(std::numbers::ln2 / lambda.value());
}

// Survival function of the exponential inter-block interval.
inline Probability interval_tail_probability(ArrivalRate lambda, Seconds threshold) {
  return Probability(std::exp(-lambda.value() * threshold.value()));
}

// P(two or more arrivals in a window of length tau) = e^-x (e^x - 1 - x), x = lambda tau.
inline Probability fork_probability(ArrivalRate lambda, Seconds tau) {
  const double x = lambda.value() * tau.value();
  if (x == 0.0) return Probability(0.0);
  double excess = 0.0;  // e^x - 1 - x
  if (x < 0.5) {
    double term = x;
    for (int n = 2; n < 40; ++n) {
      term *= x / n;
      excess += term;
      if (term < excess * 1e-18) break;
    }
  } else {
    excess = std::expm1(x) - x;
  }
  if (!std::isfinite(excess)) return Probability(1.0);
  return Probability(std::min(1.0, std::exp(-x) * excess));
}

// Probability that an attacker k blocks behind ever catches up: (q/p)^k, or 1 when q >= p.
inline Probability catchup_probability(AttackerShare share, std::uint64_t k) {
  if (k == 0 || share.q() >= share.p()) return Probability(1.0);
  return Probability(std::pow(share.q() / share.p(), static_cast<double>(k)));
}

// H = lambda * D * 2^32.
inline HashRate infer_hashrate(ArrivalRate lambda, Difficulty d) {
  return HashRate(lambda.value() * d.value() * kHashesPerUnitDifficulty);
}

}  // namespace powtime
