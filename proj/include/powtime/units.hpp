#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace powtime {

// Thrown whenever a quantity falls outside the domain of the formula it feeds.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

}  // namespace detail

// Probability in [0, 1].
class Probability {
 public:
  constexpr Probability() = default;
  explicit Probability(double v) : value_(v) {
    detail::require(v >= 0.0 && v <= 1.0, "probability must lie in [0, 1]");
  }
  constexpr double value() const { return value_; }
  friend constexpr auto operator<=>(Probability, Probability) = default;

 private:
  double value_ = 0.0;
};

// Difficulty as a multiple of the minimum difficulty (D = 1 at the reference target).
class Difficulty {
 public:
  explicit Difficulty(double v) : value_(v) {
    detail::require(v > 0.0 && std::isfinite(v), "difficulty must be positive");
  }
  constexpr double value() const { return value_; }
  friend constexpr auto operator<=>(Difficulty, Difficulty) = default;

 private:
  double value_;
};

// Hashes per second.
class HashRate {
 public:
  explicit HashRate(double v) : value_(v) {
    detail::require(v > 0.0 && std::isfinite(v), "hash rate must be positive");
  }
  constexpr double value() const { return value_; }
  friend constexpr auto operator<=>(HashRate, HashRate) = default;

 private:
  double value_;
};

// Blocks per second.
class ArrivalRate {
 public:
  explicit ArrivalRate(double v) : value_(v) {
    detail::require(v > 0.0 && std::isfinite(v), "arrival rate must be positive");
  }
  constexpr double value() const { return value_; }
  friend constexpr auto operator<=>(ArrivalRate, ArrivalRate) = default;

 private:
  double value_;
};

class Seconds {
 public:
  constexpr Seconds() = default;
  explicit Seconds(double v) : value_(v) {
    detail::require(v >= 0.0 && !std::isnan(v), "duration must be nonnegative");
  }
  constexpr double value() const { return value_; }
  friend constexpr auto operator<=>(Seconds, Seconds) = default;

 private:
  double value_ = 0.0;
};

// Bernoulli entropy, bounded by one bit.
class EntropyBits {
 public:
  explicit EntropyBits(double v) : value_(v) {
    detail::require(v >= 0.0 && v <= 1.0, "binary entropy must lie in [0, 1] bits");
  }
  constexpr double value() const { return value_; }

 private:
  double value_;
};

// Attacker hash-rate fraction q; the honest remainder is p = 1 - q.
class AttackerShare {
 public:
  explicit AttackerShare(double q) : q_(q) {
    detail::require(q >= 0.0 && q < 1.0, "attacker share must lie in [0, 1)");
  }
  constexpr double q() const { return q_; }
  constexpr double p() const { return 1.0 - q_; }

 private:
  double q_;
};

}  // namespace powtime
