#pragma once

// Estimators that hold simulation output up against the closed forms, plus
// the brute-force catch-up race used as an independent oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "powtime/analytic.hpp"
#include "powtime/csv.hpp"
#include "powtime/rng.hpp"
#include "powtime/simulator.hpp"

namespace powtime {

// Strictly positive inter-discovery times, seconds.
class IntervalSample {
 public:
  IntervalSample() = default;
  explicit IntervalSample(std::vector<double> deltas) : deltas_(std::move(deltas)) {
    for (double d : deltas_) detail::require(d > 0.0 && std::isfinite(d), "interval deltas must be positive");
  }

  std::span<const double> deltas() const { return deltas_; }
  std::size_t size() const { return deltas_.size(); }
  bool empty() const { return deltas_.empty(); }

 private:
  std::vector<double> deltas_;
};

// found_at deltas along the canonical chain for heights in [first_height, last_height].
inline IntervalSample canonical_intervals(const SimTrace& trace, std::uint64_t first_height = 1,
                                          std::uint64_t last_height = std::numeric_limits<std::uint64_t>::max()) {
  std::vector<double> deltas;
  last_height = std::min<std::uint64_t>(last_height, trace.canonical_height());
  for (std::uint64_t h = std::max<std::uint64_t>(first_height, 1); h <= last_height; ++h) {
    deltas.push_back(trace.block(trace.canonical[h]).found_at - trace.block(trace.canonical[h - 1]).found_at);
  }
  return IntervalSample(std::move(deltas));
}

// Maximum-likelihood exponential rate n / sum(deltas).
inline ArrivalRate estimate_lambda(const IntervalSample& sample) {
  detail::require(sample.size() >= 2, "rate estimation needs at least two intervals");
  const auto d = sample.deltas();
  return ArrivalRate(static_cast<double>(d.size()) / std::accumulate(d.begin(), d.end(), 0.0));
}

// One estimate per disjoint window of `window` canonical blocks (heights 1.., full windows only).
inline std::vector<HashRate> hashrate_inference_windows(const SimTrace& trace, std::uint64_t window) {
  detail::require(window >= 2, "hash-rate windows need at least two blocks");
  detail::require(trace.canonical_height() >= window, "canonical chain shorter than one window");
  std::vector<HashRate> out;
  for (std::uint64_t first = 1; first + window - 1 <= trace.canonical_height(); first += window) {
    const std::uint64_t last = first + window - 1;
    double difficulty_sum = 0.0;
    for (std::uint64_t h = first; h <= last; ++h) difficulty_sum += trace.block(trace.canonical[h]).difficulty.value();
    const Difficulty mean_difficulty(difficulty_sum / static_cast<double>(window));
    out.push_back(infer_hashrate(estimate_lambda(canonical_intervals(trace, first, last)), mean_difficulty));
  }
  return out;
}

struct ComparisonReport {
  std::string quantity;
  double analytic = 0.0;
  double empirical = 0.0;
  std::uint64_t n = 0;
  double standard_error = 0.0;
  double z = 0.0;
  bool underpowered = false;  // fewer than 10 expected events: no verdict
  std::string note;

  bool within(double sigmas) const { return !underpowered && std::abs(z) <= sigmas; }
};

namespace detail {

// Binomial comparison of an observed fraction against a reference probability.
// A zero reference uses p = 1/(2n) for the error so it stays positive.
inline ComparisonReport binomial_report(std::string quantity, double reference, std::uint64_t hits,
                                        std::uint64_t n) {
  ComparisonReport r;
  r.quantity = std::move(quantity);
  r.analytic = reference;
  r.n = n;
  if (n == 0) return r;
  const double nn = static_cast<double>(n);
  r.empirical = static_cast<double>(hits) / nn;
  const double p = std::clamp(reference, 0.5 / nn, 1.0 - 0.5 / nn);
  r.standard_error = std::sqrt(p * (1.0 - p) / nn);
  r.z = (r.empirical - reference) / r.standard_error;
  r.underpowered = reference * nn < 10.0;
  return r;
}

}  // namespace detail

// Fork episodes per canonical block against the two-or-more-arrivals probability
// at the initial arrival rate and the largest configured delay.
inline ComparisonReport fork_rate(const SimTrace& trace) {
  const std::uint64_t n = trace.canonical_block_count();
  detail::require(n >= 1, "fork rate needs at least one canonical block");
  const Seconds tau(trace.config.delay.max_delay());
  const double analytic = fork_probability(trace.config.initial_arrival_rate(), tau).value();
  ComparisonReport r = detail::binomial_report("fork_rate", analytic, trace.forks.size(), n);
  if (!trace.config.delay.is_fixed()) r.note = "heterogeneous delays: tau_max gives a conservative bound";
  if (r.underpowered) r.note += (r.note.empty() ? "" : "; ") + std::string("under-powered comparison");
  return r;
}

// Fraction of intervals longer than `threshold` against the exponential survival
// function, at `reference` if given, else at the fitted rate.
inline ComparisonReport tail_frequency(const IntervalSample& sample, Seconds threshold,
                                       std::optional<ArrivalRate> reference = std::nullopt) {
  detail::require(!sample.empty(), "tail frequency needs a nonempty sample");
  const auto d = sample.deltas();
  const ArrivalRate rate =
      reference.value_or(ArrivalRate(static_cast<double>(d.size()) / std::accumulate(d.begin(), d.end(), 0.0)));
  const auto hits = static_cast<std::uint64_t>(
      std::count_if(d.begin(), d.end(), [&](double x) { return x > threshold.value(); }));
  ComparisonReport r = detail::binomial_report("tail_frequency", interval_tail_probability(rate, threshold).value(),
                                               hits, d.size());
  if (r.underpowered) r.note = "under-powered comparison";
  return r;
}

struct ExponentialityReport {
  std::size_t n = 0;
  double lambda_hat = 0.0;
  double ks_distance = 0.0;
  double ks_critical = 0.0;  // 1.63 / sqrt(n), alpha ~ 0.01
  double lag1_autocorrelation = 0.0;
  double autocorrelation_bound = 0.0;  // 3 / sqrt(n)

  bool ks_pass() const { return ks_distance < ks_critical; }
  bool autocorrelation_pass() const { return std::abs(lag1_autocorrelation) < autocorrelation_bound; }
};

// One-sample Kolmogorov-Smirnov distance against exponential(lambda_hat) and
// lag-1 autocorrelation of the deltas. A constant sample reports zero autocorrelation.
inline ExponentialityReport exponentiality_diagnostic(const IntervalSample& sample) {
  detail::require(sample.size() >= 100, "exponentiality diagnostic needs at least 100 intervals");
  ExponentialityReport r;
  r.n = sample.size();
  const double nn = static_cast<double>(r.n);
  r.lambda_hat = estimate_lambda(sample).value();
  r.ks_critical = 1.63 / std::sqrt(nn);
  r.autocorrelation_bound = 3.0 / std::sqrt(nn);

  std::vector<double> sorted(sample.deltas().begin(), sample.deltas().end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = -std::expm1(-r.lambda_hat * sorted[i]);
    r.ks_distance = std::max({r.ks_distance, static_cast<double>(i + 1) / nn - f, f - static_cast<double>(i) / nn});
  }

  const auto d = sample.deltas();
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / nn;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    den += (d[i] - mean) * (d[i] - mean);
    if (i + 1 < d.size()) num += (d[i] - mean) * (d[i + 1] - mean);
  }
  r.lag1_autocorrelation = den > 0.0 ? num / den : 0.0;
  return r;
}

struct EntropyPoint {
  double t = 0.0;
  double p = 0.0;
  double entropy = 0.0;
};

// Grid 0, step, 2*step, ... <= horizon, with the entropy peak time inserted in order.
inline std::vector<EntropyPoint> entropy_trajectory(ArrivalRate lambda, Seconds step, Seconds horizon) {
  detail::require(step.value() > 0.0, "grid step must be positive");
  detail::require(horizon.value() > 0.0, "horizon must be positive");
  std::vector<double> times;
  const auto count = static_cast<std::uint64_t>(std::floor(horizon.value() / step.value() * (1.0 + 1e-12)));
  for (std::uint64_t i = 0; i <= count; ++i) times.push_back(static_cast<double>(i) * step.value());
  const double peak = entropy_peak_time(lambda).value();
  if (peak <= horizon.value()) {
    const auto pos = std::lower_bound(times.begin(), times.end(), peak);
    if (pos == times.end() || *pos != peak) times.insert(pos, peak);
  }
  std::vector<EntropyPoint> out;
  out.reserve(times.size());
  for (double t : times) {
    const Probability p = discovery_cdf(lambda, Seconds(t));
    out.push_back({t, p.value(), bernoulli_entropy(p).value()});
  }
  return out;
}

struct RaceEstimate {
  Probability estimate;
  std::uint64_t successes = 0;
  std::uint64_t trials = 0;
};

// Smallest step cap accepted by race_monte_carlo: ceil(10 k / (1 - 2q)) for q < 1/2.
inline std::uint64_t minimum_race_step_cap(AttackerShare share, std::uint64_t k) {
  if (share.q() >= 0.5) return k;
  return static_cast<std::uint64_t>(std::ceil(10.0 * static_cast<double>(k) / (1.0 - 2.0 * share.q())));
}

inline constexpr std::uint64_t kRaceBatchSize = 1 << 16;

// Attacker deficit starts at k and moves -1 with probability q, +1 otherwise;
// a trial succeeds when the deficit reaches 0. Walks still running after
// step_cap steps, or that fall abandon_deficit behind (0 disables), are failures.
// Batch b draws from mix_seed(seed, b), so the result does not depend on threading.
inline RaceEstimate race_monte_carlo(AttackerShare share, std::uint64_t k, std::uint64_t trials,
                                     std::uint64_t seed, std::uint64_t step_cap,
                                     std::uint64_t abandon_deficit = 0, unsigned threads = 0) {
  detail::require(trials >= 1, "race needs at least one trial");
  if (k == 0) return {Probability(1.0), trials, trials};
  detail::require(step_cap >= minimum_race_step_cap(share, k), "step_cap too small for the attacker share");
  detail::require(abandon_deficit == 0 || abandon_deficit > k, "abandon_deficit must exceed the starting deficit");

  const std::uint64_t threshold = bernoulli_threshold(share.q());
  const std::uint64_t batches = (trials + kRaceBatchSize - 1) / kRaceBatchSize;
  const auto run_batch = [&](std::uint64_t b) {
    Rng rng(mix_seed(seed, b));
    const std::uint64_t first = b * kRaceBatchSize;
    const std::uint64_t count = std::min(kRaceBatchSize, trials - first);
    std::uint64_t wins = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
      std::int64_t deficit = static_cast<std::int64_t>(k);
      const auto ceiling = abandon_deficit == 0 ? std::numeric_limits<std::int64_t>::max()
                                                : static_cast<std::int64_t>(abandon_deficit);
      for (std::uint64_t step = 0; step < step_cap; ++step) {
        deficit += rng.next() < threshold ? -1 : 1;
        if (deficit == 0) {
          ++wins;
          break;
        }
        if (deficit >= ceiling) break;
        // cannot reach zero in the steps left
        if (static_cast<std::uint64_t>(deficit) > step_cap - step - 1) break;
      }
    }
    return wins;
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, batches));
  std::uint64_t wins = 0;
  if (threads <= 1) {
    for (std::uint64_t b = 0; b < batches; ++b) wins += run_batch(b);
  } else {
    std::vector<std::future<std::uint64_t>> parts;
    for (unsigned t = 0; t < threads; ++t) {
      parts.push_back(std::async(std::launch::async, [&, t] {
        std::uint64_t w = 0;
        for (std::uint64_t b = t; b < batches; b += threads) w += run_batch(b);
        return w;
      }));
    }
    for (auto& p : parts) wins += p.get();
  }
  return {Probability(static_cast<double>(wins) / static_cast<double>(trials)), wins, trials};
}

// Deficit ceiling and step cap that keep race truncation bias below `bias`.
struct RaceLimits {
  std::uint64_t step_cap = 0;
  std::uint64_t abandon_deficit = 0;
};

inline RaceLimits default_race_limits(AttackerShare share, std::uint64_t k, double bias = 1e-6) {
  RaceLimits lim;
  if (share.q() == 0.0) {
    // the deficit can only grow
    lim.step_cap = minimum_race_step_cap(share, k);
    lim.abandon_deficit = k + 1;
    return lim;
  }
  if (share.q() >= 0.5) {
    lim.step_cap = std::max<std::uint64_t>(minimum_race_step_cap(share, k), 100000);
    return lim;
  }
  // P(return to zero after reaching deficit c) = (q/p)^c
  const double ratio = share.q() / share.p();
  lim.abandon_deficit = std::max<std::uint64_t>(k + 1, static_cast<std::uint64_t>(std::ceil(std::log(bias) / std::log(ratio))));
  lim.step_cap = std::max(minimum_race_step_cap(share, k),
                          static_cast<std::uint64_t>(std::ceil(20.0 * static_cast<double>(lim.abandon_deficit + k) /
                                                               (1.0 - 2.0 * share.q()))));
  return lim;
}

// Tip-change events by reorg depth; plain extensions (depth 0) are left out.
inline std::map<std::uint64_t, std::uint64_t> reorg_depth_histogram(const SimTrace& trace) {
  std::map<std::uint64_t, std::uint64_t> hist;
  for (const auto& r : trace.tip_changes) {
    if (r.reorg_depth > 0) ++hist[r.reorg_depth];
  }
  return hist;
}

// Each miner's fraction of canonical (non-genesis) blocks.
inline std::vector<double> canonical_miner_shares(const SimTrace& trace) {
  std::vector<double> shares(trace.config.miners.size(), 0.0);
  for (std::size_t h = 1; h < trace.canonical.size(); ++h) {
    shares.at(static_cast<std::size_t>(trace.block(trace.canonical[h]).miner)) += 1.0;
  }
  for (double& s : shares) s /= static_cast<double>(trace.canonical_block_count());
  return shares;
}

inline constexpr const char* kReportsCsvHeader = "quantity,analytic,empirical,n,stderr,z";

inline void write_reports_csv(std::ostream& out, std::span<const ComparisonReport> reports) {
  out << kReportsCsvHeader << '\n';
  for (const auto& r : reports) {
    out << r.quantity << ',' << csv::number(r.analytic) << ',' << csv::number(r.empirical) << ',' << r.n << ','
        << csv::number(r.standard_error) << ',' << csv::number(r.z) << '\n';
  }
}

inline void print_report(std::ostream& out, const ComparisonReport& r) {
  out << r.quantity << ": analytic " << csv::number(r.analytic, 10) << ", empirical " << csv::number(r.empirical, 10)
      << " (n = " << r.n << ", stderr " << csv::number(r.standard_error, 4) << ", z = " << csv::number(r.z, 4) << ")";
  if (!r.note.empty()) out << " [" << r.note << "]";
  out << '\n';
}

}  // namespace powtime
