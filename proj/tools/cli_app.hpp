#pragma once

// powtime command-line front end. Kept in a header so tests can drive it
// in-process.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "powtime/powtime.hpp"

namespace powtime::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

inline std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("POWTIME_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return ".";
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct AnalyticArgs {
  std::string formula;
  std::optional<std::string> target;
  std::optional<std::string> compact;
  std::optional<double> difficulty, hashrate, theta, lambda, t, p, threshold, tau, q;
  std::optional<std::uint64_t> k;
  std::string format = "text";
};

inline double need(const std::optional<double>& v, const char* flag) {
  if (!v) throw DomainError(std::string("missing required flag ") + flag);
  return *v;
}

inline double evaluate_analytic(const AnalyticArgs& a, std::string& note) {
  const auto& f = a.formula;
  if (f == "theta-target") {
    if (a.target) return theta_from_target(Target256::from_hex(*a.target)).value();
    if (a.compact) return theta_from_target(Target256::from_compact(static_cast<std::uint32_t>(std::stoul(*a.compact, nullptr, 16)))).value();
    return theta_from_target(max_target()).value();
  }
  if (f == "theta") return theta_from_difficulty(Difficulty(need(a.difficulty, "--difficulty"))).value();
  if (f == "rate") {
    const double theta = a.theta ? *a.theta : theta_from_difficulty(Difficulty(need(a.difficulty, "--difficulty or --theta"))).value();
    return arrival_rate(HashRate(need(a.hashrate, "--hashrate")), Probability(theta)).value();
  }
  if (f == "trials") return expected_trials(HashRate(need(a.hashrate, "--hashrate")), Seconds(need(a.t, "--t")));
  if (f == "cdf") return discovery_cdf(ArrivalRate(need(a.lambda, "--lambda")), Seconds(need(a.t, "--t"))).value();
  if (f == "entropy") {
    if (a.p) return bernoulli_entropy(Probability(*a.p)).value();
    return bernoulli_entropy(discovery_cdf(ArrivalRate(need(a.lambda, "--lambda or --p")), Seconds(need(a.t, "--t")))).value();
  }
  if (f == "entropy-peak") return entropy_peak_time(ArrivalRate(need(a.lambda, "--lambda"))).value();
  if (f == "tail") {
    return interval_tail_probability(ArrivalRate(need(a.lambda, "--lambda")), Seconds(need(a.threshold, "--threshold"))).value();
  }
  if (f == "fork") return fork_probability(ArrivalRate(need(a.lambda, "--lambda")), Seconds(need(a.tau, "--tau"))).value();
  if (f == "catchup") {
    if (!a.k) throw DomainError("missing required flag --k");
    const AttackerShare share(need(a.q, "--q"));
    if (share.q() >= share.p()) note = "q >= p: attacker catches up with certainty";
    return catchup_probability(share, *a.k).value();
  }
  if (f == "hashrate") {
    return infer_hashrate(ArrivalRate(need(a.lambda, "--lambda")), Difficulty(need(a.difficulty, "--difficulty"))).value();
  }
  throw DomainError("unknown formula \"" + f + "\"");
}

inline void emit_summary(std::ostream& out, const SimTrace& trace, const std::string& label) {
  out << "seed: " << trace.config.seed << '\n';
  out << label << '\n';
  out << "canonical blocks: " << trace.canonical_block_count() << '\n';
  out << "blocks created: " << trace.blocks.size() - 1 << '\n';
  out << "fork episodes: " << trace.forks.size() << '\n';
  out << "max reorg depth: " << trace.max_reorg_depth() << '\n';
  out << "final difficulty: " << csv::number(trace.block(trace.canonical.back()).difficulty.value(), 10) << '\n';
  out << "timestamp rejections: " << trace.rejections.size() << '\n';
  out << "clock warnings: " << trace.warnings.size() << '\n';
  out << "converged: " << (trace.converged() ? "yes" : "no") << '\n';
}

inline std::vector<ComparisonReport> trace_reports(const SimTrace& trace) {
  std::vector<ComparisonReport> reports{fork_rate(trace)};
  const IntervalSample sample = canonical_intervals(trace);
  if (!sample.empty()) {
    reports.push_back(tail_frequency(sample, Seconds(6360.0), trace.config.initial_arrival_rate()));
  }
  return reports;
}

inline nlohmann::json reports_json(const std::vector<ComparisonReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"quantity", r.quantity}, {"analytic", r.analytic}, {"empirical", r.empirical},
                   {"n", r.n}, {"stderr", r.standard_error}, {"z", r.z}});
  }
  return arr;
}

inline void write_run_outputs(const SimTrace& trace, const std::filesystem::path& dir, const std::string& format,
                              const std::string& config_text) {
  const auto reports = trace_reports(trace);
  if (format == "json") {
    write_file(dir / "trace.json", trace_json(trace).dump(1) + "\n");
    write_file(dir / "reports.json", reports_json(reports).dump(1) + "\n");
  } else {
    write_trace_csv(trace, dir);
    std::ostringstream rep;
    write_reports_csv(rep, reports);
    write_file(dir / "reports.csv", rep.str());
  }
  std::ostringstream info;
  info << "key,value\nseed," << trace.config.seed << "\nformat," << format << '\n';
  write_file(dir / "run_info.csv", info.str());
  write_file(dir / "config.json", config_text + "\n");
}

// Built-in hash-rate step scenario: one miner, difficulty feedback on, hash
// rate doubled once the first epoch closes.
inline SimConfig retarget_demo_config() {
  SimConfig c;
  c.miners = {MinerSpec{"solo", 1.0}};
  c.retarget_enabled = true;
  c.hashrate_schedule = {{2016, 2.0}};
  c.stop = StopAtBlocks{3 * 2016};
  c.seed = 2016;
  return c;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"powtime: proof-of-work block timing simulator and analytic toolkit"};
  app.require_subcommand(1);

  AnalyticArgs an;
  auto* analytic = app.add_subcommand("analytic", "Evaluate a closed-form formula");
  analytic->add_option("formula", an.formula,
                       "theta-target | theta | rate | trials | cdf | entropy | entropy-peak | tail | fork | catchup | hashrate")
      ->required();
  analytic->add_option("--target", an.target, "256-bit target, hex");
  analytic->add_option("--compact", an.compact, "compact nBits target, hex");
  analytic->add_option("--difficulty", an.difficulty);
  analytic->add_option("--hashrate", an.hashrate, "hashes per second");
  analytic->add_option("--theta", an.theta, "per-hash success probability");
  analytic->add_option("--lambda", an.lambda, "blocks per second");
  analytic->add_option("--t", an.t, "seconds");
  analytic->add_option("--p", an.p, "probability");
  analytic->add_option("--threshold", an.threshold, "seconds");
  analytic->add_option("--tau", an.tau, "propagation delay, seconds");
  analytic->add_option("--q", an.q, "attacker share");
  analytic->add_option("--k", an.k, "blocks behind");
  analytic->add_option("--format", an.format)->check(CLI::IsMember({"text", "csv", "json"}));

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::string out_dir = default_out_dir().string();
  std::string format = "csv";
  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write trace files");
  simulate->add_option("--config", config_path, "scenario JSON")->required();
  simulate->add_option("--seed", seed_override, "override the config seed");
  simulate->add_option("--out", out_dir, "output directory (default $POWTIME_OUT_DIR or .)");
  simulate->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  double race_q = 0.0;
  std::uint64_t race_k = 0;
  std::uint64_t race_trials = 1000000;
  std::uint64_t race_seed = 1;
  std::optional<std::uint64_t> race_cap;
  std::string race_format = "text";
  auto* race = app.add_subcommand("race", "Monte Carlo catch-up race against the closed form");
  race->add_option("--q", race_q, "attacker share")->required();
  race->add_option("--k", race_k, "blocks behind")->required();
  race->add_option("--trials", race_trials);
  race->add_option("--seed", race_seed);
  race->add_option("--step-cap", race_cap, "steps before a walk counts as failure");
  race->add_option("--format", race_format)->check(CLI::IsMember({"text", "csv", "json"}));

  double ent_lambda = 1.0 / 600.0;
  double ent_step = 1.0;
  double ent_horizon = 3600.0;
  auto* entropy = app.add_subcommand("entropy", "Write the discovery entropy curve");
  entropy->add_option("--lambda", ent_lambda, "blocks per second (default 1/600)");
  entropy->add_option("--step", ent_step, "grid step, seconds");
  entropy->add_option("--horizon", ent_horizon, "seconds");
  entropy->add_option("--out", out_dir, "output directory (default $POWTIME_OUT_DIR or .)");
  entropy->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  std::string demo_config;
  auto* demo = app.add_subcommand("retarget-demo", "Show difficulty feedback after a hash-rate step");
  demo->add_option("--config", demo_config, "scenario JSON (default: built-in doubling scenario)");
  demo->add_option("--seed", seed_override);
  demo->add_option("--out", out_dir, "output directory (default $POWTIME_OUT_DIR or .)");
  demo->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*analytic) {
      std::string note;
      const double value = evaluate_analytic(an, note);
      if (an.format == "json") {
        nlohmann::json j{{"formula", an.formula}, {"value", value}};
        if (!note.empty()) j["note"] = note;
        out << j.dump() << '\n';
      } else if (an.format == "csv") {
        out << "formula,value\n" << an.formula << ',' << csv::number(value) << '\n';
      } else {
        out << csv::number(value, 12) << '\n';
        if (!note.empty()) out << "note: " << note << '\n';
      }
      return kOk;
    }

    if (*simulate || *demo) {
      SimConfig config;
      std::string label;
      if (*simulate || !demo_config.empty()) {
        const std::string& path = *simulate ? config_path : demo_config;
        config = load_sim_config(path);
        label = "config: " + path;
      } else {
        config = retarget_demo_config();
        label = "config: built-in retarget demo";
      }
      if (seed_override) config.seed = *seed_override;
      SimTrace trace;
      try {
        trace = run(config);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        err << "runtime error: " << e.what() << '\n';
        return kRuntime;
      }
      write_run_outputs(trace, out_dir, format, to_json(config).dump(1));
      emit_summary(out, trace, label);
      if (*simulate) {
        for (const auto& r : trace_reports(trace)) print_report(out, r);
      } else {
        const auto interval = config.rules.retarget_interval;
        for (const auto& d : trace.difficulty) {
          out << "height " << d.height << ": difficulty " << csv::number(d.difficulty, 6);
          const std::uint64_t first = d.height == 0 ? 1 : d.height;
          const std::uint64_t last = first + interval - 1;
          if (last <= trace.canonical_height()) {
            const IntervalSample s = canonical_intervals(trace, first, last);
            out << ", mean interval " << csv::number(1.0 / estimate_lambda(s).value(), 6) << " s";
          }
          out << '\n';
        }
      }
      out << "wrote: " << out_dir << '\n';
      return kOk;
    }

    if (*race) {
      const AttackerShare share(race_q);
      RaceLimits lim = default_race_limits(share, race_k);
      if (race_cap) lim.step_cap = *race_cap;
      const RaceEstimate est = race_monte_carlo(share, race_k, race_trials, race_seed, lim.step_cap, lim.abandon_deficit);
      const double closed = catchup_probability(share, race_k).value();
      const double f = std::clamp(closed, 0.5 / static_cast<double>(race_trials), 1.0 - 0.5 / static_cast<double>(race_trials));
      const double se = std::sqrt(f * (1.0 - f) / static_cast<double>(race_trials));
      const double z = (est.estimate.value() - closed) / se;
      const bool certain = share.q() >= share.p();
      if (race_format == "json") {
        nlohmann::json j{{"q", race_q}, {"k", race_k}, {"trials", race_trials}, {"seed", race_seed},
                         {"step_cap", lim.step_cap}, {"estimate", est.estimate.value()}, {"analytic", closed},
                         {"stderr", se}, {"z", z}};
        if (certain) j["note"] = "q >= p";
        out << j.dump() << '\n';
      } else if (race_format == "csv") {
        out << "seed,q,k,trials,step_cap,estimate,analytic,stderr,z\n"
            << race_seed << ',' << csv::number(race_q) << ',' << race_k << ',' << race_trials << ',' << lim.step_cap
            << ',' << csv::number(est.estimate.value()) << ',' << csv::number(closed) << ',' << csv::number(se) << ','
            << csv::number(z) << '\n';
      } else {
        out << "seed: " << race_seed << '\n'
            << "estimate: " << csv::number(est.estimate.value(), 10) << " (" << est.successes << "/" << est.trials
            << ", step cap " << lim.step_cap << ")\n"
            << "analytic: " << csv::number(closed, 10) << '\n'
            << "z: " << csv::number(z, 4) << '\n';
        if (certain) out << "note: q >= p, the closed form is the gambler's-ruin limit 1\n";
      }
      return kOk;
    }

    if (*entropy) {
      const auto curve = entropy_trajectory(ArrivalRate(ent_lambda), Seconds(ent_step), Seconds(ent_horizon));
      Table t{"entropy", {"t", "p", "entropy"}, {}};
      for (const auto& pt : curve) t.rows.push_back({pt.t, pt.p, pt.entropy});
      const std::filesystem::path dir(out_dir);
      if (format == "json") {
        write_file(dir / "entropy.json", table_json(t).dump(1) + "\n");
      } else {
        std::ostringstream s;
        write_csv(s, t);
        write_file(dir / "entropy.csv", s.str());
      }
      out << "peak: t = " << csv::number(entropy_peak_time(ArrivalRate(ent_lambda)).value(), 10) << " s, H = 1\n"
          << "rows: " << curve.size() << '\n'
          << "wrote: " << out_dir << '\n';
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    err << "invalid parameter: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "invalid parameter: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace powtime::cli
