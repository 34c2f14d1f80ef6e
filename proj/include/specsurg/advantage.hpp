// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace specsurg::advantage {

// ---------------------------------------------------------------------------
// GAE and the clipped PPO surrogate

struct TrajectoryTrace {
    std::vector<double> rewards; // r_0 .. r_{T-1}
    std::vector<double> values;  // V(s_0) .. V(s_T)
};

struct GaeParams {
    double gamma = 1.0;
    double lambda = 0.95;
};

/// A_t = delta_t + gamma * lambda * A_{t+1}, A_T = 0, with
/// delta_t = r_t + gamma V(s_{t+1}) - V(s_t).
std::vector<double> gae(const TrajectoryTrace& trace, const GaeParams& p);

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)
double ppo_objective(double ratio, double advantage, double epsilon);

// ---------------------------------------------------------------------------
// Distribution statistics

enum class KlDirection {
    EmpiricalToNormal, // sum p log(p / q)
    NormalToEmpirical, // sum q log(q / p) over bins with p > 0
};

struct SilvermanConfig {
    std::size_t mode_budget = 1;
    std::size_t bootstrap = 500;
    std::uint64_t seed = 7;
    std::size_t grid_points = 512;
    double relative_tolerance = 1e-3;
    std::size_t min_samples = 50;
    std::size_t min_bootstrap = 100;
    /// Worker threads for bootstrap replicates; 0 = hardware concurrency.
    std::size_t threads = 1;
};

struct EstimatorConfig {
    std::size_t min_samples = 200;
    /// 0 selects Freedman-Diaconis bin width; otherwise a fixed bin count.
    std::size_t fixed_bins = 0;
    std::size_t fallback_bins = 64; // used when the IQR is zero
    std::size_t max_bins = 100000;
    KlDirection kl_direction = KlDirection::EmpiricalToNormal;
    bool run_silverman = true;
    SilvermanConfig silverman;
};

struct Histogram {
    double origin = 0.0;
    double width = 0.0;
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;
    bool freedman_diaconis = true;

    double edge(std::size_t i) const noexcept { return origin + static_cast<double>(i) * width; }
    std::size_t bins() const noexcept { return counts.size(); }
};

Histogram build_histogram(std::span<const double> samples, const EstimatorConfig& cfg);

/// -sum p_i log(p_i / w), nats.
double histogram_entropy(const Histogram& h);

/// Probability mass of N(mu, sd^2) on [a, b).
double normal_mass(double a, double b, double mu, double sd);

double histogram_kl_normal(const Histogram& h, double mu, double sd, KlDirection dir);

struct Moments {
    double mean = 0.0;
    double sd = 0.0;       // sample standard deviation (n - 1)
    double skewness = 0.0; // m3 / m2^{3/2}, biased moments
};

Moments moments(std::span<const double> samples);

/// Linear-interpolation quantile of sorted data, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

// ---------------------------------------------------------------------------
// Silverman multimodality test

/// Number of strict local maxima of a sampled curve. Flat runs are skipped,
/// so a plateau between a rise and a fall counts once.
std::size_t count_modes(std::span<const double> curve);

/// Modes of the Gaussian KDE of `samples` at bandwidth h, on `grid_points`
/// evenly spaced points spanning [min - 3h, max + 3h].
std::size_t kde_modes(std::span<const double> samples, double h, std::size_t grid_points);

struct SilvermanResult {
    double p_value = 1.0;
    double critical_bandwidth = 0.0; // in the units of the input samples
    std::size_t exceed = 0;          // replicates with more than mode_budget modes
    std::size_t replicates = 0;
};

/// Samples are standardized first, so the result is invariant to affine
/// transforms of the input. Replicate b draws from a generator seeded with
/// derive_seed(seed, b).
SilvermanResult silverman_test(std::span<const double> samples, const SilvermanConfig& cfg);

// ---------------------------------------------------------------------------
// Summary and verdict

struct AdvantageSummary {
    std::size_t n = 0;
    double mu = 0.0;
    double sd = 0.0;
    double skewness = 0.0;
    double entropy_nats = 0.0;
    double kl_vs_matched_normal = 0.0;
    double silverman_p = 1.0;
    double critical_bandwidth = 0.0;
    bool silverman_run = false;
    Histogram histogram;
    EstimatorConfig config;
};

AdvantageSummary summarize(std::span<const double> samples, const EstimatorConfig& cfg = {});

struct Thresholds {
    double max_center_ratio = 0.5; // |mu| / sd
    double min_entropy = 2.55;     // nats, strict
    double max_kl = 0.16;          // strict
};

Thresholds load_thresholds(const std::filesystem::path& path);

enum class Verdict { Trainable, Marginal, NotTrainable };
std::string_view to_string(Verdict v) noexcept;

struct ThresholdCheck {
    std::string name;
    std::string comparison; // e.g. "<=", ">"
    double value = 0.0;
    double threshold = 0.0;
    bool passed = false;
};

struct TrainabilityVerdict {
    Verdict verdict = Verdict::Trainable;
    std::vector<ThresholdCheck> checks;
};

/// All checks pass: Trainable; exactly one fails: Marginal; otherwise NotTrainable.
TrainabilityVerdict verdict(const AdvantageSummary& s, const Thresholds& t = {});

// ---------------------------------------------------------------------------
// Rollout logs: one JSON object per line, either {"advantage": x} or
// {"trace_id": id, "t": step, "reward": r, "value": v}. A trace ends with a
// record carrying only "value" (the bootstrap value V(s_T)); without it the
// terminal value is taken as 0.

struct RolloutLog {
    std::vector<double> advantages;
    std::map<std::string, TrajectoryTrace> traces;

    bool has_traces() const noexcept { return !traces.empty(); }
};

RolloutLog read_rollouts(const std::filesystem::path& path);

/// Direct advantages, or GAE recomputed over every trace (concatenated in trace id order).
std::vector<double> advantage_samples(const RolloutLog& log, const GaeParams& p);

} // namespace specsurg::advantage
