// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "specsurg/advantage.hpp"
#include "specsurg/error.hpp"

namespace specsurg::advantage {

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw ValidationError("quantile of an empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Moments moments(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 2) throw ValidationError("moments need at least two samples");
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= static_cast<double>(n);
    // One refinement pass keeps the centering accurate when |mean| >> sd.
    double resid = 0.0;
    for (double x : samples) resid += x - mean;
    mean += resid / static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0;
    for (double x : samples) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    Moments m;
    m.mean = mean;
    m.sd = std::sqrt(m2 / static_cast<double>(n - 1));
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    m.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    return m;
}

Histogram build_histogram(std::span<const double> samples, const EstimatorConfig& cfg) {
    if (samples.empty()) throw ValidationError("histogram of an empty sample");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    const double span = hi - lo;

    Histogram h;
    h.origin = lo;
    h.total = sorted.size();
    std::size_t bins = 0;
    if (span <= 0.0) {
        bins = 1;
        h.width = 1.0;
        h.freedman_diaconis = false;
    } else if (cfg.fixed_bins > 0) {
        bins = cfg.fixed_bins;
        h.width = span / static_cast<double>(bins);
        h.freedman_diaconis = false;
    } else {
        const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
        if (iqr > 0.0) {
            h.width = 2.0 * iqr / std::cbrt(static_cast<double>(sorted.size()));
            const double k = std::ceil(span / h.width);
            bins = static_cast<std::size_t>(std::max(1.0, k));
        } else {
            bins = cfg.fallback_bins;
            h.width = span / static_cast<double>(bins);
            h.freedman_diaconis = false;
        }
        if (bins > cfg.max_bins) {
            bins = cfg.max_bins;
            h.width = span / static_cast<double>(bins);
        }
    }
    h.counts.assign(bins, 0);
    for (double x : sorted) {
        const double pos = (x - lo) / h.width;
        auto i = static_cast<std::size_t>(std::max(0.0, std::floor(pos)));
        h.counts[std::min(i, bins - 1)] += 1;
    }
    return h;
}

double histogram_entropy(const Histogram& h) {
    double H = 0.0;
    const double n = static_cast<double>(h.total);
    for (auto c : h.counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        H -= p * std::log(p / h.width);
    }
    return H;
}

double normal_mass(double a, double b, double mu, double sd) {
    const double za = (a - mu) / (sd * std::numbers::sqrt2);
    const double zb = (b - mu) / (sd * std::numbers::sqrt2);
    // Work in the tail that keeps erfc away from cancellation.
    if (za >= 0.0) return 0.5 * (std::erfc(za) - std::erfc(zb));
    if (zb <= 0.0) return 0.5 * (std::erfc(-zb) - std::erfc(-za));
    return 0.5 * (std::erf(zb) - std::erf(za));
}

double histogram_kl_normal(const Histogram& h, double mu, double sd, KlDirection dir) {
    if (!(sd > 0.0)) throw ValidationError("KL against a normal needs a positive standard deviation");
    constexpr double kFloor = 1e-300;
    const double n = static_cast<double>(h.total);
    double kl = 0.0;
    for (std::size_t i = 0; i < h.bins(); ++i) {
        if (h.counts[i] == 0) continue;
        const double p = static_cast<double>(h.counts[i]) / n;
        const double q = std::max(normal_mass(h.edge(i), h.edge(i + 1), mu, sd), kFloor);
        kl += dir == KlDirection::EmpiricalToNormal ? p * std::log(p / q) : q * std::log(q / p);
    }
    return kl;
}

AdvantageSummary summarize(std::span<const double> samples, const EstimatorConfig& cfg) {
    if (samples.size() < cfg.min_samples) {
        throw ValidationError(
            fmt::format("too few samples: {} (at least {} required)", samples.size(), cfg.min_samples));
    }
    for (double x : samples) {
        if (!std::isfinite(x)) throw ValidationError("advantage samples contain non-finite values");
    }
    const Moments m = moments(samples);
    if (!(m.sd > 0.0)) throw ValidationError("zero variance: all advantage samples are equal");

    AdvantageSummary s;
    s.n = samples.size();
    s.mu = m.mean;
    s.sd = m.sd;
    s.skewness = m.skewness;
    s.config = cfg;
    s.histogram = build_histogram(samples, cfg);
    s.entropy_nats = histogram_entropy(s.histogram);
    s.kl_vs_matched_normal = histogram_kl_normal(s.histogram, m.mean, m.sd, cfg.kl_direction);
    if (cfg.run_silverman) {
        const auto r = silverman_test(samples, cfg.silverman);
        s.silverman_p = r.p_value;
        s.critical_bandwidth = r.critical_bandwidth;
        s.silverman_run = true;
    }
    return s;
}

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
    case Verdict::Trainable: return "Trainable";
    case Verdict::Marginal: return "Marginal";
    case Verdict::NotTrainable: return "NotTrainable";
    }
    return "?";
}

TrainabilityVerdict verdict(const AdvantageSummary& s, const Thresholds& t) {
    TrainabilityVerdict v;
    const double center = s.sd > 0.0 ? std::abs(s.mu) / s.sd : HUGE_VAL;
    v.checks.push_back({"center_ratio", "<=", center, t.max_center_ratio, center <= t.max_center_ratio});
    v.checks.push_back({"entropy_nats", ">", s.entropy_nats, t.min_entropy, s.entropy_nats > t.min_entropy});
    v.checks.push_back({"kl_vs_matched_normal", "<", s.kl_vs_matched_normal, t.max_kl, s.kl_vs_matched_normal < t.max_kl});
    const auto failed = std::count_if(v.checks.begin(), v.checks.end(), [](const auto& c) { return !c.passed; });
    v.verdict = failed == 0 ? Verdict::Trainable : failed == 1 ? Verdict::Marginal : Verdict::NotTrainable;
    return v;
}

Thresholds load_thresholds(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open thresholds file '{}'", path.string()));
    Thresholds t;
    try {
        const auto j = nlohmann::json::parse(in);
        t.max_center_ratio = j.value("max_center_ratio", t.max_center_ratio);
        t.min_entropy = j.value("min_entropy", t.min_entropy);
        t.max_kl = j.value("max_kl", t.max_kl);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("thresholds file '{}': {}", path.string(), e.what()));
    }
    return t;
}

} // namespace specsurg::advantage
