// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

// Silverman's bootstrap test for multimodality.
//
// The critical bandwidth h_crit is the smallest Gaussian-kernel bandwidth at
// which the KDE has at most `mode_budget` modes. Replicates are drawn from the
// KDE at h_crit with the variance-preserving rescale (1 + h^2/s^2)^(-1/2); the
// p-value is the fraction whose KDE at h_crit still shows more modes.

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include <fmt/core.h>

#include "specsurg/advantage.hpp"
#include "specsurg/error.hpp"
#include "specsurg/kernels.hpp"
#include "specsurg/rng.hpp"

namespace specsurg::advantage {

std::size_t count_modes(std::span<const double> curve) {
    std::size_t modes = 0;
    int trend = 0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        const double d = curve[i] - curve[i - 1];
        if (d == 0.0) continue;
        const int dir = d > 0.0 ? 1 : -1;
        if (trend > 0 && dir < 0) ++modes;
        trend = dir;
    }
    return modes;
}

std::size_t kde_modes(std::span<const double> samples, double h, std::size_t grid_points) {
    if (samples.empty() || !(h > 0.0) || grid_points < 3) {
        throw ValidationError("kde_modes needs samples, a positive bandwidth and at least 3 grid points");
    }
    const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
    const double lo = *lo_it - 3.0 * h;
    const double hi = *hi_it + 3.0 * h;
    std::vector<double> grid(grid_points);
    const double step = (hi - lo) / static_cast<double>(grid_points - 1);
    for (std::size_t i = 0; i < grid_points; ++i) grid[i] = lo + step * static_cast<double>(i);
    std::vector<double> density(grid_points);
    kernels::active().gauss_kde(samples.data(), samples.size(), grid.data(), grid_points, 1.0 / h, density.data());
    return count_modes(density);
}

namespace {

double critical_bandwidth(std::span<const double> z, const SilvermanConfig& cfg) {
    const auto modes = [&](double h) { return kde_modes(z, h, cfg.grid_points); };
    // z is standardized, so a bandwidth of 1 is a natural starting point.
    double hi = 1.0;
    for (int i = 0; modes(hi) > cfg.mode_budget; ++i) {
        if (i == 64) throw NumericalError("Silverman: no bandwidth yields a KDE within the mode budget");
        hi *= 2.0;
    }
    double lo = hi;
    for (int i = 0; modes(lo) <= cfg.mode_budget; ++i) {
        if (i == 64) return lo; // within budget at every bandwidth tried
        hi = lo;
        lo *= 0.5;
    }
    while (hi - lo > cfg.relative_tolerance * hi) {
        const double mid = 0.5 * (lo + hi);
        if (modes(mid) <= cfg.mode_budget) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

} // namespace

SilvermanResult silverman_test(std::span<const double> samples, const SilvermanConfig& cfg) {
    const std::size_t n = samples.size();
    if (n < cfg.min_samples) {
        throw ValidationError(fmt::format("Silverman test: too few samples ({} < {})", n, cfg.min_samples));
    }
    if (cfg.bootstrap < cfg.min_bootstrap) {
        throw ValidationError(
            fmt::format("Silverman test: bootstrap count {} below the minimum {}", cfg.bootstrap, cfg.min_bootstrap));
    }
    double mean = 0.0;
    for (double x : samples) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : samples) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (!(sd > 0.0) || !std::isfinite(sd)) throw ValidationError("Silverman test: zero variance");

    // Reflect to non-negative third moment so that x -> a x + b with a < 0
    // draws the same replicates as a > 0.
    double m3 = 0.0;
    for (double x : samples) m3 += std::pow((x - mean) / sd, 3);
    const double orient = m3 < 0.0 ? -1.0 : 1.0;
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = orient * (samples[i] - mean) / sd;
    double zmean = 0.0;
    for (double v : z) zmean += v;
    zmean /= static_cast<double>(n);
    double zvar = 0.0;
    for (double v : z) zvar += (v - zmean) * (v - zmean);
    zvar /= static_cast<double>(n);

    const double h = critical_bandwidth(z, cfg);
    const double shrink = 1.0 / std::sqrt(1.0 + h * h / zvar);

    std::vector<unsigned char> exceeded(cfg.bootstrap, 0);
    const auto run_range = [&](std::size_t begin, std::size_t end) {
        std::vector<double> y(n);
        for (std::size_t b = begin; b < end; ++b) {
            std::mt19937_64 gen(derive_seed(cfg.seed, b));
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            std::normal_distribution<double> noise(0.0, 1.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double base = z[pick(gen)];
                y[i] = zmean + (base - zmean + h * noise(gen)) * shrink;
            }
            exceeded[b] = kde_modes(y, h, cfg.grid_points) > cfg.mode_budget ? 1 : 0;
        }
    };

    std::size_t workers = cfg.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.threads;
    workers = std::min(workers, cfg.bootstrap);
    if (workers <= 1) {
        run_range(0, cfg.bootstrap);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t chunk = (cfg.bootstrap + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(cfg.bootstrap, begin + chunk);
            if (begin < end) pool.emplace_back(run_range, begin, end);
        }
    }

    SilvermanResult r;
    r.critical_bandwidth = h * sd;
    r.replicates = cfg.bootstrap;
    r.exceed = static_cast<std::size_t>(std::count(exceeded.begin(), exceeded.end(), 1));
    r.p_value = static_cast<double>(r.exceed) / static_cast<double>(cfg.bootstrap);
    return r;
}

} // namespace specsurg::advantage
