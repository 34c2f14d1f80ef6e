// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Command layer shared by the `specsurg` executable and the manifest runner.
// Each command validates everything it needs before creating any output.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "specsurg/advantage.hpp"
#include "specsurg/surgery.hpp"

namespace specsurg::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kNumerical = 3, kIo = 4 };

struct CommonOptions {
    bool stamp = false;          // add a generation timestamp to JSON reports
    bool emit_plot_data = false; // extra long-format CSVs for plotting
};

struct PairSelection {
    std::filesystem::path a;
    std::filesystem::path b;
    std::string profile = "llama-style";
    std::string layers = "all";
    std::string kinds = "all";
};

struct SvdDiffParams {
    PairSelection pair;
    std::filesystem::path out;
};

struct AnglesParams {
    PairSelection pair;
    std::vector<std::string> ranks{"all"}; // one output per entry
    std::string side = "both";             // left, right or both
    std::filesystem::path out;
};

struct RestoreParams {
    std::string mode = "values";
    std::filesystem::path donor;
    std::filesystem::path host;
    std::string profile = "llama-style";
    std::vector<std::string> layers{"all"};
    std::vector<std::string> ranks{"all"};
    std::string kinds = "Q,K,V,MlpUp,MlpGate,MlpDown";
    std::string align = "none";
    bool force_f32 = false;
    std::filesystem::path out;
};

struct AdvStatsParams {
    std::filesystem::path input;
    std::string bins = "fd"; // "fd" or a bin count
    std::size_t bootstrap = 500;
    std::uint64_t seed = 7;
    std::size_t modes = 1;
    std::string thresholds = "default"; // or a JSON file
    std::string kl_direction = "empirical"; // or "normal"
    std::size_t min_samples = 200;
    double gamma = 1.0;
    double lambda = 0.95;
    std::string granularity = "unspecified"; // token, step or unspecified
    std::size_t threads = 1;
    std::optional<std::filesystem::path> out; // stdout summary when absent
};

struct PenaltyParams {
    std::filesystem::path ref;
    std::filesystem::path current;
    std::vector<std::size_t> ranks{512};
    std::string profile = "llama-style";
    std::string layers = "all";
    std::string kinds = "all";
    std::optional<std::filesystem::path> out; // stdout CSV when absent
};

int run_svd_diff(const SvdDiffParams& p, const CommonOptions& o, std::ostream& out);
int run_angles(const AnglesParams& p, const CommonOptions& o, std::ostream& out);
int run_restore(const RestoreParams& p, const CommonOptions& o, std::ostream& out);
int run_adv_stats(const AdvStatsParams& p, const CommonOptions& o, std::ostream& out);
int run_penalty(const PenaltyParams& p, const CommonOptions& o, std::ostream& out);

/// Runs a JSON manifest; relative paths resolve against the manifest's directory.
int run_manifest(const std::filesystem::path& manifest, const CommonOptions& o, std::ostream& out);

/// Expands one brace group: "first:{5,10}" -> {"first:5", "first:10"}.
std::vector<std::string> expand_braces(const std::string& text);

/// Filesystem-safe token for a selection string ("top:64" -> "top64").
std::string slug(const std::string& text);

/// Full command line entry point. Errors go to `err` and map to ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace specsurg::cli
