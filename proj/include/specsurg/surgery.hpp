// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "specsurg/spectral.hpp"
#include "specsurg/tensor_store.hpp"

namespace specsurg::surgery {

/// Values: keep the host's singular vectors, take selected singular values from the donor.
/// Vectors: keep the host's singular values, take selected singular vector pairs from the donor.
enum class Mode { Values, Vectors };

std::string_view to_string(Mode m) noexcept;
Mode parse_mode(std::string_view s);

struct LayerSelection {
    enum class Type { All, First, Last, List };
    Type type = Type::All;
    std::size_t count = 0;              // First/Last
    std::vector<std::uint32_t> indices; // List

    /// "all", "first:K", "last:K", "list:0,3,7"
    static LayerSelection parse(std::string_view text);
    std::string to_string() const;

    /// Selected layers out of `layers` (the layers present in a checkpoint).
    std::set<std::uint32_t> resolve(const std::set<std::uint32_t>& layers) const;
};

struct RankSelection {
    enum class Type { All, Top, Bottom, Range };
    Type type = Type::All;
    std::size_t count = 0; // Top/Bottom
    std::size_t first = 0; // Range, half-open
    std::size_t last = 0;

    /// "all", "top:K", "bottom:K", "range:A:B" (indices A..B-1)
    static RankSelection parse(std::string_view text);
    std::string to_string() const;

    /// Ascending rank indices clamped to [0, rank).
    std::vector<std::size_t> resolve(std::size_t rank) const;
};

std::set<store::Kind> default_kinds();
/// Comma-separated kind names ("Q,K,V,MlpUp") or "all".
std::set<store::Kind> parse_kinds(std::string_view text);
std::string kinds_to_string(const std::set<store::Kind>& kinds);

struct SelectionSpec {
    LayerSelection layers;
    RankSelection ranks;
    std::set<store::Kind> kinds = default_kinds();
};

enum class Alignment { None, Procrustes };
Alignment parse_alignment(std::string_view s);

/// Splices donor spectra or directions into the host at the given ranks.
/// An empty rank set returns the host unchanged. The update is applied as
/// W_host + sum over selected i of (new triplet - host triplet), which equals
/// U' diag(sigma') V'^T exactly in real arithmetic. Mixed column sets are not
/// re-orthogonalized.
Matrix mixed_matrix(const Matrix& host, const spectral::SvdTriple& host_t, const spectral::SvdTriple& donor_t,
                    Mode mode, const std::vector<std::size_t>& ranks, Alignment align = Alignment::None);

/// Rank boundaries of `ranks` where sigma_i - sigma_{i+1} < kBoundaryGap * sigma_1.
std::vector<std::size_t> degenerate_boundaries(const std::vector<double>& sigma, const std::vector<std::size_t>& ranks);

struct SurgeryPlan {
    Mode mode = Mode::Values;
    std::filesystem::path donor;
    std::filesystem::path host;
    SelectionSpec selection;
    store::NamingProfile profile;
    Alignment align = Alignment::None;
    store::WriteOptions write;
};

struct MatrixRecord {
    std::string tensor;
    std::string key; // empty for tensors the profile does not map
    std::string status; // "edited" or "copied"
    std::size_t ranks_touched = 0;
    double frob_vs_host = 0.0;
    double frob_vs_donor = 0.0;
    double max_entry_change = 0.0;
    double max_rounding_error = 0.0;
    std::vector<std::size_t> degenerate_host;  // flagged boundaries in the host spectrum
    std::vector<std::size_t> degenerate_donor; // and in the donor spectrum
};

struct SurgeryReport {
    SurgeryPlan plan;
    std::filesystem::path output;
    std::vector<MatrixRecord> records; // selected matrices in key order, then copied tensors by name
    std::size_t edited_count() const;
};

/// Checks that the plan can run: both files open, keys resolve, selected
/// shapes agree. Throws ValidationError otherwise. Writes nothing.
void validate_plan(const SurgeryPlan& plan);

SurgeryReport run_surgery(const SurgeryPlan& plan, const std::filesystem::path& out);

} // namespace specsurg::surgery
