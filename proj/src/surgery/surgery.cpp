// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include "specsurg/surgery.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/core.h>

#include "specsurg/error.hpp"

namespace specsurg::surgery {
namespace {

using spectral::SvdTriple;

// Columns `ranks` of `m` as a new matrix.
Matrix take_columns(const Matrix& m, const std::vector<std::size_t>& ranks) {
    Matrix out(m.rows(), ranks.size());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t c = 0; c < ranks.size(); ++c) out(i, c) = m(i, ranks[c]);
    }
    return out;
}

void scale_columns(Matrix& m, const std::vector<double>& s) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t c = 0; c < s.size(); ++c) m(i, c) *= s[c];
    }
}

struct Selected {
    store::MatrixKey key;
    std::string tensor;
};

struct Prepared {
    store::Checkpoint host;
    store::Checkpoint donor;
    std::vector<Selected> selected;
    std::vector<std::string> untouched; // every other tensor, by name
};

Prepared prepare(const SurgeryPlan& plan) {
    Prepared p{store::open_checkpoint(plan.host), store::open_checkpoint(plan.donor), {}, {}};
    const auto resolution = store::resolve_keys(p.host, plan.profile);

    std::set<std::uint32_t> layers;
    for (const auto& r : resolution.matched) layers.insert(r.key.layer);
    const auto chosen_layers = plan.selection.layers.resolve(layers);

    std::set<std::string> chosen_names;
    for (const auto& r : resolution.matched) {
        if (!chosen_layers.contains(r.key.layer) || !plan.selection.kinds.contains(r.key.kind)) continue;
        if (!p.donor.contains(r.tensor)) {
            throw ValidationError(fmt::format("donor '{}' has no tensor '{}'", plan.donor.string(), r.tensor));
        }
        const auto& hi = p.host.info(r.tensor);
        const auto& di = p.donor.info(r.tensor);
        if (hi.shape != di.shape) {
            throw ValidationError(fmt::format("'{}' has different shapes in host and donor", r.tensor));
        }
        p.selected.push_back({r.key, r.tensor});
        chosen_names.insert(r.tensor);
    }
    for (const auto& [name, _] : p.host.index()) {
        if (!chosen_names.contains(name)) p.untouched.push_back(name);
    }
    return p;
}

} // namespace

std::size_t SurgeryReport::edited_count() const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const auto& r) { return r.status == "edited"; }));
}

Matrix mixed_matrix(const Matrix& host, const SvdTriple& host_t, const SvdTriple& donor_t, Mode mode,
                    const std::vector<std::size_t>& ranks, Alignment align) {
    if (host_t.rows() != donor_t.rows() || host_t.cols() != donor_t.cols() || host.rows() != host_t.rows() ||
        host.cols() != host_t.cols()) {
        throw ValidationError(fmt::format("mixed_matrix: shape mismatch between host {}x{} and donor {}x{}",
                                          host_t.rows(), host_t.cols(), donor_t.rows(), donor_t.cols()));
    }
    for (std::size_t i : ranks) {
        if (i >= host_t.rank()) {
            throw ValidationError(fmt::format("mixed_matrix: rank index {} outside [0, {})", i, host_t.rank()));
        }
    }
    if (ranks.empty()) return host;

    const std::size_t k = ranks.size();
    std::vector<double> host_sigma(k), donor_sigma(k);
    for (std::size_t c = 0; c < k; ++c) {
        host_sigma[c] = host_t.sigma[ranks[c]];
        donor_sigma[c] = donor_t.sigma[ranks[c]];
    }
    const Matrix uh = take_columns(host_t.u, ranks);
    const Matrix vh = take_columns(host_t.v, ranks);

    Matrix out = host;
    if (mode == Mode::Values) {
        // W + U_S diag(sigma_donor - sigma_host) V_S^T
        std::vector<double> diff(k);
        for (std::size_t c = 0; c < k; ++c) diff[c] = donor_sigma[c] - host_sigma[c];
        Matrix us = uh;
        scale_columns(us, diff);
        out += matmul_nt(us, vh);
        return out;
    }

    Matrix ud = take_columns(donor_t.u, ranks);
    Matrix vd = take_columns(donor_t.v, ranks);
    if (align == Alignment::Procrustes) {
        ud = matmul(ud, spectral::procrustes(ud, uh));
        vd = matmul(vd, spectral::procrustes(vd, vh));
    }
    // W + U'_S diag(sigma_host) V'_S^T - U_S diag(sigma_host) V_S^T
    scale_columns(ud, host_sigma);
    Matrix us = uh;
    scale_columns(us, host_sigma);
    out += matmul_nt(ud, vd);
    out -= matmul_nt(us, vh);
    return out;
}

std::vector<std::size_t> degenerate_boundaries(const std::vector<double>& sigma, const std::vector<std::size_t>& ranks) {
    std::vector<std::size_t> flagged;
    if (sigma.size() < 2 || ranks.empty()) return flagged;
    std::vector<bool> in(sigma.size(), false);
    for (auto i : ranks) {
        if (i < in.size()) in[i] = true;
    }
    const double threshold = spectral::Tolerances::kBoundaryGap * sigma.front();
    for (std::size_t i = 0; i + 1 < sigma.size(); ++i) {
        if (in[i] != in[i + 1] && sigma[i] - sigma[i + 1] < threshold) flagged.push_back(i);
    }
    return flagged;
}

void validate_plan(const SurgeryPlan& plan) { (void)prepare(plan); }

SurgeryReport run_surgery(const SurgeryPlan& plan, const std::filesystem::path& out) {
    const Prepared p = prepare(plan);

    SurgeryReport report;
    report.plan = plan;
    report.output = out;
    std::map<std::string, Matrix> edits;
    for (const auto& sel : p.selected) {
        const Matrix host = store::load_matrix(p.host, sel.tensor);
        const Matrix donor = store::load_matrix(p.donor, sel.tensor);
        const auto host_t = spectral::svd(host);
        const auto donor_t = spectral::svd(donor);
        const auto ranks = plan.selection.ranks.resolve(host_t.rank());
        Matrix mixed = mixed_matrix(host, host_t, donor_t, plan.mode, ranks, plan.align);

        MatrixRecord rec;
        rec.tensor = sel.tensor;
        rec.key = sel.key.label();
        rec.status = "edited";
        rec.ranks_touched = ranks.size();
        rec.frob_vs_host = frobenius_distance(mixed, host);
        rec.frob_vs_donor = frobenius_distance(mixed, donor);
        rec.max_entry_change = max_abs_difference(mixed, host);
        rec.degenerate_host = degenerate_boundaries(host_t.sigma, ranks);
        rec.degenerate_donor = degenerate_boundaries(donor_t.sigma, ranks);
        report.records.push_back(std::move(rec));
        edits.emplace(sel.tensor, std::move(mixed));
    }

    const auto written = store::write_checkpoint(p.host, edits, out, plan.write);
    std::map<std::string, double> rounding;
    for (const auto& t : written.tensors) rounding[t.name] = t.max_rounding_error;
    for (auto& rec : report.records) rec.max_rounding_error = rounding[rec.tensor];

    const auto resolution = store::resolve_keys(p.host, plan.profile);
    std::map<std::string, std::string> labels;
    for (const auto& r : resolution.matched) labels[r.tensor] = r.key.label();
    for (const auto& name : p.untouched) {
        MatrixRecord rec;
        rec.tensor = name;
        if (auto it = labels.find(name); it != labels.end()) rec.key = it->second;
        rec.status = "copied";
        report.records.push_back(std::move(rec));
    }
    return report;
}

} // namespace specsurg::surgery
