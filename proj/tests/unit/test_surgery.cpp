// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <doctest.h>

#include "fixtures.hpp"
#include "specsurg/error.hpp"
#include "specsurg/surgery.hpp"

using namespace specsurg;
using namespace specsurg::surgery;
using namespace specsurg::testing;
using store::Kind;

namespace {

// U diag(s) V^T written out entry by entry.
Matrix product(const Matrix& u, const std::vector<double>& s, const Matrix& v) {
    Matrix w(u.rows(), v.rows());
    for (std::size_t i = 0; i < u.rows(); ++i) {
        for (std::size_t j = 0; j < v.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < s.size(); ++k) acc += u(i, k) * s[k] * v(j, k);
            w(i, j) = acc;
        }
    }
    return w;
}

Matrix splice_columns(const Matrix& base, const Matrix& donor, const std::vector<std::size_t>& ranks) {
    Matrix out = base;
    for (std::size_t c : ranks) {
        for (std::size_t i = 0; i < out.rows(); ++i) out(i, c) = donor(i, c);
    }
    return out;
}

struct Pair {
    Matrix host, donor;
    spectral::SvdTriple ht, dt;
};

Pair make_pair(std::size_t m, std::size_t n, std::uint64_t seed) {
    const auto r = std::min(m, n);
    Pair p;
    p.host = with_spectrum(m, n, separated_spectrum(r, 4.0, 0.5), seed);
    p.donor = with_spectrum(m, n, separated_spectrum(r, 5.0, 0.7), seed + 17);
    p.ht = spectral::svd(p.host);
    p.dt = spectral::svd(p.donor);
    return p;
}

SurgeryPlan plan_for(const std::filesystem::path& donor, const std::filesystem::path& host, Mode mode,
                     const std::string& layers = "all", const std::string& ranks = "all") {
    SurgeryPlan plan;
    plan.mode = mode;
    plan.donor = donor;
    plan.host = host;
    plan.profile = store::builtin_profile("llama-style");
    plan.selection.layers = LayerSelection::parse(layers);
    plan.selection.ranks = RankSelection::parse(ranks);
    return plan;
}

} // namespace

TEST_CASE("layer selection grammar") {
    const std::set<std::uint32_t> layers{0, 1, 2, 3, 4, 5};
    CHECK(LayerSelection::parse("all").resolve(layers) == layers);
    CHECK(LayerSelection::parse("first:2").resolve(layers) == std::set<std::uint32_t>{0, 1});
    CHECK(LayerSelection::parse("last:2").resolve(layers) == std::set<std::uint32_t>{4, 5});
    CHECK(LayerSelection::parse("first:99").resolve(layers) == layers);
    CHECK(LayerSelection::parse("list:5,0,3").resolve(layers) == std::set<std::uint32_t>{0, 3, 5});
    CHECK(LayerSelection::parse("list:1,9").resolve(layers) == std::set<std::uint32_t>{1});
    CHECK(LayerSelection::parse("first:3").to_string() == "first:3");
    for (const char* bad : {"", "first", "first:", "first:x", "first:-1", "some:3", "list:", "list:1,,2", "last:2:3"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(LayerSelection::parse(bad), ValidationError);
    }
}

TEST_CASE("rank selection grammar") {
    CHECK(RankSelection::parse("all").resolve(4) == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(RankSelection::parse("top:2").resolve(4) == std::vector<std::size_t>{0, 1});
    CHECK(RankSelection::parse("top:512").resolve(3) == std::vector<std::size_t>{0, 1, 2});
    CHECK(RankSelection::parse("bottom:1").resolve(4) == std::vector<std::size_t>{3});
    CHECK(RankSelection::parse("range:1:3").resolve(4) == std::vector<std::size_t>{1, 2});
    CHECK(RankSelection::parse("range:2:9").resolve(4) == std::vector<std::size_t>{2, 3});
    CHECK(RankSelection::parse("top:0").resolve(4).empty());
    CHECK(RankSelection::parse("range:1:3").to_string() == "range:1:3");
    for (const char* bad : {"", "top", "top:", "top:x", "range:3:1", "range:1", "middle:2"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(RankSelection::parse(bad), ValidationError);
    }
}

TEST_CASE("kinds, modes and alignment parse") {
    CHECK(default_kinds() == std::set<Kind>{Kind::Q, Kind::K, Kind::V, Kind::MlpUp, Kind::MlpGate, Kind::MlpDown});
    CHECK(parse_kinds("Q,V") == std::set<Kind>{Kind::Q, Kind::V});
    CHECK(parse_kinds("all").contains(Kind::O));
    CHECK(parse_kinds(kinds_to_string(default_kinds())) == default_kinds());
    CHECK_THROWS_AS(parse_kinds("Q,Bogus"), ValidationError);
    CHECK_THROWS_AS(parse_kinds(""), ValidationError);
    CHECK(parse_mode("vectors") == Mode::Vectors);
    CHECK_THROWS_AS(parse_mode("both"), ValidationError);
    CHECK(parse_alignment("procrustes") == Alignment::Procrustes);
    CHECK_THROWS_AS(parse_alignment("icp"), ValidationError);
}

TEST_CASE("values mode equals the explicit product") {
    for (auto [m, n] : {std::pair{8, 8}, {6, 10}, {10, 6}}) {
        const auto p = make_pair(m, n, 3);
        for (const std::vector<std::size_t> ranks : {std::vector<std::size_t>{0, 1}, {2, 4, 5}, {0, 1, 2, 3, 4, 5}}) {
            std::vector<double> s = p.ht.sigma;
            for (auto i : ranks) s[i] = p.dt.sigma[i];
            const Matrix want = product(p.ht.u, s, p.ht.v);
            const Matrix got = mixed_matrix(p.host, p.ht, p.dt, Mode::Values, ranks);
            CHECK(max_abs_difference(got, want) <= 1e-12);
            const auto sv = spectral::singular_values(got);
            std::vector<double> sorted = s;
            std::sort(sorted.rbegin(), sorted.rend());
            for (std::size_t i = 0; i < sv.size(); ++i) CHECK(std::abs(sv[i] - sorted[i]) <= 1e-12);
        }
    }
}

TEST_CASE("vectors mode equals the explicit product") {
    const auto p = make_pair(9, 7, 5);
    const std::vector<std::size_t> ranks{1, 3};
    const Matrix want = product(splice_columns(p.ht.u, p.dt.u, ranks), p.ht.sigma, splice_columns(p.ht.v, p.dt.v, ranks));
    CHECK(max_abs_difference(mixed_matrix(p.host, p.ht, p.dt, Mode::Vectors, ranks), want) <= 1e-12);

    // All ranks: donor directions with host values.
    const auto all = RankSelection::parse("all").resolve(7);
    const Matrix full = product(p.dt.u, p.ht.sigma, p.dt.v);
    CHECK(max_abs_difference(mixed_matrix(p.host, p.ht, p.dt, Mode::Vectors, all), full) <= 1e-12);
}

TEST_CASE("procrustes alignment is a no-op for identical directions") {
    const auto p = make_pair(8, 6, 7);
    const auto ranks = RankSelection::parse("top:3").resolve(6);
    const Matrix plain = mixed_matrix(p.host, p.ht, p.ht, Mode::Vectors, ranks, Alignment::Procrustes);
    CHECK(max_abs_difference(plain, p.host) <= 1e-12);
}

TEST_CASE("empty selections and bad ranks") {
    const auto p = make_pair(5, 5, 9);
    CHECK(mixed_matrix(p.host, p.ht, p.dt, Mode::Values, {}) == p.host);
    CHECK_THROWS_AS(mixed_matrix(p.host, p.ht, p.dt, Mode::Values, {5}), ValidationError);
    const auto other = make_pair(5, 4, 9);
    CHECK_THROWS_AS(mixed_matrix(p.host, p.ht, other.dt, Mode::Values, {0}), ValidationError);
}

TEST_CASE("value round trip, composition and norm accounting") {
    const auto p = make_pair(12, 8, 11);
    const auto all = RankSelection::parse("all").resolve(8);
    // A -> B then B -> result
    const Matrix r1 = mixed_matrix(p.host, p.ht, p.dt, Mode::Values, all);
    const Matrix r2 = mixed_matrix(r1, spectral::svd(r1), p.ht, Mode::Values, all);
    CHECK(frobenius_distance(r2, p.host) <= 1e-8);

    // Top(k) then Bottom(r-k) equals All.
    const auto top = RankSelection::parse("top:3").resolve(8);
    const auto bottom = RankSelection::parse("bottom:5").resolve(8);
    const Matrix step1 = mixed_matrix(p.host, p.ht, p.dt, Mode::Values, top);
    const Matrix step2 = mixed_matrix(step1, spectral::svd(step1), p.dt, Mode::Values, bottom);
    CHECK(max_abs_difference(step2, r1) <= 1e-10);

    // ||W'||^2 = sum selected donor^2 + sum unselected host^2
    double want = 0.0;
    for (std::size_t i = 0; i < 8; ++i) want += std::pow(i < 3 ? p.dt.sigma[i] : p.ht.sigma[i], 2);
    CHECK(std::abs(std::pow(frobenius_norm(step1), 2) - want) <= 1e-8);
}

TEST_CASE("degenerate boundaries are flagged") {
    const std::vector<double> sigma{3.0, 2.0, 2.0, 1.0};
    CHECK(degenerate_boundaries(sigma, {0, 1}) == std::vector<std::size_t>{1});
    CHECK(degenerate_boundaries(sigma, {0}).empty());
    CHECK(degenerate_boundaries(sigma, {0, 1, 2, 3}).empty());
    CHECK(degenerate_boundaries(sigma, {2}) == std::vector<std::size_t>{1});
}

TEST_CASE("run_surgery on checkpoint files") {
    TempDir dir;
    const ModelShape shape{4, 12, 6, 16};
    write_model(dir / "a.safetensors", shape, 1);
    write_model(dir / "b.safetensors", shape, 2);

    const auto plan = plan_for(dir / "a.safetensors", dir / "b.safetensors", Mode::Values);
    validate_plan(plan);
    const auto rep = run_surgery(plan, dir / "r.safetensors");
    CHECK(rep.edited_count() == 4 * 6);
    CHECK(rep.records.front().status == "edited");
    CHECK(rep.records.front().key == "L0.Q");
    CHECK(rep.records.back().status == "copied");

    const auto a = store::open_checkpoint(dir / "a.safetensors");
    const auto b = store::open_checkpoint(dir / "b.safetensors");
    const auto r = store::open_checkpoint(dir / "r.safetensors");
    for (const auto& rec : rep.records) {
        if (rec.status != "edited") {
            CHECK(store::load_bytes(r, rec.tensor) == store::load_bytes(b, rec.tensor));
            continue;
        }
        const Matrix wr = store::load_matrix(r, rec.tensor);
        const auto sr = spectral::singular_values(wr);
        const auto sa = spectral::singular_values(store::load_matrix(a, rec.tensor));
        for (std::size_t i = 0; i < sr.size(); ++i) CHECK(std::abs(sr[i] - sa[i]) <= 1e-10);
        const auto tb = spectral::svd(store::load_matrix(b, rec.tensor));
        const auto tr = spectral::svd(wr);
        CHECK(spectral::principal_angles(tr.u, tb.u).max_angle() <= 1e-8);
        CHECK(spectral::principal_angles(tr.v, tb.v).max_angle() <= 1e-8);
        CHECK(rec.degenerate_host.empty());
    }

    // Back again reproduces the host.
    const auto back = run_surgery(plan_for(dir / "b.safetensors", dir / "r.safetensors", Mode::Values),
                                  dir / "back.safetensors");
    const auto bk = store::open_checkpoint(dir / "back.safetensors");
    for (const auto& rec : back.records) {
        if (rec.status != "edited") continue;
        CHECK(frobenius_distance(store::load_matrix(bk, rec.tensor), store::load_matrix(b, rec.tensor)) <= 1e-8);
    }
}

TEST_CASE("layer selections nest") {
    TempDir dir;
    const ModelShape shape{8, 8, 4, 10};
    write_model(dir / "a.safetensors", shape, 1);
    write_model(dir / "b.safetensors", shape, 2);
    auto edited = [&](const std::string& layers) {
        const auto rep = run_surgery(plan_for(dir / "a.safetensors", dir / "b.safetensors", Mode::Values, layers, "top:2"),
                                     dir / "o.safetensors");
        std::set<std::string> names;
        for (const auto& r : rep.records) {
            if (r.status == "edited") names.insert(r.tensor);
        }
        return names;
    };
    const auto small = edited("first:2");
    const auto large = edited("first:7");
    CHECK(small.size() == 12);
    CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
}

TEST_CASE("plans are validated before anything is written") {
    TempDir dir;
    write_model(dir / "a.safetensors", {2, 8, 4, 10}, 1);
    write_model(dir / "b.safetensors", {2, 8, 4, 12}, 2);
    const auto plan = plan_for(dir / "a.safetensors", dir / "b.safetensors", Mode::Values);
    CHECK_THROWS_AS(validate_plan(plan), ValidationError);
    CHECK_THROWS_AS(run_surgery(plan, dir / "o.safetensors"), ValidationError);
    CHECK_FALSE(std::filesystem::exists(dir / "o.safetensors"));

    write_model(dir / "small.safetensors", {1, 8, 4, 10}, 1);
    write_model(dir / "big.safetensors", {2, 8, 4, 10}, 1);
    CHECK_THROWS_AS(validate_plan(plan_for(dir / "small.safetensors", dir / "big.safetensors", Mode::Values)),
                    ValidationError);
    CHECK_NOTHROW(validate_plan(plan_for(dir / "big.safetensors", dir / "small.safetensors", Mode::Values)));
}
