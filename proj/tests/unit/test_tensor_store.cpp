// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <doctest.h>

#include "fixtures.hpp"
#include "specsurg/error.hpp"
#include "specsurg/tensor_store.hpp"

using namespace specsurg;
using namespace specsurg::store;
using specsurg::testing::TempDir;
namespace fs = std::filesystem;

namespace {

// Every finite non-negative value of a 16-bit format, ascending, with its pattern.
struct Table {
    std::vector<double> values;
    std::vector<std::uint16_t> bits;
    std::uint16_t inf_bits;
};

double bf16_value(std::uint16_t h) {
    const std::uint32_t u = static_cast<std::uint32_t>(h) << 16;
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

double f16_value(std::uint16_t h) {
    const int e = (h >> 10) & 0x1f;
    const int m = h & 0x3ff;
    return e == 0 ? std::ldexp(m, -24) : std::ldexp(1024 + m, e - 25);
}

Table make_table(bool bf16) {
    Table t;
    const std::uint16_t last = bf16 ? 0x7f7f : 0x7bff;
    for (std::uint32_t b = 0; b <= last; ++b) {
        t.bits.push_back(static_cast<std::uint16_t>(b));
        t.values.push_back(bf16 ? bf16_value(static_cast<std::uint16_t>(b)) : f16_value(static_cast<std::uint16_t>(b)));
    }
    t.inf_bits = bf16 ? 0x7f80 : 0x7c00;
    return t;
}

// Nearest representable value, ties to the even pattern, overflow to infinity.
std::uint16_t oracle_encode(const Table& t, double x) {
    const std::uint16_t sign = std::signbit(x) ? 0x8000 : 0;
    const double a = std::abs(x);
    const std::size_t n = t.values.size();
    const double top = t.values[n - 1];
    const double limit = top + (top - t.values[n - 2]) / 2;
    if (a >= limit) return sign | t.inf_bits;
    const auto it = std::lower_bound(t.values.begin(), t.values.end(), a);
    const std::size_t hi = static_cast<std::size_t>(it - t.values.begin());
    if (hi < n && t.values[hi] == a) return sign | t.bits[hi];
    if (hi == n) return sign | t.bits[n - 1];
    const std::size_t lo = hi - 1;
    const double dl = a - t.values[lo], dh = t.values[hi] - a;
    if (dl < dh) return sign | t.bits[lo];
    if (dh < dl) return sign | t.bits[hi];
    return sign | ((t.bits[lo] & 1) == 0 ? t.bits[lo] : t.bits[hi]);
}

std::vector<double> probe_values(const Table& t, std::uint64_t seed) {
    std::vector<double> out;
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> mant(1.0, 2.0);
    std::uniform_int_distribution<int> ex(-30, 20);
    for (int i = 0; i < 20000; ++i) out.push_back((i % 2 ? -1 : 1) * std::ldexp(mant(gen), ex(gen)));
    // exact midpoints and their neighbours
    std::uniform_int_distribution<std::size_t> idx(0, t.values.size() - 2);
    for (int i = 0; i < 5000; ++i) {
        const std::size_t k = idx(gen);
        const double mid = (t.values[k] + t.values[k + 1]) / 2;
        out.push_back(mid);
        out.push_back(std::nextafter(mid, 0.0));
        out.push_back(std::nextafter(mid, HUGE_VAL));
    }
    const double top = t.values.back();
    const double limit = top + (top - t.values[t.values.size() - 2]) / 2;
    for (double v : {top, limit, std::nextafter(limit, 0.0), 2 * top, 0.0, -0.0, t.values[1], t.values[1] / 2,
                     t.values[1] / 3, 1e-300}) {
        out.push_back(v);
        out.push_back(-v);
    }
    return out;
}

void write_raw(const fs::path& p, const std::string& header, const std::vector<std::uint8_t>& payload,
               std::optional<std::uint64_t> declared = {}) {
    std::ofstream out(p, std::ios::binary);
    const std::uint64_t n = declared.value_or(header.size());
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((n >> (8 * i)) & 0xff));
    out << header;
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
}

} // namespace

TEST_CASE("bf16 encoding matches the brute-force nearest-even oracle") {
    const Table t = make_table(true);
    for (double x : probe_values(t, 1)) {
        CAPTURE(x);
        CHECK(encode_bf16(x) == oracle_encode(t, x));
    }
    CHECK(std::isnan(decode_bf16(encode_bf16(NAN))));
}

TEST_CASE("f16 encoding matches the brute-force nearest-even oracle") {
    const Table t = make_table(false);
    for (double x : probe_values(t, 2)) {
        CAPTURE(x);
        CHECK(encode_f16(x) == oracle_encode(t, x));
    }
    CHECK(std::isnan(decode_f16(encode_f16(NAN))));
    CHECK(decode_f16(encode_f16(1e6)) == HUGE_VAL);
}

TEST_CASE("decode and round_to") {
    for (std::uint32_t b = 0; b < 0x10000; b += 7) {
        const auto h = static_cast<std::uint16_t>(b);
        const double v = decode_bf16(h);
        if (!std::isnan(v)) CHECK(encode_bf16(v) == h);
    }
    CHECK(round_to(Dtype::F64, 0.1) == 0.1);
    CHECK(round_to(Dtype::F32, 0.1) == static_cast<double>(0.1f));
    CHECK(round_to(Dtype::BF16, 1.0 + 1.0 / 256) == 1.0);
    CHECK(round_to(Dtype::F16, 1.0 + 1.0 / 4096) == 1.0);
}

TEST_CASE("dtype names") {
    for (auto d : {Dtype::F64, Dtype::F32, Dtype::F16, Dtype::BF16}) CHECK(parse_dtype(to_string(d)) == d);
    CHECK(dtype_size(Dtype::BF16) == 2);
    CHECK_THROWS_AS(parse_dtype("I8"), ValidationError);
}

TEST_CASE("write then read round trips every dtype") {
    TempDir dir;
    const Matrix a = specsurg::testing::random_matrix(5, 7, 3);
    std::map<std::string, std::pair<Dtype, Matrix>> tensors;
    for (auto d : {Dtype::F64, Dtype::F32, Dtype::F16, Dtype::BF16}) tensors[std::string(to_string(d))] = {d, a};
    write_new_checkpoint(tensors, dir / "m.safetensors", {{"note", "x"}});
    CHECK_FALSE(fs::exists(dir / "m.safetensors.partial"));

    const auto ck = open_checkpoint(dir / "m.safetensors");
    CHECK(ck.tensor_count() == 4);
    CHECK(ck.metadata().at("note") == "x");
    CHECK(ck.data_offset() % 8 == 0);
    for (auto d : {Dtype::F64, Dtype::F32, Dtype::F16, Dtype::BF16}) {
        const auto& info = ck.info(std::string(to_string(d)));
        CHECK(info.dtype == d);
        CHECK(info.shape == std::vector<std::uint64_t>{5, 7});
        const Matrix b = load_matrix(ck, info.name);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(b.values()[i] == round_to(d, a.values()[i]));
    }
    const auto raw = load_bytes(ck, "F32");
    float first;
    std::memcpy(&first, raw.data(), 4);
    CHECK(first == static_cast<float>(a(0, 0)));
}

TEST_CASE("write_checkpoint copies untouched tensors byte for byte") {
    TempDir dir;
    specsurg::testing::write_model(dir / "base.safetensors", {2, 8, 4, 12}, 5, Dtype::BF16);
    const auto base = open_checkpoint(dir / "base.safetensors");
    const std::string q = specsurg::testing::tensor_name(0, Kind::Q);
    Matrix edit = load_matrix(base, q);
    edit *= 1.5;
    const auto rep = write_checkpoint(base, {{q, edit}}, dir / "out.safetensors");
    const auto out = open_checkpoint(dir / "out.safetensors");
    CHECK(out.tensor_count() == base.tensor_count());
    CHECK(out.metadata() == base.metadata());
    for (const auto& [name, info] : base.index()) {
        CHECK(out.info(name).dtype == info.dtype);
        CHECK(out.info(name).shape == info.shape);
        if (name != q) CHECK(load_bytes(out, name) == load_bytes(base, name));
    }
    const Matrix back = load_matrix(out, q);
    for (std::size_t i = 0; i < edit.size(); ++i) CHECK(back.values()[i] == round_to(Dtype::BF16, edit.values()[i]));
    const auto it = std::find_if(rep.tensors.begin(), rep.tensors.end(), [&](auto& t) { return t.name == q; });
    REQUIRE(it != rep.tensors.end());
    CHECK(it->edited);
    CHECK(it->max_rounding_error > 0.0);
    CHECK(it->max_rounding_error <= max_abs(edit) * std::ldexp(1.0, -8));

    write_checkpoint(base, {{q, edit}}, dir / "f32.safetensors", {.force_f32 = true});
    const auto f32 = open_checkpoint(dir / "f32.safetensors");
    CHECK(f32.info(q).dtype == Dtype::F32);
    CHECK(f32.info(specsurg::testing::tensor_name(0, Kind::K)).dtype == Dtype::BF16);

    // Same inputs, same bytes.
    write_checkpoint(base, {{q, edit}}, dir / "again.safetensors");
    CHECK(specsurg::testing::read_file(dir / "again.safetensors") == specsurg::testing::read_file(dir / "out.safetensors"));
}

TEST_CASE("edits are validated") {
    TempDir dir;
    specsurg::testing::write_model(dir / "b.safetensors", {1, 8, 4, 12}, 5);
    const auto base = open_checkpoint(dir / "b.safetensors");
    const std::string q = specsurg::testing::tensor_name(0, Kind::Q);
    CHECK_THROWS_AS(write_checkpoint(base, {{q, Matrix(3, 3)}}, dir / "o.safetensors"), ValidationError);
    CHECK_THROWS_AS(write_checkpoint(base, {{"nope", Matrix(8, 8)}}, dir / "o.safetensors"), ValidationError);
    Matrix bad(8, 8);
    bad(0, 0) = NAN;
    CHECK_THROWS_AS(write_checkpoint(base, {{q, bad}}, dir / "o.safetensors"), NumericalError);

    std::map<std::string, std::pair<Dtype, Matrix>> big{{"x", {Dtype::F16, Matrix(1, 1, {1e9})}}};
    CHECK_THROWS_AS(write_new_checkpoint(big, dir / "big.safetensors"), NumericalError);
    CHECK_FALSE(fs::exists(dir / "o.safetensors"));
}

TEST_CASE("malformed files are rejected") {
    TempDir dir;
    const auto p = dir / "bad.safetensors";
    const std::vector<std::uint8_t> eight(8, 0);

    CHECK_THROWS_AS(open_checkpoint(dir / "missing.safetensors"), IoError);

    { std::ofstream(p, std::ios::binary) << "abc"; }
    CHECK_THROWS_AS(open_checkpoint(p), ValidationError);

    write_raw(p, "{}", {}, 1000);
    CHECK_THROWS_AS(open_checkpoint(p), ValidationError);

    write_raw(p, "{not json", {});
    CHECK_THROWS_AS(open_checkpoint(p), ValidationError);

    write_raw(p, "[]", {});
    CHECK_THROWS_AS(open_checkpoint(p), ValidationError);

    write_raw(p, R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}})",
              std::vector<std::uint8_t>(12, 0));
    CHECK_THROWS_WITH_AS(open_checkpoint(p), doctest::Contains("overlaps"), ValidationError);

    write_raw(p, R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})", std::vector<std::uint8_t>(4, 0));
    CHECK_THROWS_WITH_AS(open_checkpoint(p), doctest::Contains("beyond"), ValidationError);

    write_raw(p, R"({"a":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}})", eight);
    CHECK_THROWS_AS(open_checkpoint(p), ValidationError);

    write_raw(p, R"({"a":{"dtype":"Q4","shape":[2],"data_offsets":[0,8]}})", eight);
    CHECK_THROWS_AS(open_checkpoint(p), ValidationError);

    write_raw(p, R"({"a":{"dtype":"F32","shape":[2,-1],"data_offsets":[0,8]}})", eight);
    CHECK_THROWS_AS(open_checkpoint(p), ValidationError);

    write_raw(p, R"({"a":{"dtype":"F32","data_offsets":[0,8]}})", eight);
    CHECK_THROWS_AS(open_checkpoint(p), ValidationError);

    write_raw(p, R"({"__metadata__":{"k":3}})", {});
    CHECK_THROWS_AS(open_checkpoint(p), ValidationError);
}

TEST_CASE("tensors of any rank are indexed but only matrices load") {
    TempDir dir;
    const auto p = dir / "mixed.safetensors";
    std::vector<std::uint8_t> payload(8 + 16 + 4, 0);
    const float two[2] = {1.0f, 2.0f};
    std::memcpy(payload.data(), two, 8);
    write_raw(p,
              R"({"vec":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},)"
              R"("mat":{"dtype":"F32","shape":[2,2],"data_offsets":[8,24]},)"
              R"("scalar":{"dtype":"F32","shape":[],"data_offsets":[24,28]}})",
              payload);
    const auto ck = open_checkpoint(p);
    CHECK(ck.tensor_count() == 3);
    CHECK_FALSE(ck.info("vec").is_matrix());
    CHECK(ck.info("scalar").element_count() == 1);
    CHECK_THROWS_AS(load_matrix(ck, "vec"), ValidationError);
    CHECK(load_matrix(ck, "mat").rows() == 2);
    CHECK(load_bytes(ck, "vec").size() == 8);
    CHECK_THROWS_AS(ck.info("none"), ValidationError);
}
