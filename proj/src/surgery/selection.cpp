// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <charconv>

#include <fmt/core.h>
#include <fmt/ranges.h>

#include "specsurg/error.hpp"
#include "specsurg/surgery.hpp"

namespace specsurg::surgery {
namespace {

std::size_t parse_count(std::string_view s, std::string_view context) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw ValidationError(fmt::format("'{}' in '{}' is not a non-negative integer", s, context));
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    for (;;) {
        const auto at = s.find(sep, start);
        parts.push_back(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
        if (at == std::string_view::npos) break;
        start = at + 1;
    }
    return parts;
}

} // namespace

std::string_view to_string(Mode m) noexcept { return m == Mode::Values ? "values" : "vectors"; }

Mode parse_mode(std::string_view s) {
    if (s == "values") return Mode::Values;
    if (s == "vectors") return Mode::Vectors;
    throw ValidationError(fmt::format("unknown surgery mode '{}' (expected values or vectors)", s));
}

Alignment parse_alignment(std::string_view s) {
    if (s == "none") return Alignment::None;
    if (s == "procrustes") return Alignment::Procrustes;
    throw ValidationError(fmt::format("unknown alignment '{}' (expected none or procrustes)", s));
}

LayerSelection LayerSelection::parse(std::string_view text) {
    LayerSelection sel;
    if (text == "all") return sel;
    const auto parts = split(text, ':');
    if (parts.size() == 2 && (parts[0] == "first" || parts[0] == "last")) {
        sel.type = parts[0] == "first" ? Type::First : Type::Last;
        sel.count = parse_count(parts[1], text);
        return sel;
    }
    if (parts.size() == 2 && parts[0] == "list") {
        sel.type = Type::List;
        for (auto p : split(parts[1], ',')) sel.indices.push_back(static_cast<std::uint32_t>(parse_count(p, text)));
        std::sort(sel.indices.begin(), sel.indices.end());
        sel.indices.erase(std::unique(sel.indices.begin(), sel.indices.end()), sel.indices.end());
        return sel;
    }
    throw ValidationError(fmt::format("bad layer selection '{}' (expected all, first:K, last:K or list:I,J,...)", text));
}

std::string LayerSelection::to_string() const {
    switch (type) {
    case Type::All: return "all";
    case Type::First: return fmt::format("first:{}", count);
    case Type::Last: return fmt::format("last:{}", count);
    case Type::List: return fmt::format("list:{}", fmt::join(indices, ","));
    }
    return "all";
}

std::set<std::uint32_t> LayerSelection::resolve(const std::set<std::uint32_t>& layers) const {
    std::set<std::uint32_t> out;
    if (layers.empty()) return out;
    const std::uint32_t depth = *layers.rbegin() + 1;
    for (std::uint32_t l : layers) {
        bool keep = false;
        switch (type) {
        case Type::All: keep = true; break;
        case Type::First: keep = l < count; break;
        case Type::Last: keep = static_cast<std::size_t>(depth - l) <= count; break;
        case Type::List: keep = std::binary_search(indices.begin(), indices.end(), l); break;
        }
        if (keep) out.insert(l);
    }
    return out;
}

RankSelection RankSelection::parse(std::string_view text) {
    RankSelection sel;
    if (text == "all") return sel;
    const auto parts = split(text, ':');
    if (parts.size() == 2 && (parts[0] == "top" || parts[0] == "bottom")) {
        sel.type = parts[0] == "top" ? Type::Top : Type::Bottom;
        sel.count = parse_count(parts[1], text);
        return sel;
    }
    if (parts.size() == 3 && parts[0] == "range") {
        sel.type = Type::Range;
        sel.first = parse_count(parts[1], text);
        sel.last = parse_count(parts[2], text);
        if (sel.first > sel.last) throw ValidationError(fmt::format("rank range '{}' has start after end", text));
        return sel;
    }
    throw ValidationError(fmt::format("bad rank selection '{}' (expected all, top:K, bottom:K or range:A:B)", text));
}

std::string RankSelection::to_string() const {
    switch (type) {
    case Type::All: return "all";
    case Type::Top: return fmt::format("top:{}", count);
    case Type::Bottom: return fmt::format("bottom:{}", count);
    case Type::Range: return fmt::format("range:{}:{}", first, last);
    }
    return "all";
}

std::vector<std::size_t> RankSelection::resolve(std::size_t rank) const {
    std::size_t lo = 0, hi = rank;
    switch (type) {
    case Type::All: break;
    case Type::Top: hi = std::min(count, rank); break;
    case Type::Bottom: lo = rank - std::min(count, rank); break;
    case Type::Range:
        lo = std::min(first, rank);
        hi = std::min(last, rank);
        break;
    }
    std::vector<std::size_t> out;
    for (std::size_t i = lo; i < hi; ++i) out.push_back(i);
    return out;
}

std::set<store::Kind> default_kinds() {
    using store::Kind;
    return {Kind::Q, Kind::K, Kind::V, Kind::MlpUp, Kind::MlpGate, Kind::MlpDown};
}

std::set<store::Kind> parse_kinds(std::string_view text) {
    using store::Kind;
    if (text == "all") return {Kind::Q, Kind::K, Kind::V, Kind::O, Kind::MlpUp, Kind::MlpGate, Kind::MlpDown, Kind::Other};
    std::set<Kind> out;
    for (auto part : split(text, ',')) {
        if (part == "Other") {
            out.insert(Kind::Other);
            continue;
        }
        const Kind k = store::parse_kind(part);
        if (k == Kind::Other) throw ValidationError(fmt::format("unknown matrix kind '{}'", part));
        out.insert(k);
    }
    if (out.empty()) throw ValidationError("empty kind list");
    return out;
}

std::string kinds_to_string(const std::set<store::Kind>& kinds) {
    std::vector<std::string_view> names;
    for (auto k : kinds) names.push_back(store::to_string(k));
    return fmt::format("{}", fmt::join(names, ","));
}

} // namespace specsurg::surgery
