// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <fnmatch.h>

#include <algorithm>
#include <charconv>
#include <fstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "specsurg/error.hpp"
#include "specsurg/tensor_store.hpp"

namespace specsurg::store {

namespace {

constexpr std::string_view kLayerPlaceholder = "{layer}";

std::vector<NamePattern> decoder_patterns() {
    return {
        {"model.layers.{layer}.self_attn.q_proj.weight", Kind::Q, {}},
        {"model.layers.{layer}.self_attn.k_proj.weight", Kind::K, {}},
        {"model.layers.{layer}.self_attn.v_proj.weight", Kind::V, {}},
        {"model.layers.{layer}.self_attn.o_proj.weight", Kind::O, {}},
        {"model.layers.{layer}.mlp.up_proj.weight", Kind::MlpUp, {}},
        {"model.layers.{layer}.mlp.gate_proj.weight", Kind::MlpGate, {}},
        {"model.layers.{layer}.mlp.down_proj.weight", Kind::MlpDown, {}},
    };
}

// Biases are never restored; norms, embeddings and the output head are left
// out of the default selection.
std::vector<std::string> default_exclusions() {
    return {"*.bias", "*norm*", "*embed_tokens*", "lm_head*", "*rotary_emb*"};
}

void validate_template(const std::string& t) {
    const auto first = t.find(kLayerPlaceholder);
    if (first == std::string::npos || t.find(kLayerPlaceholder, first + 1) != std::string::npos) {
        throw ValidationError(fmt::format("name template '{}' must contain {{layer}} exactly once", t));
    }
}

bool excluded(const NamingProfile& p, const std::string& name) {
    return std::any_of(p.exclusions.begin(), p.exclusions.end(),
                       [&](const std::string& glob) { return fnmatch(glob.c_str(), name.c_str(), 0) == 0; });
}

} // namespace

std::string_view to_string(Kind k) noexcept {
    switch (k) {
    case Kind::Q: return "Q";
    case Kind::K: return "K";
    case Kind::V: return "V";
    case Kind::O: return "O";
    case Kind::MlpUp: return "MlpUp";
    case Kind::MlpGate: return "MlpGate";
    case Kind::MlpDown: return "MlpDown";
    case Kind::Other: return "Other";
    }
    return "?";
}

Kind parse_kind(std::string_view s) noexcept {
    for (Kind k : {Kind::Q, Kind::K, Kind::V, Kind::O, Kind::MlpUp, Kind::MlpGate, Kind::MlpDown}) {
        if (s == to_string(k)) return k;
    }
    return Kind::Other;
}

std::string MatrixKey::label() const {
    return fmt::format("L{}.{}", layer, kind == Kind::Other ? other : std::string(to_string(kind)));
}

std::optional<std::uint32_t> NamingProfile::match(const NamePattern& p, std::string_view tensor) {
    const std::string_view t = p.name_template;
    const auto at = t.find(kLayerPlaceholder);
    if (at == std::string_view::npos) return std::nullopt;
    const std::string_view prefix = t.substr(0, at);
    const std::string_view suffix = t.substr(at + kLayerPlaceholder.size());
    if (tensor.size() <= prefix.size() + suffix.size()) return std::nullopt;
    if (!tensor.starts_with(prefix) || !tensor.ends_with(suffix)) return std::nullopt;
    const std::string_view digits = tensor.substr(prefix.size(), tensor.size() - prefix.size() - suffix.size());
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    std::uint32_t layer = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), layer);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
    return layer;
}

std::vector<std::string> builtin_profile_names() { return {"llama-style", "qwen-style"}; }

NamingProfile builtin_profile(std::string_view name) {
    if (name == "llama-style" || name == "qwen-style") {
        // Both families use the same Hugging Face decoder layout; Qwen2 adds
        // q/k/v biases, which the exclusions already drop.
        return NamingProfile{std::string(name), decoder_patterns(), default_exclusions()};
    }
    throw ValidationError(fmt::format("unknown naming profile '{}'", name));
}

NamingProfile load_profile(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ValidationError(fmt::format("'{}' is neither a built-in profile nor a profile file", path.string()));
    }
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open profile '{}'", path.string()));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(fmt::format("profile '{}' is not valid JSON: {}", path.string(), e.what()));
    }
    NamingProfile p;
    try {
        p.name = j.value("name", path.stem().string());
        for (const auto& e : j.at("patterns")) {
            NamePattern np;
            np.name_template = e.at("template").get<std::string>();
            const auto kind = e.at("kind").get<std::string>();
            np.kind = parse_kind(kind);
            if (np.kind == Kind::Other) np.other = kind;
            validate_template(np.name_template);
            p.patterns.push_back(std::move(np));
        }
        if (j.contains("exclusions")) p.exclusions = j.at("exclusions").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(fmt::format("profile '{}': {}", path.string(), e.what()));
    }
    if (p.patterns.empty()) throw ValidationError(fmt::format("profile '{}' has no patterns", path.string()));
    return p;
}

NamingProfile resolve_profile(std::string_view name_or_path) {
    const auto names = builtin_profile_names();
    if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return builtin_profile(name_or_path);
    return load_profile(std::filesystem::path(name_or_path));
}

Resolution resolve_keys(const std::map<std::string, TensorInfo>& index, const NamingProfile& profile) {
    Resolution r;
    for (const auto& [name, info] : index) {
        if (excluded(profile, name)) {
            r.unmatched.push_back({name, "excluded"});
            continue;
        }
        std::optional<ResolvedKey> hit;
        for (const auto& p : profile.patterns) {
            const auto layer = NamingProfile::match(p, name);
            if (!layer) continue;
            if (hit) {
                throw ValidationError(
                    fmt::format("profile '{}': tensor '{}' matches more than one pattern", profile.name, name));
            }
            hit = ResolvedKey{MatrixKey{*layer, p.kind, p.other}, name};
        }
        if (!hit) {
            r.unmatched.push_back({name, "no pattern"});
        } else if (!info.is_matrix()) {
            r.unmatched.push_back({name, "not 2-D"});
        } else {
            r.matched.push_back(std::move(*hit));
        }
    }
    std::sort(r.matched.begin(), r.matched.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    for (std::size_t i = 1; i < r.matched.size(); ++i) {
        if (r.matched[i].key == r.matched[i - 1].key) {
            throw ValidationError(fmt::format("tensors '{}' and '{}' both resolve to {}", r.matched[i - 1].tensor,
                                              r.matched[i].tensor, r.matched[i].key.label()));
        }
    }
    return r;
}

Resolution resolve_keys(const Checkpoint& ckpt, const NamingProfile& profile) {
    return resolve_keys(ckpt.index(), profile);
}

} // namespace specsurg::store
