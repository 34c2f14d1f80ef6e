// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Single-file safetensors checkpoints: an 8-byte little-endian header length,
// a JSON header mapping tensor names to {dtype, shape, data_offsets}, then the
// raw little-endian row-major payload.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "specsurg/matrix.hpp"

namespace specsurg::store {

enum class Dtype { F64, F32, F16, BF16 };

std::size_t dtype_size(Dtype d) noexcept;
std::string_view to_string(Dtype d) noexcept;
Dtype parse_dtype(std::string_view s);

/// Round-to-nearest-even encoders from working precision. Overflow goes to
/// infinity, as IEEE conversion does.
std::uint16_t encode_bf16(double x) noexcept;
std::uint16_t encode_f16(double x) noexcept;
double decode_bf16(std::uint16_t h) noexcept;
double decode_f16(std::uint16_t h) noexcept;

/// decode(encode(x)) in the given dtype.
double round_to(Dtype d, double x) noexcept;

struct TensorInfo {
    std::string name;
    Dtype dtype = Dtype::F32;
    std::vector<std::uint64_t> shape;
    std::uint64_t begin = 0; // relative to the start of the data section
    std::uint64_t end = 0;

    std::uint64_t element_count() const noexcept;
    std::uint64_t byte_size() const noexcept { return end - begin; }
    bool is_matrix() const noexcept { return shape.size() == 2; }
};

class Checkpoint {
public:
    const std::filesystem::path& path() const noexcept { return path_; }
    const std::map<std::string, TensorInfo>& index() const noexcept { return index_; }
    const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

    std::size_t tensor_count() const noexcept { return index_.size(); }
    std::uint64_t payload_size() const noexcept { return payload_size_; }
    std::uint64_t data_offset() const noexcept { return data_offset_; }

    bool contains(const std::string& name) const { return index_.contains(name); }
    const TensorInfo& info(const std::string& name) const;

private:
    friend Checkpoint open_checkpoint(const std::filesystem::path& path);

    std::filesystem::path path_;
    std::map<std::string, TensorInfo> index_;
    std::map<std::string, std::string> metadata_;
    std::uint64_t data_offset_ = 0;
    std::uint64_t payload_size_ = 0;
};

/// Parses and validates the header; payloads are not read.
Checkpoint open_checkpoint(const std::filesystem::path& path);

/// Reads one 2-D tensor and decodes it to working precision.
Matrix load_matrix(const Checkpoint& ckpt, const std::string& name);

/// Raw stored bytes of one tensor.
std::vector<std::uint8_t> load_bytes(const Checkpoint& ckpt, const std::string& name);

struct WriteOptions {
    /// Store edited tensors as F32 instead of their original dtype.
    bool force_f32 = false;
};

struct WrittenTensor {
    std::string name;
    Dtype stored = Dtype::F32;
    bool edited = false;
    double max_rounding_error = 0.0; // max |stored - edit| over entries, 0 for copies
};

struct WriteReport {
    std::filesystem::path path;
    std::vector<WrittenTensor> tensors; // sorted by name
    std::uint64_t payload_size = 0;
};

/// Writes `base` with `edits` applied. Unedited tensors are copied byte for
/// byte; the header is emitted with names in sorted order. The file is written
/// to a temporary sibling and renamed into place.
WriteReport write_checkpoint(const Checkpoint& base, const std::map<std::string, Matrix>& edits,
                             const std::filesystem::path& out, const WriteOptions& options = {});

/// Builds a fresh checkpoint from matrices (used by fixtures and tools).
void write_new_checkpoint(const std::map<std::string, std::pair<Dtype, Matrix>>& tensors,
                          const std::filesystem::path& out,
                          const std::map<std::string, std::string>& metadata = {});

// ---------------------------------------------------------------------------
// Naming profiles

enum class Kind { Q, K, V, O, MlpUp, MlpGate, MlpDown, Other };

std::string_view to_string(Kind k) noexcept;
/// Known kind names map to their enumerator; anything else is Kind::Other.
Kind parse_kind(std::string_view s) noexcept;

struct MatrixKey {
    std::uint32_t layer = 0;
    Kind kind = Kind::Q;
    std::string other; // kind label when kind == Other

    std::string label() const;
    auto operator<=>(const MatrixKey&) const = default;
};

struct NamePattern {
    std::string name_template; // contains "{layer}" exactly once
    Kind kind = Kind::Q;
    std::string other;
};

struct NamingProfile {
    std::string name;
    std::vector<NamePattern> patterns;
    std::vector<std::string> exclusions; // shell-style globs

    /// Layer index if `tensor` matches `p`.
    static std::optional<std::uint32_t> match(const NamePattern& p, std::string_view tensor);
};

NamingProfile builtin_profile(std::string_view name);
std::vector<std::string> builtin_profile_names();
/// JSON profile file: {"name": ..., "patterns": [{"template": ..., "kind": ...}], "exclusions": [...]}.
NamingProfile load_profile(const std::filesystem::path& path);
/// A built-in name or a path to a profile file.
NamingProfile resolve_profile(std::string_view name_or_path);

struct ResolvedKey {
    MatrixKey key;
    std::string tensor;
};

struct UnmatchedTensor {
    std::string tensor;
    std::string reason; // "excluded", "no pattern", "not 2-D"
};

struct Resolution {
    std::vector<ResolvedKey> matched; // sorted by key
    std::vector<UnmatchedTensor> unmatched; // sorted by name
};

Resolution resolve_keys(const Checkpoint& ckpt, const NamingProfile& profile);
Resolution resolve_keys(const std::map<std::string, TensorInfo>& index, const NamingProfile& profile);

} // namespace specsurg::store
