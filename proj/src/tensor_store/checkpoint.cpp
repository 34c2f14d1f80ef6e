// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <system_error>

#include <fmt/core.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "specsurg/error.hpp"
#include "specsurg/kernels.hpp"
#include "specsurg/tensor_store.hpp"

static_assert(std::endian::native == std::endian::little, "payload decoding assumes a little-endian host");

namespace specsurg::store {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t TensorInfo::element_count() const noexcept {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

const TensorInfo& Checkpoint::info(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError(fmt::format("{}: no tensor named '{}'", path_.string(), name));
    return it->second;
}

namespace {

std::uint64_t read_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint64_t json_uint(const json& j, const std::string& what) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
        throw ValidationError(fmt::format("malformed header: {} is not a non-negative integer", what));
    }
    return j.get<std::uint64_t>();
}

TensorInfo parse_entry(const std::string& name, const json& e) {
    if (!e.is_object()) throw ValidationError(fmt::format("malformed header: entry '{}' is not an object", name));
    if (!e.contains("dtype") || !e["dtype"].is_string() || !e.contains("shape") || !e["shape"].is_array() ||
        !e.contains("data_offsets") || !e["data_offsets"].is_array() || e["data_offsets"].size() != 2) {
        throw ValidationError(fmt::format("malformed header: entry '{}' lacks dtype/shape/data_offsets", name));
    }
    TensorInfo t;
    t.name = name;
    t.dtype = parse_dtype(e["dtype"].get<std::string>());
    for (const auto& d : e["shape"]) t.shape.push_back(json_uint(d, fmt::format("a dimension of '{}'", name)));
    t.begin = json_uint(e["data_offsets"][0], fmt::format("data offset of '{}'", name));
    t.end = json_uint(e["data_offsets"][1], fmt::format("data offset of '{}'", name));
    if (t.end < t.begin) throw ValidationError(fmt::format("malformed header: '{}' has end < begin", name));
    if (t.byte_size() != t.element_count() * dtype_size(t.dtype)) {
        throw ValidationError(fmt::format("malformed header: '{}' spans {} bytes, shape needs {}", name, t.byte_size(),
                                          t.element_count() * dtype_size(t.dtype)));
    }
    return t;
}

std::ifstream open_binary(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
    return in;
}

void read_exact(std::ifstream& in, std::uint64_t offset, char* dst, std::uint64_t n, const fs::path& path) {
    in.seekg(static_cast<std::streamoff>(offset));
    in.read(dst, static_cast<std::streamsize>(n));
    if (!in || static_cast<std::uint64_t>(in.gcount()) != n) {
        throw IoError(fmt::format("short read from '{}' at offset {}", path.string(), offset));
    }
}

struct Encoded {
    std::vector<std::uint8_t> bytes;
    double max_error = 0.0;
};

template <typename T>
void put(std::vector<std::uint8_t>& out, std::size_t i, T v) {
    std::memcpy(out.data() + i * sizeof(T), &v, sizeof(T));
}

Encoded encode(Dtype dtype, const Matrix& m) {
    Encoded e;
    const auto vals = m.values();
    e.bytes.resize(vals.size() * dtype_size(dtype));
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double x = vals[i];
        double stored = x;
        switch (dtype) {
        case Dtype::F64: put(e.bytes, i, x); break;
        case Dtype::F32: {
            const auto f = static_cast<float>(x);
            put(e.bytes, i, f);
            stored = f;
            break;
        }
        case Dtype::F16: {
            const auto h = encode_f16(x);
            put(e.bytes, i, h);
            stored = decode_f16(h);
            break;
        }
        case Dtype::BF16: {
            const auto h = encode_bf16(x);
            put(e.bytes, i, h);
            stored = decode_bf16(h);
            break;
        }
        }
        if (!std::isfinite(stored)) {
            throw NumericalError(fmt::format("value {} overflows {}", x, to_string(dtype)));
        }
        e.max_error = std::max(e.max_error, std::abs(stored - x));
    }
    return e;
}

json header_entry(Dtype dtype, const std::vector<std::uint64_t>& shape, std::uint64_t begin, std::uint64_t end) {
    return json{{"dtype", std::string(to_string(dtype))}, {"shape", shape}, {"data_offsets", {begin, end}}};
}

// Serialized header padded with spaces to a multiple of 8 bytes.
std::string serialize_header(const json& header) {
    std::string text = header.dump();
    while ((text.size() % 8) != 0) text.push_back(' ');
    return text;
}

class AtomicFile {
public:
    explicit AtomicFile(fs::path target) : target_(std::move(target)), tmp_(target_) {
        tmp_ += ".partial";
        out_.open(tmp_, std::ios::binary | std::ios::trunc);
        if (!out_) throw IoError(fmt::format("cannot write '{}'", target_.string()));
    }
    AtomicFile(const AtomicFile&) = delete;
    AtomicFile& operator=(const AtomicFile&) = delete;
    ~AtomicFile() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            fs::remove(tmp_, ec);
        }
    }

    void write(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) throw IoError(fmt::format("write to '{}' failed", tmp_.string()));
    }

    void commit() {
        out_.close();
        if (!out_) throw IoError(fmt::format("closing '{}' failed", tmp_.string()));
        std::error_code ec;
        fs::rename(tmp_, target_, ec);
        if (ec) throw IoError(fmt::format("cannot move output into '{}': {}", target_.string(), ec.message()));
        committed_ = true;
    }

private:
    fs::path target_;
    fs::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

void write_header_length(AtomicFile& f, std::uint64_t len) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(len >> (8 * i));
    f.write(b, 8);
}

} // namespace

Checkpoint open_checkpoint(const fs::path& path) {
    std::error_code ec;
    const auto file_size = fs::file_size(path, ec);
    if (ec) throw IoError(fmt::format("cannot open '{}': {}", path.string(), ec.message()));
    if (file_size < 8) throw ValidationError(fmt::format("malformed header: '{}' is shorter than 8 bytes", path.string()));

    auto in = open_binary(path);
    unsigned char len_bytes[8];
    read_exact(in, 0, reinterpret_cast<char*>(len_bytes), 8, path);
    const std::uint64_t header_len = read_u64_le(len_bytes);
    if (header_len > file_size - 8) {
        throw ValidationError(fmt::format("malformed header: length {} exceeds file size {} of '{}'", header_len,
                                          file_size, path.string()));
    }
    std::string text(header_len, '\0');
    read_exact(in, 8, text.data(), header_len, path);

    json header;
    try {
        header = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(fmt::format("header of '{}' is not valid JSON: {}", path.string(), e.what()));
    }
    if (!header.is_object()) throw ValidationError(fmt::format("header of '{}' is not a JSON object", path.string()));

    Checkpoint ckpt;
    ckpt.path_ = path;
    ckpt.data_offset_ = 8 + header_len;
    const std::uint64_t data_size = file_size - ckpt.data_offset_;

    for (const auto& [name, entry] : header.items()) {
        if (name == "__metadata__") {
            if (!entry.is_object()) throw ValidationError("malformed header: __metadata__ is not an object");
            for (const auto& [k, v] : entry.items()) {
                if (!v.is_string()) throw ValidationError(fmt::format("malformed header: metadata '{}' is not a string", k));
                ckpt.metadata_[k] = v.get<std::string>();
            }
            continue;
        }
        ckpt.index_.emplace(name, parse_entry(name, entry));
    }

    std::vector<const TensorInfo*> by_offset;
    for (const auto& [_, t] : ckpt.index_) by_offset.push_back(&t);
    std::sort(by_offset.begin(), by_offset.end(), [](const TensorInfo* a, const TensorInfo* b) {
        return a->begin != b->begin ? a->begin < b->begin : a->end < b->end;
    });
    std::uint64_t cursor = 0;
    const TensorInfo* prev = nullptr;
    for (const TensorInfo* t : by_offset) {
        if (t->end > data_size) {
            throw ValidationError(fmt::format("malformed header: '{}' ends at {} beyond data section of {} bytes",
                                              t->name, t->end, data_size));
        }
        if (prev != nullptr && t->begin < cursor) {
            throw ValidationError(fmt::format("malformed header: '{}' overlaps '{}'", t->name, prev->name));
        }
        cursor = std::max(cursor, t->end);
        prev = t;
        ckpt.payload_size_ += t->byte_size();
    }
    return ckpt;
}

std::vector<std::uint8_t> load_bytes(const Checkpoint& ckpt, const std::string& name) {
    const TensorInfo& t = ckpt.info(name);
    std::vector<std::uint8_t> bytes(t.byte_size());
    auto in = open_binary(ckpt.path());
    read_exact(in, ckpt.data_offset() + t.begin, reinterpret_cast<char*>(bytes.data()), bytes.size(), ckpt.path());
    return bytes;
}

Matrix load_matrix(const Checkpoint& ckpt, const std::string& name) {
    const TensorInfo& t = ckpt.info(name);
    if (!t.is_matrix()) {
        throw ValidationError(fmt::format("'{}' has {} dimension(s); a matrix needs 2", name, t.shape.size()));
    }
    const auto raw = load_bytes(ckpt, name);
    const std::size_t n = t.element_count();
    std::vector<double> values(n);
    const auto& k = kernels::active();
    switch (t.dtype) {
    case Dtype::F64: std::memcpy(values.data(), raw.data(), raw.size()); break;
    case Dtype::F32: {
        std::vector<float> tmp(n);
        std::memcpy(tmp.data(), raw.data(), raw.size());
        k.decode_f32(tmp.data(), values.data(), n);
        break;
    }
    case Dtype::F16:
    case Dtype::BF16: {
        std::vector<std::uint16_t> tmp(n);
        std::memcpy(tmp.data(), raw.data(), raw.size());
        if (t.dtype == Dtype::F16) {
            k.decode_f16(tmp.data(), values.data(), n);
        } else {
            k.decode_bf16(tmp.data(), values.data(), n);
        }
        break;
    }
    }
    Matrix m(t.shape[0], t.shape[1], std::move(values));
    if (!m.all_finite()) throw ValidationError(fmt::format("'{}' contains non-finite values", name));
    return m;
}

WriteReport write_checkpoint(const Checkpoint& base, const std::map<std::string, Matrix>& edits, const fs::path& out,
                             const WriteOptions& options) {
    for (const auto& [name, m] : edits) {
        const TensorInfo& t = base.info(name);
        if (!t.is_matrix() || t.shape[0] != m.rows() || t.shape[1] != m.cols()) {
            throw ValidationError(fmt::format("edit for '{}' is {}x{} but the stored tensor has shape [{}]", name,
                                              m.rows(), m.cols(), fmt::join(t.shape, ",")));
        }
        if (!m.all_finite()) throw NumericalError(fmt::format("edit for '{}' has non-finite values", name));
    }

    // Encode edits up front so nothing is written if one of them fails.
    std::map<std::string, Encoded> encoded;
    for (const auto& [name, m] : edits) {
        const Dtype dt = options.force_f32 ? Dtype::F32 : base.info(name).dtype;
        encoded.emplace(name, encode(dt, m));
    }

    WriteReport report;
    report.path = out;
    json header = json::object();
    if (!base.metadata().empty()) header["__metadata__"] = base.metadata();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : base.index()) {
        const bool edited = edits.contains(name);
        const Dtype dt = edited && options.force_f32 ? Dtype::F32 : t.dtype;
        const std::uint64_t size = t.element_count() * dtype_size(dt);
        header[name] = header_entry(dt, t.shape, offset, offset + size);
        report.tensors.push_back({name, dt, edited, edited ? encoded.at(name).max_error : 0.0});
        offset += size;
    }
    report.payload_size = offset;

    const std::string text = serialize_header(header);
    AtomicFile file(out);
    write_header_length(file, text.size());
    file.write(text.data(), text.size());
    auto in = open_binary(base.path());
    std::vector<char> buffer;
    for (const auto& [name, t] : base.index()) {
        if (auto it = encoded.find(name); it != encoded.end()) {
            file.write(it->second.bytes.data(), it->second.bytes.size());
            continue;
        }
        buffer.resize(t.byte_size());
        read_exact(in, base.data_offset() + t.begin, buffer.data(), buffer.size(), base.path());
        file.write(buffer.data(), buffer.size());
    }
    file.commit();
    return report;
}

void write_new_checkpoint(const std::map<std::string, std::pair<Dtype, Matrix>>& tensors, const fs::path& out,
                          const std::map<std::string, std::string>& metadata) {
    json header = json::object();
    if (!metadata.empty()) header["__metadata__"] = metadata;
    std::vector<Encoded> payloads;
    std::uint64_t offset = 0;
    for (const auto& [name, entry] : tensors) {
        const auto& [dt, m] = entry;
        payloads.push_back(encode(dt, m));
        const std::uint64_t size = payloads.back().bytes.size();
        header[name] = header_entry(dt, {m.rows(), m.cols()}, offset, offset + size);
        offset += size;
    }
    const std::string text = serialize_header(header);
    AtomicFile file(out);
    write_header_length(file, text.size());
    file.write(text.data(), text.size());
    for (const auto& p : payloads) file.write(p.bytes.data(), p.bytes.size());
    file.commit();
}

} // namespace specsurg::store
