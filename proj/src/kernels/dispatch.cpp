// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"

namespace specsurg::kernels {
namespace {

const KernelTable* detect_simd() {
#if defined(SPECSURG_HAVE_AVX2)
    __builtin_cpu_init();
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma") && __builtin_cpu_supports("f16c")) {
        return &detail::kAvx2Table;
    }
    return nullptr;
#elif defined(SPECSURG_HAVE_NEON)
    return &detail::kNeonTable;
#else
    return nullptr;
#endif
}

const KernelTable* initial_table() {
    const char* env = std::getenv("SPECSURG_KERNELS");
    if (env != nullptr && std::string(env) == "scalar") return &detail::kScalarTable;
    const KernelTable* v = detect_simd();
    return v != nullptr ? v : &detail::kScalarTable;
}

std::atomic<const KernelTable*>& current() {
    static std::atomic<const KernelTable*> table{initial_table()};
    return table;
}

} // namespace

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

const KernelTable& scalar() { return detail::kScalarTable; }

const KernelTable* simd() {
    static const KernelTable* table = detect_simd();
    return table;
}

bool select(std::string_view name) {
    if (name == "scalar") {
        current().store(&detail::kScalarTable);
        return true;
    }
    const KernelTable* v = simd();
    if (name == "auto") {
        current().store(v != nullptr ? v : &detail::kScalarTable);
        return true;
    }
    if (v != nullptr && name == v->name) {
        current().store(v);
        return true;
    }
    return false;
}

} // namespace specsurg::kernels
