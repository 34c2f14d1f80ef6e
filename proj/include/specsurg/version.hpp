// Copyright 2026 The specsurg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace specsurg {
inline constexpr const char* kVersion = "0.3.0";
} // namespace specsurg
