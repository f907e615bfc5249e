// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "hallucam/renderer.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hallucam {

/// 8-bit PNG with 1 (gray) or 3 (RGB) channels, fixed compression settings and
/// no timestamp chunk so equal pixels give equal bytes.
std::vector<std::uint8_t> encodePng(std::span<const std::uint8_t> pixels, int width, int height, int channels);
void writePng(const std::filesystem::path &path, std::span<const std::uint8_t> pixels, int width, int height,
              int channels);

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

DecodedPng decodePng(std::span<const std::uint8_t> bytes);

/// [near, far] maps linearly to [255, 0]; invalid (0) pixels stay 0.
std::vector<std::uint8_t> depthToGray(std::span<const float> depth, double near, double far);

} // namespace hallucam
