// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
// Emits splat PLY files from raw stored (pre-activation) values.
#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace fixture {

/// Stored fields of one record, in file order.
struct RawSplat {
    std::array<float, 3> xyz{};
    std::array<float, 3> normal{};
    std::array<float, 3> dc{};
    std::array<float, 45> rest{};
    float opacity = 0.0f;
    std::array<float, 3> scale{};
    std::array<float, 4> rot{1.0f, 0.0f, 0.0f, 0.0f};
};

inline std::vector<std::string> propertyNames() {
    std::vector<std::string> n = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    for (int i = 0; i < 45; ++i) {
        n.push_back("f_rest_" + std::to_string(i));
    }
    for (const char *s : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        n.emplace_back(s);
    }
    return n;
}

struct PlyOptions {
    /// Header count; negative uses the record count.
    long declaredCount = -1;
    /// Property left out of both the header and the records.
    std::string omit;
    std::string format = "binary_little_endian";
};

inline std::vector<std::uint8_t> makePly(const std::vector<RawSplat> &records, const PlyOptions &opt = {}) {
    const auto names = propertyNames();
    std::string hdr = "ply\nformat " + opt.format + " 1.0\ncomment fixture\n";
    hdr += "element vertex " + std::to_string(opt.declaredCount >= 0 ? opt.declaredCount
                                                                       : static_cast<long>(records.size())) +
           "\n";
    for (const auto &n : names) {
        if (n != opt.omit) {
            hdr += "property float " + n + "\n";
        }
    }
    hdr += "end_header\n";
    std::vector<std::uint8_t> out(hdr.begin(), hdr.end());
    for (const auto &r : records) {
        std::vector<float> v;
        v.insert(v.end(), r.xyz.begin(), r.xyz.end());
        v.insert(v.end(), r.normal.begin(), r.normal.end());
        v.insert(v.end(), r.dc.begin(), r.dc.end());
        v.insert(v.end(), r.rest.begin(), r.rest.end());
        v.push_back(r.opacity);
        v.insert(v.end(), r.scale.begin(), r.scale.end());
        v.insert(v.end(), r.rot.begin(), r.rot.end());
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == opt.omit) {
                continue;
            }
            std::uint8_t b[4];
            std::memcpy(b, &v[i], 4);
            out.insert(out.end(), b, b + 4);
        }
    }
    return out;
}

} // namespace fixture
