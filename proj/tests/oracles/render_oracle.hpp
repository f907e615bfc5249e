// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force reference renderer: per pixel, every Gaussian, double precision,
// no tiling and no early termination.
#pragma once

#include "hallucam/renderer.hpp"
#include "hallucam/splat_scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace oracle {

struct OracleImage {
    int width = 0;
    int height = 0;
    std::vector<double> color;
    std::vector<double> depth;
};

inline double realSh(int l, int m, double theta, double phi) {
    if (m == 0) {
        return std::sph_legendre(l, 0, theta);
    }
    const double y = std::sph_legendre(l, std::abs(m), theta);
    return m > 0 ? std::sqrt(2.0) * y * std::cos(m * phi) : std::sqrt(2.0) * y * std::sin(-m * phi);
}

/// Real SH basis ordered l*l + l + m, with the Condon-Shortley phase kept.
inline double shColor(const hallucam::ShCoeffs &sh, int channel, const Eigen::Vector3d &dir) {
    const double theta = std::acos(std::clamp(dir.z(), -1.0, 1.0));
    const double phi = std::atan2(dir.y(), dir.x());
    double c = 0.0;
    for (int l = 0; l <= 3; ++l) {
        for (int m = -l; m <= l; ++m) {
            c += sh(l * l + l + m, channel) * realSh(l, m, theta, phi);
        }
    }
    return std::clamp(c + 0.5, 0.0, 1.0);
}

inline Eigen::Matrix3d rotationFromQuat(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    w /= n, x /= n, y /= n, z /= n;
    Eigen::Matrix3d R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y), //
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),  //
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

inline OracleImage renderBruteForce(const hallucam::SplatScene &scene, const hallucam::Pose6D &cameraPose,
                                    const hallucam::CameraIntrinsics &K, const hallucam::RenderSettings &s = {}) {
    const Eigen::Quaterniond &q = cameraPose.orientation;
    const Eigen::Matrix3d Rcw = rotationFromQuat(q.w(), q.x(), q.y(), q.z()); // camera -> world
    const Eigen::Matrix3d W = Rcw.transpose();
    const Eigen::Vector3d C = cameraPose.position;

    struct Item {
        double z;
        std::size_t index;
        double u, v;
        Eigen::Matrix2d conic;
        double opacity;
        Eigen::Vector3d rgb;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto &g = scene.gaussians()[i];
        const Eigen::Vector3d mean = g.mean.cast<double>();
        const Eigen::Vector3d pc = W * (mean - C);
        if (pc.z() < K.near || pc.z() > K.far || g.opacity < s.alphaMin) {
            continue;
        }
        const Eigen::Matrix3d R = rotationFromQuat(g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z());
        const Eigen::Vector3d sc = g.scale.cast<double>();
        const Eigen::Matrix3d S3 = R * sc.cwiseProduct(sc).asDiagonal() * R.transpose();
        Eigen::Matrix<double, 2, 3> J;
        J << K.fx / pc.z(), 0.0, -K.fx * pc.x() / (pc.z() * pc.z()), //
            0.0, K.fy / pc.z(), -K.fy * pc.y() / (pc.z() * pc.z());
        Eigen::Matrix2d S2 = J * W * S3 * W.transpose() * J.transpose();
        S2(0, 0) += s.dilation;
        S2(1, 1) += s.dilation;
        Item it;
        it.z = pc.z();
        it.index = i;
        it.u = K.cx + K.fx * pc.x() / pc.z();
        it.v = K.cy + K.fy * pc.y() / pc.z();
        it.conic = S2.inverse();
        it.opacity = g.opacity;
        const Eigen::Vector3d dir = (mean - C).normalized();
        it.rgb = Eigen::Vector3d(shColor(g.sh, 0, dir), shColor(g.sh, 1, dir), shColor(g.sh, 2, dir));
        items.push_back(it);
    }
    std::stable_sort(items.begin(), items.end(), [](const Item &a, const Item &b) { return a.z < b.z; });

    OracleImage img;
    img.width = K.width;
    img.height = K.height;
    img.color.assign(K.pixelCount() * 3, 0.0);
    img.depth.assign(K.pixelCount(), 0.0);
    for (int py = 0; py < K.height; ++py) {
        for (int px = 0; px < K.width; ++px) {
            double T = 1.0;
            Eigen::Vector3d c = Eigen::Vector3d::Zero();
            double zw = 0.0, wsum = 0.0;
            for (const Item &it : items) {
                const Eigen::Vector2d d(px - it.u, py - it.v);
                const double alpha = std::min<double>(s.alphaMax, it.opacity * std::exp(-0.5 * d.dot(it.conic * d)));
                if (alpha < s.alphaMin) {
                    continue;
                }
                const double w = alpha * T;
                c += w * it.rgb;
                zw += w * it.z;
                wsum += w;
                T *= 1.0 - alpha;
            }
            const std::size_t k = static_cast<std::size_t>(py) * K.width + px;
            for (int ch = 0; ch < 3; ++ch) {
                img.color[k * 3 + ch] = c[ch] + T * s.background[ch];
            }
            img.depth[k] = wsum >= s.depthAlphaMin ? std::clamp(zw / wsum, K.near, K.far) : 0.0;
        }
    }
    return img;
}

} // namespace oracle
