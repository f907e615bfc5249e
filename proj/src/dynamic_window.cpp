// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/dynamic_window.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/LU>

namespace hallucam {

void DynamicWindow::validate() const {
    if (!isOrthonormal(worldToWindow.linear())) {
        throw std::invalid_argument("dynamic window: pose rotation is not orthonormal");
    }
    if (!(apertureHalf.array() > 0.0).all()) {
        throw std::invalid_argument("dynamic window: aperture half-extents must be positive");
    }
    if (!(frameWidth >= 0.0)) {
        throw std::invalid_argument("dynamic window: frame_width must be non-negative");
    }
    if (!(handLength > 0.0) || handLength > apertureHalf.minCoeff()) {
        throw std::invalid_argument("dynamic window: hand_length must be in (0, min aperture half-extent]");
    }
    if (!(handWidth > 0.0)) {
        throw std::invalid_argument("dynamic window: hand_width must be positive");
    }
    if (!std::isfinite(omega) || !std::isfinite(theta0)) {
        throw std::invalid_argument("dynamic window: omega and theta0 must be finite");
    }
}

double handAngle(const DynamicWindow &w, double t) {
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    double a = std::fmod(w.theta0 + w.omega * t, kTwoPi);
    if (a < 0.0) {
        a += kTwoPi;
    }
    return a >= kTwoPi ? 0.0 : a;
}

bool pointOnHand(const DynamicWindow &w, double t, const Eigen::Vector2d &p) {
    const double a = handAngle(w, t);
    const double c = std::cos(a), s = std::sin(a);
    const double along = c * p.x() + s * p.y();
    const double across = -s * p.x() + c * p.y();
    return along >= 0.0 && along <= w.handLength && std::abs(across) <= 0.5 * w.handWidth;
}

bool pointOnFrame(const DynamicWindow &w, const Eigen::Vector2d &p) {
    const double ax = w.apertureHalf.x(), ay = w.apertureHalf.y();
    const bool insideOuter = std::abs(p.x()) <= ax + w.frameWidth && std::abs(p.y()) <= ay + w.frameWidth;
    const bool insideAperture = std::abs(p.x()) < ax && std::abs(p.y()) < ay;
    return insideOuter && !insideAperture;
}

std::array<Eigen::Vector2d, 4> handCorners(const DynamicWindow &w, double t) {
    const double a = handAngle(w, t);
    const Eigen::Vector2d along(std::cos(a), std::sin(a));
    const Eigen::Vector2d across(-along.y(), along.x());
    const double h = 0.5 * w.handWidth;
    return {-h * across, w.handLength * along - h * across, w.handLength * along + h * across, h * across};
}

bool DynamicOccupancy::contains(const VoxelIndex &v) const {
    return std::binary_search(voxels.begin(), voxels.end(), v);
}

Eigen::Vector3d DynamicOccupancy::voxelCenterWorld(const VoxelIndex &v) const {
    const Eigen::Vector3d local(static_cast<double>(v.x) * voxelSize, static_cast<double>(v.y) * voxelSize,
                                static_cast<double>(v.z) * voxelSize);
    return worldToWindow.inverse() * local;
}

namespace {

bool voxelOccupied(const DynamicWindow &w, double t, double vs, std::int64_t i, std::int64_t j) {
    const Eigen::Vector2d c(static_cast<double>(i) * vs, static_cast<double>(j) * vs);
    return pointOnFrame(w, c) || pointOnHand(w, t, c);
}

std::int64_t outerIndexBound(double halfExtent, double vs) {
    return static_cast<std::int64_t>(std::ceil(halfExtent / vs));
}

} // namespace

DynamicOccupancy dynamicOccupancy(const DynamicWindow &w, double t, double voxelSize) {
    if (!(voxelSize > 0.0)) {
        throw std::invalid_argument("voxel_size must be positive");
    }
    DynamicOccupancy occ;
    occ.voxelSize = voxelSize;
    occ.worldToWindow = w.worldToWindow;
    const std::int64_t nx = outerIndexBound(w.apertureHalf.x() + w.frameWidth, voxelSize);
    const std::int64_t ny = outerIndexBound(w.apertureHalf.y() + w.frameWidth, voxelSize);
    for (std::int64_t j = -ny; j <= ny; ++j) {
        for (std::int64_t i = -nx; i <= nx; ++i) {
            if (voxelOccupied(w, t, voxelSize, i, j)) {
                occ.voxels.push_back(VoxelIndex{i, j, 0});
            }
        }
    }
    std::sort(occ.voxels.begin(), occ.voxels.end());
    return occ;
}

bool checkDynamicCollision(const DynamicWindow &w, double t, double voxelSize, const Eigen::Vector3d &center,
                           double radius) {
    if (!(radius > 0.0) || !(voxelSize > 0.0)) {
        throw std::invalid_argument("radius and voxel_size must be positive");
    }
    const Eigen::Vector3d c = w.worldToWindow * center;
    if (std::abs(c.z()) > radius) {
        return false;
    }
    const std::int64_t nx = outerIndexBound(w.apertureHalf.x() + w.frameWidth, voxelSize);
    const std::int64_t ny = outerIndexBound(w.apertureHalf.y() + w.frameWidth, voxelSize);
    const auto i0 = std::max<std::int64_t>(-nx, static_cast<std::int64_t>(std::ceil((c.x() - radius) / voxelSize)));
    const auto i1 = std::min<std::int64_t>(nx, static_cast<std::int64_t>(std::floor((c.x() + radius) / voxelSize)));
    const auto j0 = std::max<std::int64_t>(-ny, static_cast<std::int64_t>(std::ceil((c.y() - radius) / voxelSize)));
    const auto j1 = std::min<std::int64_t>(ny, static_cast<std::int64_t>(std::floor((c.y() + radius) / voxelSize)));
    const double r2 = radius * radius;
    for (std::int64_t j = j0 - 1; j <= j1 + 1; ++j) {
        for (std::int64_t i = i0 - 1; i <= i1 + 1; ++i) {
            if (i < -nx || i > nx || j < -ny || j > ny) {
                continue;
            }
            const Eigen::Vector3d v(static_cast<double>(i) * voxelSize, static_cast<double>(j) * voxelSize, 0.0);
            if ((v - c).squaredNorm() <= r2 && voxelOccupied(w, t, voxelSize, i, j)) {
                return true;
            }
        }
    }
    return false;
}

Eigen::Matrix3d planeHomography(const Pose6D &cameraPose, const CameraIntrinsics &K, const DynamicWindow &w) {
    const Eigen::Isometry3d camFromWindow = cameraPose.toIsometry().inverse() * w.worldToWindow.inverse();
    Eigen::Matrix3d Km;
    Km << K.fx, 0.0, K.cx, //
        0.0, K.fy, K.cy,   //
        0.0, 0.0, 1.0;
    Eigen::Matrix3d Rt;
    Rt.col(0) = camFromWindow.linear().col(0);
    Rt.col(1) = camFromWindow.linear().col(1);
    Rt.col(2) = camFromWindow.translation();
    return Km * Rt;
}

FrameRGBD overlayHand(const FrameRGBD &frame, const Pose6D &cameraPose, const CameraIntrinsics &K,
                      const DynamicWindow &w, double t, const OverlaySettings &settings) {
    FrameRGBD out = frame;
    const Eigen::Isometry3d camFromWindow = cameraPose.toIsometry().inverse() * w.worldToWindow.inverse();
    const Eigen::Vector3d r1 = camFromWindow.linear().col(0);
    const Eigen::Vector3d r2 = camFromWindow.linear().col(1);
    const Eigen::Vector3d tr = camFromWindow.translation();
    auto camZ = [&](const Eigen::Vector2d &p) { return r1.z() * p.x() + r2.z() * p.y() + tr.z(); };

    const auto corners = handCorners(w, t);
    int inFront = 0;
    for (const auto &c : corners) {
        inFront += camZ(c) > K.near ? 1 : 0;
    }
    if (inFront == 0) {
        return out;
    }

    const Eigen::Matrix3d H = planeHomography(cameraPose, K, w);
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(H);
    if (!lu.isInvertible()) {
        return out; // camera centre lies in the window plane
    }
    const Eigen::Matrix3d Hinv = lu.inverse();

    int u0 = 0, u1 = frame.width - 1, v0 = 0, v1 = frame.height - 1;
    if (inFront == 4) {
        double minU = 1e300, maxU = -1e300, minV = 1e300, maxV = -1e300;
        for (const auto &c : corners) {
            const Eigen::Vector3d p = H * c.homogeneous();
            minU = std::min(minU, p.x() / p.z());
            maxU = std::max(maxU, p.x() / p.z());
            minV = std::min(minV, p.y() / p.z());
            maxV = std::max(maxV, p.y() / p.z());
        }
        const double wMax = frame.width - 1, hMax = frame.height - 1;
        u0 = static_cast<int>(std::floor(std::clamp(minU, 0.0, wMax + 1.0)));
        u1 = static_cast<int>(std::ceil(std::clamp(maxU, -1.0, wMax)));
        v0 = static_cast<int>(std::floor(std::clamp(minV, 0.0, hMax + 1.0)));
        v1 = static_cast<int>(std::ceil(std::clamp(maxV, -1.0, hMax)));
    }
    const bool writeDepth = out.hasDepth();
    for (int v = v0; v <= v1; ++v) {
        for (int u = u0; u <= u1; ++u) {
            const Eigen::Vector3d q = Hinv * Eigen::Vector3d(u, v, 1.0);
            if (q.z() == 0.0) {
                continue;
            }
            const Eigen::Vector2d p(q.x() / q.z(), q.y() / q.z());
            const double z = camZ(p);
            if (!(z >= K.near && z <= K.far) || !pointOnHand(w, t, p)) {
                continue;
            }
            const std::size_t idx = static_cast<std::size_t>(v) * static_cast<std::size_t>(frame.width) +
                                    static_cast<std::size_t>(u);
            if (writeDepth) {
                const float d = out.depth[idx];
                if (d != 0.0f && static_cast<double>(d) <= z) {
                    continue; // scene content occludes the hand
                }
                out.depth[idx] = static_cast<float>(z);
            }
            for (int c = 0; c < 3; ++c) {
                out.rgb[idx * 3 + static_cast<std::size_t>(c)] = settings.handColor[static_cast<std::size_t>(c)];
            }
        }
    }
    return out;
}

} // namespace hallucam
