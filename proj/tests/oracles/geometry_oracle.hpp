// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
// Exhaustive collision scan and direct pinhole projection.
#pragma once

#include "hallucam/dynamic_window.hpp"
#include "hallucam/world_model.hpp"

#include <array>
#include <cstdint>

namespace oracle {

/// Visits every voxel of the grid.
inline bool collisionExhaustive(const hallucam::OccupancyGrid &grid, const Eigen::Vector3d &c, double r) {
    const auto &d = grid.dims();
    for (std::uint32_t z = 0; z < d[2]; ++z) {
        for (std::uint32_t y = 0; y < d[1]; ++y) {
            for (std::uint32_t x = 0; x < d[0]; ++x) {
                const hallucam::VoxelIndex v{x, y, z};
                if (!grid.occupied(v)) {
                    continue;
                }
                const Eigen::Vector3d center =
                    grid.origin() + (Eigen::Vector3d(x, y, z) + Eigen::Vector3d::Constant(0.5)) * grid.voxelSize();
                if ((center - c).squaredNorm() <= r * r) {
                    return true;
                }
            }
        }
    }
    return false;
}

/// Window-plane point (x, y, 0) lifted to world, moved into the camera and
/// projected through the pinhole.
inline Eigen::Vector2d projectPlanePoint(const hallucam::DynamicWindow &w, const Eigen::Vector2d &xy,
                                         const hallucam::Pose6D &cameraPose, const hallucam::CameraIntrinsics &K) {
    const Eigen::Vector3d world = w.worldToWindow.inverse() * Eigen::Vector3d(xy.x(), xy.y(), 0.0);
    const Eigen::Vector3d cam = cameraPose.orientation.normalized().conjugate() * (world - cameraPose.position);
    return Eigen::Vector2d(K.fx * cam.x() / cam.z() + K.cx, K.fy * cam.y() / cam.z() + K.cy);
}

/// Hand rectangle from its definition: a bar of length L and width w from the
/// pivot along angle theta.
inline std::array<Eigen::Vector2d, 4> handRectangle(double L, double width, double theta) {
    const Eigen::Vector2d a(std::cos(theta), std::sin(theta));
    const Eigen::Vector2d n(-a.y(), a.x());
    const double h = 0.5 * width;
    return {-h * n, L * a - h * n, L * a + h * n, h * n};
}

} // namespace oracle
