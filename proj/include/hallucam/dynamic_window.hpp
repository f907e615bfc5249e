// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "hallucam/geometry.hpp"
#include "hallucam/renderer.hpp"
#include "hallucam/world_model.hpp"

#include <array>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hallucam {

/// Rectangular window in the plane z = 0 of its own frame, with a frame border
/// around the aperture and a clock hand pivoting at the centre.
///
/// Plane coordinates (x, y) are measured in the window frame; the hand angle
/// runs from +x towards +y.
struct DynamicWindow {
    Eigen::Isometry3d worldToWindow = Eigen::Isometry3d::Identity();
    Eigen::Vector2d apertureHalf = Eigen::Vector2d(0.5, 0.5);
    double frameWidth = 0.1;
    double handLength = 0.4;
    double handWidth = 0.08;
    double omega = 1.0;
    double theta0 = 0.0;

    void validate() const;
};

/// theta0 + omega * t wrapped to [0, 2 pi).
double handAngle(const DynamicWindow &w, double t);

bool pointOnHand(const DynamicWindow &w, double t, const Eigen::Vector2d &planeXY);
bool pointOnFrame(const DynamicWindow &w, const Eigen::Vector2d &planeXY);

/// Corners of the hand rectangle in plane coordinates, counter-clockwise.
std::array<Eigen::Vector2d, 4> handCorners(const DynamicWindow &w, double t);

/// Occupancy of the window at time t, as voxels of a lattice attached to the
/// window frame. Voxel (i, j, k) is centred at (i, j, k) * voxelSize in window
/// coordinates; only the k = 0 layer (the plane) is populated.
struct DynamicOccupancy {
    double voxelSize = 0.1;
    Eigen::Isometry3d worldToWindow = Eigen::Isometry3d::Identity();
    std::vector<VoxelIndex> voxels; // sorted

    bool contains(const VoxelIndex &v) const;
    Eigen::Vector3d voxelCenterWorld(const VoxelIndex &v) const;
};

/// Occupied iff the voxel centre lies on the frame border or on the hand.
DynamicOccupancy dynamicOccupancy(const DynamicWindow &w, double t, double voxelSize);

/// Sphere test against dynamicOccupancy(w, t, voxelSize) without materialising it.
bool checkDynamicCollision(const DynamicWindow &w, double t, double voxelSize, const Eigen::Vector3d &center,
                           double radius);

/// Plane-induced homography H = K [r1 r2 t] mapping window-plane (x, y, 1) to
/// pixels, for a camera with the given camera -> world pose.
Eigen::Matrix3d planeHomography(const Pose6D &cameraPose, const CameraIntrinsics &K, const DynamicWindow &w);

struct OverlaySettings {
    std::array<std::uint8_t, 3> handColor = {230, 40, 40};
};

/// Paints the hand at time t into a frame rendered from cameraPose. Pixels are
/// recoloured, and their depth replaced, only where the hand plane is in front
/// of the camera and nearer than the rendered depth (or rendered depth is invalid).
FrameRGBD overlayHand(const FrameRGBD &frame, const Pose6D &cameraPose, const CameraIntrinsics &K,
                      const DynamicWindow &w, double t, const OverlaySettings &settings = {});

} // namespace hallucam
