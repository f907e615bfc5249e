// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "hallucam/geometry.hpp"
#include "hallucam/splat_scene.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hallucam {

/// Pinhole camera. Pixel (u, v) samples image-plane coordinate (u, v).
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
    double near = 0.05;
    double far = 100.0;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    std::size_t pixelCount() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

struct SensorSpec {
    std::string id;
    CameraIntrinsics intrinsics;
    /// Maps body-frame points into the camera frame.
    Eigen::Isometry3d bodyToCamera = Eigen::Isometry3d::Identity();
};

struct SensorRig {
    std::vector<SensorSpec> sensors;

    void validate() const;
};

struct FrameRGBD {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // width * height * 3, row-major
    std::vector<float> depth;       // width * height meters, 0.0 = invalid
    Pose6D poseUsed;
    std::uint64_t timestampNs = 0;
    std::uint32_t seq = 0;

    bool hasDepth() const { return !depth.empty(); }
};

struct RenderSettings {
    float alphaMax = 0.99f;
    float alphaMin = 1.0f / 255.0f;
    float transmittanceMin = 1e-4f;
    float depthAlphaMin = 0.5f;
    float dilation = 0.3f;
    Eigen::Vector3f background = Eigen::Vector3f::Zero();
    /// 0 picks std::thread::hardware_concurrency().
    unsigned threads = 0;
};

struct ProjectedGaussian {
    Eigen::Vector2d center;
    Eigen::Matrix2d cov;
    double depth = 0.0;
    /// Half-extents (pixels) of the box outside which alpha < alphaMin.
    Eigen::Vector2d extent;
};

/// Perspective projection of one Gaussian. Returns nullopt when culled:
/// outside [near, far] or the footprint that can reach alphaMin lies
/// entirely outside the image.
std::optional<ProjectedGaussian> projectGaussian(const Gaussian3D &g, const Eigen::Isometry3d &worldToCamera,
                                                 const CameraIntrinsics &K, const RenderSettings &settings = {});

/// View-dependent colour: clamp(0.5 + sum_lm sh[lm] * Y_lm(dir), 0, 1).
Eigen::Vector3f evalShColor(const ShCoeffs &sh, const Eigen::Vector3f &viewDir);

/// Un-quantised render result, for consumers that need linear colour.
struct RenderImage {
    int width = 0;
    int height = 0;
    std::vector<float> color; // width * height * 3
    std::vector<float> depth; // 0.0 = invalid
    std::vector<float> alpha; // accumulated opacity 1 - T
};

/// Tiled front-to-back rasteriser over a scene whose per-Gaussian covariances
/// are computed once at construction. The scene must outlive the renderer.
class SplatRenderer {
public:
    explicit SplatRenderer(const SplatScene &scene);

    /// cameraPose maps camera -> world; camera axes are x-right, y-down, z-forward.
    RenderImage renderLinear(const Pose6D &cameraPose, const CameraIntrinsics &K,
                             const RenderSettings &settings = {}) const;
    FrameRGBD render(const Pose6D &cameraPose, const CameraIntrinsics &K, const RenderSettings &settings = {}) const;
    std::vector<FrameRGBD> renderRig(const Pose6D &bodyPose, const SensorRig &rig, const RenderSettings &settings = {},
                                     std::uint32_t seq = 0, std::uint64_t timestampNs = 0) const;

    const SplatScene &scene() const { return *mScene; }

private:
    const SplatScene *mScene;
    std::vector<std::array<double, 6>> mCovWorld; // xx xy xz yy yz zz
};

RenderImage renderLinear(const SplatScene &scene, const Pose6D &cameraPose, const CameraIntrinsics &K,
                         const RenderSettings &settings = {});

FrameRGBD render(const SplatScene &scene, const Pose6D &cameraPose, const CameraIntrinsics &K,
                 const RenderSettings &settings = {});

/// One frame per sensor, all stamped with the same seq and timestamp.
std::vector<FrameRGBD> renderRig(const SplatScene &scene, const Pose6D &bodyPose, const SensorRig &rig,
                                 const RenderSettings &settings = {}, std::uint32_t seq = 0,
                                 std::uint64_t timestampNs = 0);

std::uint8_t quantizeChannel(float c);
FrameRGBD toFrame(const RenderImage &image, const Pose6D &poseUsed);

} // namespace hallucam
