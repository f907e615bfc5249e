// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace hallucam {

/// Degree 0..3 spherical-harmonic coefficients, one row per basis function, one
/// column per RGB channel.
using ShCoeffs = Eigen::Matrix<float, 16, 3, Eigen::RowMajor>;

/// One scene primitive with activations already applied: scale is a per-axis
/// standard deviation in meters and opacity lies in (0, 1).
struct Gaussian3D {
    Eigen::Vector3f mean = Eigen::Vector3f::Zero();
    Eigen::Vector3f scale = Eigen::Vector3f::Ones();
    Eigen::Quaternionf rotation = Eigen::Quaternionf::Identity();
    float opacity = 0.5f;
    ShCoeffs sh = ShCoeffs::Zero();

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;
};

struct Aabb {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Zero();

    bool contains(const Eigen::Vector3d &p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
    Eigen::Vector3d extent() const { return max - min; }
};

/// Immutable collection of Gaussians plus the box enclosing every mean.
class SplatScene {
public:
    SplatScene() = default;
    explicit SplatScene(std::vector<Gaussian3D> gaussians);

    const std::vector<Gaussian3D> &gaussians() const { return mGaussians; }
    const Aabb &aabb() const { return mAabb; }
    std::size_t size() const { return mGaussians.size(); }
    bool empty() const { return mGaussians.empty(); }

private:
    std::vector<Gaussian3D> mGaussians;
    Aabb mAabb;
};

/// Number of 32-bit floats per vertex record in the canonical export layout.
inline constexpr std::size_t kSplatRecordFloats = 62;

/// Reads a binary little-endian PLY splat export. Stored scales are log-space,
/// stored opacities logit-space and rotations (w, x, y, z); all are activated here.
SplatScene loadScene(const std::filesystem::path &path);

/// Parses an in-memory PLY image; same contract as loadScene.
SplatScene parseScene(const std::vector<std::uint8_t> &bytes);

/// Writes the canonical 62-float layout (inverse activations applied).
void writeScene(const std::filesystem::path &path, const SplatScene &scene);
std::vector<std::uint8_t> serializeScene(const SplatScene &scene);

/// Means of Gaussians with opacity >= opacityMin, in scene order.
std::vector<Eigen::Vector3d> exportPointcloud(const SplatScene &scene, double opacityMin);

/// World-space covariance R * diag(scale)^2 * R^T.
Eigen::Matrix3d covarianceOf(const Gaussian3D &g);

/// Options for the procedural benchmark scene.
struct SyntheticSceneOptions {
    std::size_t count = 50000;
    std::uint64_t seed = 1;
    Eigen::Vector3d roomMin = Eigen::Vector3d(0.0, 0.0, 0.0);
    Eigen::Vector3d roomMax = Eigen::Vector3d(11.0, 4.5, 3.65);
    float minScale = 0.02f;
    float maxScale = 0.06f;
    /// Fraction of Gaussians placed in free-standing pillars rather than on walls.
    double obstacleFraction = 0.2;
};

/// A room whose walls, floor and ceiling are covered in small coloured splats,
/// plus a few pillar obstacles.
SplatScene makeSyntheticScene(const SyntheticSceneOptions &options);

} // namespace hallucam
