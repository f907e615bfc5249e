// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace hallucam {

struct VoxelIndex {
    std::int64_t x = 0;
    std::int64_t y = 0;
    std::int64_t z = 0;

    auto operator<=>(const VoxelIndex &) const = default;
};

/// Dense axis-aligned occupancy bitmap. Voxel (i, j, k) covers
/// origin + [i, i+1) * voxelSize on each axis; storage is x-fastest.
class OccupancyGrid {
public:
    OccupancyGrid(const Eigen::Vector3d &origin, double voxelSize, const std::array<std::uint32_t, 3> &dims);

    const Eigen::Vector3d &origin() const { return mOrigin; }
    double voxelSize() const { return mVoxelSize; }
    const std::array<std::uint32_t, 3> &dims() const { return mDims; }
    std::size_t voxelCount() const;
    std::size_t occupiedCount() const;

    bool inBounds(const VoxelIndex &v) const;
    /// Voxel containing p, or nullopt when p lies outside the grid.
    std::optional<VoxelIndex> voxelOf(const Eigen::Vector3d &p) const;
    Eigen::Vector3d voxelCenter(const VoxelIndex &v) const;
    std::size_t linearIndex(const VoxelIndex &v) const;

    bool occupied(const VoxelIndex &v) const;
    void setOccupied(const VoxelIndex &v, bool value = true);

    /// Flat export: origin f64x3, voxel_size f64, dims u32x3, then
    /// ceil(N/8) bytes of bit-packed occupancy (bit i%8 of byte i/8), x-fastest.
    std::vector<std::uint8_t> serialize() const;
    static OccupancyGrid deserialize(std::span<const std::uint8_t> bytes);
    void save(const std::filesystem::path &path) const;
    static OccupancyGrid load(const std::filesystem::path &path);

    bool operator==(const OccupancyGrid &o) const = default;

private:
    Eigen::Vector3d mOrigin;
    double mVoxelSize;
    std::array<std::uint32_t, 3> mDims;
    std::vector<std::uint64_t> mBits;
};

/// Grid spanning the points' bounding box inflated by `padding`; a voxel is
/// occupied iff at least one point falls inside it.
OccupancyGrid buildGrid(std::span<const Eigen::Vector3d> points, double voxelSize, double padding);

/// True iff some occupied voxel has its centre within `radius` of `center`.
/// Only voxels inside the sphere's bounding box are visited.
bool checkCollision(const OccupancyGrid &grid, const Eigen::Vector3d &center, double radius);

struct Geofence {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Zero();

    void validate() const;
};

enum class GeofenceStatus { Inside, Violation };

/// Closed box test: points on a face count as inside.
GeofenceStatus checkGeofence(const Geofence &fence, const Eigen::Vector3d &p);

} // namespace hallucam
